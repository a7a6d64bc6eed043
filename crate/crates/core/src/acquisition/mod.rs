//! Acquisition scoring, the round-weight schedule, batch selection and the
//! active-learning round driver with a simulated oracle.

mod driver;
mod schedule;
mod scoring;
mod select;

pub use driver::{
    evidential_view, run_active_learning, Acquisition, AlConfig, AlState, EvidentialView, RoundContext,
    SeedRun, SelectionRecord,
};
pub use schedule::{dual_factor_scores, schedule_weights, ScheduleKind};
pub use scoring::{baseline_scores, kcenter_greedy, Strategy};
pub use select::{round_budget, select_batch, BudgetBasis, RoundPlan};
