use serde::{Deserialize, Serialize};

use crate::error::{Result, SaeError};

/// Indices of the `n` largest scores, highest first; equal scores go to the
/// lower index.
pub fn select_batch(scores: &[f64], n: usize) -> Result<Vec<usize>> {
    if n > scores.len() {
        return Err(SaeError::invalid(format!(
            "cannot select {n} of {} candidates",
            scores.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(SaeError::invalid(format!("score {i} is NaN")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    let by_score = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    if n < order.len() {
        order.select_nth_unstable_by(n, by_score);
        order.truncate(n);
    }
    order.sort_unstable_by(by_score);
    Ok(order)
}

/// What the per-round fraction `ρ/T` is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetBasis {
    /// The pool size before round 1, giving a fixed total budget.
    #[default]
    Initial,
    /// The unlabeled pool remaining at each round.
    Current,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundPlan {
    pub rounds: usize,
    pub rho: f64,
    pub initial_pool_size: usize,
    pub basis: BudgetBasis,
}

impl RoundPlan {
    pub fn new(rounds: usize, rho: f64, initial_pool_size: usize) -> Result<Self> {
        let plan = Self {
            rounds,
            rho,
            initial_pool_size,
            basis: BudgetBasis::Initial,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(SaeError::invalid("at least one round is required"));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(SaeError::invalid(format!("rho must lie in (0, 1], got {}", self.rho)));
        }
        Ok(())
    }

    pub fn rho_t(&self) -> f64 {
        self.rho / self.rounds as f64
    }
}

/// `min(remaining, max(1, ⌊ρ_t · N⌋))` with `N` chosen by the plan's basis.
pub fn round_budget(plan: &RoundPlan, t: usize, remaining: usize) -> Result<usize> {
    plan.validate()?;
    if t == 0 || t > plan.rounds {
        return Err(SaeError::invalid(format!("round {t} outside 1..={}", plan.rounds)));
    }
    let base = match plan.basis {
        BudgetBasis::Initial => plan.initial_pool_size,
        BudgetBasis::Current => remaining,
    };
    // The slack keeps products such as 0.04 · 100 from flooring to 3.
    let raw = (plan.rho_t() * base as f64 + 1e-9).floor() as usize;
    Ok(raw.max(1).min(remaining))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn selection_examples() {
        assert_eq!(select_batch(&[0.1, 0.9, 0.5], 2).unwrap(), vec![1, 2]);
        assert_eq!(select_batch(&[0.3, 0.3, 0.3], 2).unwrap(), vec![0, 1]);
        assert_eq!(select_batch(&[0.2, 0.7, 0.7, 0.1], 4).unwrap(), vec![1, 2, 0, 3]);
        assert_eq!(select_batch(&[0.2], 0).unwrap(), Vec::<usize>::new());
        assert!(select_batch(&[0.2], 2).is_err());
        assert!(select_batch(&[f64::NAN, 0.2], 1).is_err());
    }

    #[test]
    fn budget_examples() {
        let plan = RoundPlan::new(5, 0.2, 100).unwrap();
        assert_eq!((1..=5).map(|t| round_budget(&plan, t, 100 - 4 * (t - 1)).unwrap()).sum::<usize>(), 20);
        let tiny = RoundPlan::new(5, 0.2, 7).unwrap();
        assert_eq!(round_budget(&tiny, 1, 7).unwrap(), 1);
        assert_eq!(round_budget(&plan, 5, 3).unwrap(), 3);

        let mut current = plan;
        current.basis = BudgetBasis::Current;
        assert_eq!(round_budget(&current, 2, 96).unwrap(), 3);

        assert!(RoundPlan::new(0, 0.2, 100).is_err());
        assert!(RoundPlan::new(5, 0.0, 100).is_err());
        assert!(RoundPlan::new(5, 1.5, 100).is_err());
        assert!(round_budget(&plan, 6, 100).is_err());
    }

    proptest! {
        #[test]
        fn selection_matches_full_sort(
            scores in prop::collection::vec(prop::sample::select(vec![0.0, 0.25, 0.5, 0.75, 1.0]), 1..40),
            n_raw in 0usize..40,
        ) {
            let n = n_raw % (scores.len() + 1);
            let picked = select_batch(&scores, n).unwrap();
            let mut all: Vec<usize> = (0..scores.len()).collect();
            all.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            prop_assert_eq!(picked, all[..n].to_vec());
        }

        #[test]
        fn fixed_budget_total_is_exact(n0 in 1usize..5000, rounds in 1usize..10, rho_pct in 1u32..=100) {
            let plan = RoundPlan::new(rounds, rho_pct as f64 / 100.0, n0).unwrap();
            let mut remaining = n0;
            let mut total = 0;
            for t in 1..=rounds {
                if remaining == 0 { break; }
                let b = round_budget(&plan, t, remaining).unwrap();
                prop_assert!(b >= 1 && b <= remaining);
                remaining -= b;
                total += b;
            }
            let per_round = ((rho_pct as usize * n0) / (100 * rounds)).max(1);
            prop_assert_eq!(total, (per_round * rounds).min(n0));
        }
    }
}
