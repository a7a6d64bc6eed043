use serde::{Deserialize, Serialize};

use crate::error::{Result, SaeError};
use crate::numerics::{min_max_slice, DenseVector};

/// How vacuity and dissonance are weighted across rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// Linear shift from pure vacuity at round 1 to pure dissonance at round T.
    Dynamic,
    VacuityOnly,
    DissonanceOnly,
    StaticBalanced,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 4] = [
        ScheduleKind::Dynamic,
        ScheduleKind::VacuityOnly,
        ScheduleKind::DissonanceOnly,
        ScheduleKind::StaticBalanced,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Dynamic => "dynamic",
            ScheduleKind::VacuityOnly => "vacuity_only",
            ScheduleKind::DissonanceOnly => "dissonance_only",
            ScheduleKind::StaticBalanced => "static_balanced",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// `(w_v, w_d)` for round `t` of `rounds`. A single-round run is pure vacuity.
pub fn schedule_weights(t: usize, rounds: usize, kind: ScheduleKind) -> Result<(f64, f64)> {
    if rounds == 0 || t == 0 || t > rounds {
        return Err(SaeError::invalid(format!("round {t} outside 1..={rounds}")));
    }
    Ok(match kind {
        ScheduleKind::Dynamic if rounds == 1 => (1.0, 0.0),
        ScheduleKind::Dynamic => {
            let w_d = (t - 1) as f64 / (rounds - 1) as f64;
            (1.0 - w_d, w_d)
        }
        ScheduleKind::VacuityOnly => (1.0, 0.0),
        ScheduleKind::DissonanceOnly => (0.0, 1.0),
        ScheduleKind::StaticBalanced => (0.5, 0.5),
    })
}

/// `w_v · g(vac) + w_d · g(dis)` with `g` the min-max map over the given pool.
pub fn dual_factor_scores(
    vac: &DenseVector<f64>,
    dis: &DenseVector<f64>,
    t: usize,
    rounds: usize,
    kind: ScheduleKind,
) -> Result<DenseVector<f64>> {
    if vac.len() != dis.len() {
        return Err(SaeError::invalid(format!(
            "{} vacuities but {} dissonances",
            vac.len(),
            dis.len()
        )));
    }
    let (w_v, w_d) = schedule_weights(t, rounds, kind)?;
    let gv = min_max_slice(vac);
    let gd = min_max_slice(dis);
    Ok(DenseVector::from_vec_unchecked(
        gv.iter().zip(&gd).map(|(&v, &d)| w_v * v + w_d * d).collect(),
    ))
}
