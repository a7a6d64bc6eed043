use serde::{Deserialize, Serialize};

use super::schedule::ScheduleKind;
use crate::error::{Result, SaeError};
use crate::numerics::{check_probability, entropy_unchecked, DenseMatrix, DenseVector, SeededRng};

/// Acquisition strategy: evidential dual-factor scoring or a baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Sae(ScheduleKind),
    Random,
    Entropy,
    Margin,
    LeastConfidence,
    CoresetKcenter,
}

impl Strategy {
    pub const BASELINES: [Strategy; 5] = [
        Strategy::Random,
        Strategy::Entropy,
        Strategy::Margin,
        Strategy::LeastConfidence,
        Strategy::CoresetKcenter,
    ];

    /// Stable identifier used in output files, e.g. `sae_dynamic`.
    pub fn label(self) -> String {
        match self {
            Strategy::Sae(kind) => format!("sae_{}", kind.name()),
            other => other.family().to_string(),
        }
    }

    /// Strategy name without the schedule.
    pub fn family(self) -> &'static str {
        match self {
            Strategy::Sae(_) => "sae",
            Strategy::Random => "random",
            Strategy::Entropy => "entropy",
            Strategy::Margin => "margin",
            Strategy::LeastConfidence => "least_confidence",
            Strategy::CoresetKcenter => "coreset_kcenter",
        }
    }

    /// Builds a strategy from its family name and, for `sae`, a schedule.
    pub fn from_parts(family: &str, schedule: ScheduleKind) -> Option<Self> {
        Some(match family {
            "sae" => Strategy::Sae(schedule),
            "random" => Strategy::Random,
            "entropy" => Strategy::Entropy,
            "margin" => Strategy::Margin,
            "least_confidence" => Strategy::LeastConfidence,
            "coreset_kcenter" => Strategy::CoresetKcenter,
            _ => return None,
        })
    }

    pub fn is_evidential(self) -> bool {
        matches!(self, Strategy::Sae(_))
    }
}

/// One uncertainty score per probability row; `random` ignores the rows and
/// draws i.i.d. uniforms. Coreset and evidential strategies are scored
/// elsewhere.
pub fn baseline_scores(
    strategy: Strategy,
    probs: &DenseMatrix<f64>,
    rng: &mut SeededRng,
) -> Result<DenseVector<f64>> {
    let score_rows = |f: &dyn Fn(&[f64]) -> f64| -> Result<DenseVector<f64>> {
        let mut out = Vec::with_capacity(probs.rows());
        for (i, row) in probs.row_iter().enumerate() {
            check_probability(row).map_err(|e| SaeError::invalid(format!("probability row {i}: {e}")))?;
            out.push(f(row));
        }
        Ok(DenseVector::from_vec_unchecked(out))
    };
    match strategy {
        Strategy::Random => Ok(DenseVector::from_vec_unchecked(
            (0..probs.rows()).map(|_| rng.uniform()).collect(),
        )),
        Strategy::Entropy => score_rows(&|p| entropy_unchecked(p)),
        Strategy::LeastConfidence => score_rows(&|p| 1.0 - p.iter().copied().fold(0.0, f64::max)),
        Strategy::Margin => score_rows(&|p| {
            let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for &v in p {
                if v > first {
                    second = first;
                    first = v;
                } else if v > second {
                    second = v;
                }
            }
            1.0 - (first - second)
        }),
        Strategy::Sae(_) | Strategy::CoresetKcenter => Err(SaeError::invalid(format!(
            "{} is not a probability-based baseline",
            strategy.label()
        ))),
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Greedy farthest-point (k-center) selection of `n` of `candidates`.
///
/// Each pick is the candidate farthest from every labeled point and every
/// earlier pick; its score is that distance. With nothing labeled, the first
/// pick is the candidate farthest from the candidates' centroid.
pub fn kcenter_greedy(
    embeddings: &DenseMatrix<f64>,
    candidates: &[usize],
    labeled: &[usize],
    n: usize,
) -> Result<Vec<(usize, f64)>> {
    if n > candidates.len() {
        return Err(SaeError::invalid(format!(
            "cannot select {n} of {} candidates",
            candidates.len()
        )));
    }
    let mut nearest: Vec<f64> = candidates
        .iter()
        .map(|&c| {
            labeled
                .iter()
                .map(|&l| distance(embeddings.row(c), embeddings.row(l)))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    if labeled.is_empty() && !candidates.is_empty() {
        let d = embeddings.cols();
        let mut centroid = vec![0.0; d];
        for &c in candidates {
            centroid.iter_mut().zip(embeddings.row(c)).for_each(|(m, v)| *m += v);
        }
        centroid.iter_mut().for_each(|m| *m /= candidates.len() as f64);
        nearest = candidates
            .iter()
            .map(|&c| distance(embeddings.row(c), &centroid))
            .collect();
    }
    let mut taken = vec![false; candidates.len()];
    let mut picks = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best = None;
        for (pos, &dist) in nearest.iter().enumerate() {
            if taken[pos] {
                continue;
            }
            match best {
                Some((_, b)) if dist <= b => {}
                _ => best = Some((pos, dist)),
            }
        }
        let (pos, score) = best.expect("n does not exceed the candidate count");
        taken[pos] = true;
        picks.push((candidates[pos], score));
        if labeled.is_empty() && picks.len() == 1 {
            // Centroid distances only choose the first center.
            nearest.iter_mut().for_each(|v| *v = f64::INFINITY);
        }
        let center = embeddings.row(candidates[pos]);
        for (q, near) in nearest.iter_mut().enumerate() {
            if !taken[q] {
                *near = near.min(distance(embeddings.row(candidates[q]), center));
            }
        }
    }
    Ok(picks)
}


#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rows(r: &[&[f64]]) -> DenseMatrix<f64> {
        DenseMatrix::from_rows(&r.iter().map(|x| x.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn uniform_and_one_hot_rows() {
        let mut rng = SeededRng::new(0);
        let k = 4.0f64;
        let uniform = rows(&[&[0.25; 4]]);
        let e = baseline_scores(Strategy::Entropy, &uniform, &mut rng).unwrap();
        assert_abs_diff_eq!(e[0], k.ln(), epsilon = 1e-15);
        let lc = baseline_scores(Strategy::LeastConfidence, &uniform, &mut rng).unwrap();
        assert_abs_diff_eq!(lc[0], 1.0 - 1.0 / k, epsilon = 1e-15);

        let hot = rows(&[&[0.0, 1.0, 0.0]]);
        for s in [Strategy::Entropy, Strategy::LeastConfidence, Strategy::Margin] {
            assert_eq!(baseline_scores(s, &hot, &mut rng).unwrap()[0], 0.0);
        }
    }

    #[test]
    fn margin_and_entropy_agree_on_order() {
        let mut rng = SeededRng::new(0);
        let p = rows(&[&[0.6, 0.4], &[0.9, 0.1]]);
        let m = baseline_scores(Strategy::Margin, &p, &mut rng).unwrap();
        assert_abs_diff_eq!(m[0], 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(m[1], 0.2, epsilon = 1e-12);
        let e = baseline_scores(Strategy::Entropy, &p, &mut rng).unwrap();
        assert!(e[0] > e[1]);
    }

    #[test]
    fn invalid_rows_and_strategies_are_rejected() {
        let mut rng = SeededRng::new(0);
        let bad = rows(&[&[0.7, 0.7]]);
        assert!(baseline_scores(Strategy::Entropy, &bad, &mut rng).is_err());
        let ok = rows(&[&[0.5, 0.5]]);
        assert!(baseline_scores(Strategy::CoresetKcenter, &ok, &mut rng).is_err());
        assert!(baseline_scores(Strategy::Sae(ScheduleKind::Dynamic), &ok, &mut rng).is_err());
    }

    #[test]
    fn random_scores_are_seeded() {
        let p = rows(&[&[0.5, 0.5], &[0.5, 0.5], &[0.5, 0.5]]);
        let a = baseline_scores(Strategy::Random, &p, &mut SeededRng::new(3)).unwrap();
        let b = baseline_scores(Strategy::Random, &p, &mut SeededRng::new(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn kcenter_on_a_line() {
        let x = rows(&[&[0.0], &[1.0], &[2.0], &[10.0], &[11.0]]);
        let picks = kcenter_greedy(&x, &[1, 2, 3, 4], &[0], 2).unwrap();
        assert_eq!(picks, vec![(4, 11.0), (2, 2.0)]);

        // Nothing labeled: the centroid of {0, 1, 2, 10, 11} is 4.8.
        let picks = kcenter_greedy(&x, &[0, 1, 2, 3, 4], &[], 2).unwrap();
        assert_eq!(picks[0].0, 4);
        assert_abs_diff_eq!(picks[0].1, 6.2, epsilon = 1e-12);
        assert_eq!(picks[1], (0, 11.0));

        assert!(kcenter_greedy(&x, &[1], &[0], 2).is_err());
    }

    #[test]
    fn kcenter_ties_go_to_the_first_candidate() {
        let x = rows(&[&[0.0], &[-1.0], &[1.0]]);
        assert_eq!(kcenter_greedy(&x, &[1, 2], &[0], 1).unwrap(), vec![(1, 1.0)]);
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::BASELINES {
            assert_eq!(Strategy::from_parts(s.family(), ScheduleKind::Dynamic), Some(s));
        }
        assert_eq!(
            Strategy::from_parts("sae", ScheduleKind::VacuityOnly).unwrap().label(),
            "sae_vacuity_only"
        );
        assert_eq!(Strategy::from_parts("badge", ScheduleKind::Dynamic), None);
    }
}
