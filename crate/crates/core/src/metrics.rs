//! Accuracy, negative log-likelihood, 15-bin expected calibration error and
//! the reliability-diagram export.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SaeError};
use crate::numerics::{argmax, check_probability, DenseMatrix};
use crate::scalar::Scalar;

pub const ECE_BINS: usize = 15;

/// Floor applied to the true-class probability before taking its log.
pub const NLL_PROB_FLOOR: f64 = 1e-12;

pub fn top1_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(SaeError::invalid(format!(
            "accuracy: {} predictions vs {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(SaeError::invalid("accuracy of an empty set"));
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

fn check_rows<T: Scalar>(probs: &DenseMatrix<T>, labels: &[usize]) -> Result<()> {
    if probs.rows() != labels.len() {
        return Err(SaeError::invalid(format!(
            "{} probability rows vs {} labels",
            probs.rows(),
            labels.len()
        )));
    }
    for (i, (row, &y)) in probs.row_iter().zip(labels).enumerate() {
        check_probability(row).map_err(|e| SaeError::invalid(format!("row {i}: {e}")))?;
        if y >= probs.cols() {
            return Err(SaeError::invalid(format!(
                "label {y} out of range for {} classes",
                probs.cols()
            )));
        }
    }
    Ok(())
}

/// Mean of `−log max(p_{i,y_i}, 1e-12)`.
pub fn nll<T: Scalar>(probs: &DenseMatrix<T>, labels: &[usize]) -> Result<T> {
    check_rows(probs, labels)?;
    let floor = T::of(NLL_PROB_FLOOR);
    let total: T = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -probs.get(i, y).max(floor).ln())
        .sum();
    Ok(total / T::from_count(labels.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin<T> {
    pub lo: T,
    pub hi: T,
    pub count: usize,
    /// Mean confidence of the bin's samples (0 for an empty bin).
    pub mean_confidence: T,
    /// Fraction correct in the bin (0 for an empty bin).
    pub accuracy: T,
}

fn bin_edge<T: Scalar>(i: usize) -> T {
    T::from_count(i) / T::from_count(ECE_BINS)
}

/// Bin `i` holds confidences in `(i/15, (i+1)/15]`; bin 0 is closed at 0.
pub fn bin_index<T: Scalar>(confidence: T) -> usize {
    let guess = (confidence * T::from_count(ECE_BINS)).ceil().to_f64_lossless() as i64 - 1;
    let mut idx = guess.clamp(0, ECE_BINS as i64 - 1) as usize;
    while idx > 0 && confidence <= bin_edge(idx) {
        idx -= 1;
    }
    while idx + 1 < ECE_BINS && confidence > bin_edge(idx + 1) {
        idx += 1;
    }
    idx
}

/// Equal-width 15-bin ECE: `Σ_b (n_b / N) · |acc_b − conf_b|`.
pub fn ece_15<T: Scalar>(
    confidences: &[T],
    correct: &[bool],
) -> Result<(T, Vec<ReliabilityBin<T>>)> {
    if confidences.len() != correct.len() {
        return Err(SaeError::invalid(format!(
            "ece: {} confidences vs {} flags",
            confidences.len(),
            correct.len()
        )));
    }
    if confidences.is_empty() {
        return Err(SaeError::invalid("ece of an empty set"));
    }
    let mut counts = [0usize; ECE_BINS];
    let mut conf_sum = [T::zero(); ECE_BINS];
    let mut hit_count = [0usize; ECE_BINS];
    for (&c, &ok) in confidences.iter().zip(correct) {
        if !(c >= T::zero() && c <= T::one()) {
            return Err(SaeError::invalid(format!("confidence {c} outside [0, 1]")));
        }
        let b = bin_index(c);
        counts[b] += 1;
        conf_sum[b] = conf_sum[b] + c;
        hit_count[b] += usize::from(ok);
    }

    let n = T::from_count(confidences.len());
    let mut ece = T::zero();
    let bins = (0..ECE_BINS)
        .map(|b| {
            let (mean_confidence, accuracy) = if counts[b] == 0 {
                (T::zero(), T::zero())
            } else {
                let m = T::from_count(counts[b]);
                (conf_sum[b] / m, T::from_count(hit_count[b]) / m)
            };
            if counts[b] > 0 {
                ece = ece + T::from_count(counts[b]) / n * (accuracy - mean_confidence).abs();
            }
            ReliabilityBin {
                lo: bin_edge(b),
                hi: bin_edge(b + 1),
                count: counts[b],
                mean_confidence,
                accuracy,
            }
        })
        .collect();
    Ok((ece, bins))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport<T> {
    pub nll: T,
    pub ece: T,
    pub bins: Vec<ReliabilityBin<T>>,
    pub n_samples: usize,
}

/// Calibration of a predictor whose confidence is its largest class probability.
pub fn calibration_report<T: Scalar>(
    probs: &DenseMatrix<T>,
    labels: &[usize],
) -> Result<CalibrationReport<T>> {
    let nll = nll(probs, labels)?;
    let (confidences, correct): (Vec<T>, Vec<bool>) = probs
        .row_iter()
        .zip(labels)
        .map(|(row, &y)| {
            let k = argmax(row);
            (row[k].min(T::one()), k == y)
        })
        .unzip();
    let (ece, bins) = ece_15(&confidences, &correct)?;
    Ok(CalibrationReport {
        nll,
        ece,
        bins,
        n_samples: labels.len(),
    })
}

/// Reliability bins as CSV: header plus one row per bin, six decimals.
pub fn reliability_csv<T: Scalar>(bins: &[ReliabilityBin<T>]) -> String {
    let mut out = String::from("bin_lo,bin_hi,count,mean_conf,accuracy\n");
    for b in bins {
        let _ = writeln!(
            out,
            "{:.6},{:.6},{},{:.6},{:.6}",
            b.lo.to_f64_lossless(),
            b.hi.to_f64_lossless(),
            b.count,
            b.mean_confidence.to_f64_lossless(),
            b.accuracy.to_f64_lossless()
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundPoint {
    pub round: usize,
    pub n_labeled: usize,
    pub accuracy: f64,
    pub nll: f64,
    pub ece: f64,
}

/// Per-round accuracy and calibration of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundTrajectory {
    pub points: Vec<RoundPoint>,
}

impl RoundTrajectory {
    pub fn push(&mut self, point: RoundPoint) -> Result<()> {
        if let Some(last) = self.points.last() {
            if point.round <= last.round || point.n_labeled < last.n_labeled {
                return Err(SaeError::InvalidState(format!(
                    "round {} (n_labeled {}) cannot follow round {} (n_labeled {})",
                    point.round, point.n_labeled, last.round, last.n_labeled
                )));
            }
        }
        self.points.push(point);
        Ok(())
    }

    pub fn accuracy_at(&self, round: usize) -> Option<f64> {
        self.points.iter().find(|p| p.round == round).map(|p| p.accuracy)
    }

    /// `accuracy(t=3) / accuracy(t=5)`, when both rounds exist.
    pub fn efficiency_ratio(&self) -> Option<f64> {
        round_efficiency(self).ok()
    }
}

pub fn round_efficiency(trajectory: &RoundTrajectory) -> Result<f64> {
    let early = trajectory
        .accuracy_at(3)
        .ok_or_else(|| SaeError::InvalidState("trajectory has no round 3".into()))?;
    let late = trajectory
        .accuracy_at(5)
        .ok_or_else(|| SaeError::InvalidState("trajectory has no round 5".into()))?;
    if late == 0.0 {
        return Err(SaeError::InvalidState("round 5 accuracy is zero".into()));
    }
    Ok(early / late)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn traj(accs: &[f64]) -> RoundTrajectory {
        let mut t = RoundTrajectory::default();
        for (i, &a) in accs.iter().enumerate() {
            t.push(RoundPoint {
                round: i + 1,
                n_labeled: 4 * (i + 1),
                accuracy: a,
                nll: 0.0,
                ece: 0.0,
            })
            .unwrap();
        }
        t
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(top1_accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(top1_accuracy(&[0, 1, 0, 1], &[1, 0, 1, 0]).unwrap(), 0.0);
        assert_eq!(top1_accuracy(&[0, 1, 2, 3], &[0, 1, 2, 0]).unwrap(), 0.75);
        assert!(top1_accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn nll_examples() {
        let p = DenseMatrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(nll(&p, &[0, 1]).unwrap(), 0.0);

        let e = (-1.0f64).exp();
        let p = DenseMatrix::new(1, 2, vec![e, 1.0 - e]).unwrap();
        assert_abs_diff_eq!(nll(&p, &[0]).unwrap(), 1.0, epsilon = 1e-15);

        let p = DenseMatrix::new(2, 2, vec![0.5, 0.5, 0.25, 0.75]).unwrap();
        assert_abs_diff_eq!(
            nll(&p, &[0, 0]).unwrap(),
            (2f64.ln() + 4f64.ln()) / 2.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(nll(&p, &[0, 0]).unwrap(), 1.039_720_770_839_918, epsilon = 1e-12);
    }

    #[test]
    fn nll_floors_zero_probability_and_validates() {
        let p = DenseMatrix::new(1, 2, vec![0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(nll(&p, &[0]).unwrap(), -(1e-12f64).ln(), epsilon = 1e-9);
        let bad = DenseMatrix::new(1, 2, vec![0.7, 0.7]).unwrap();
        assert!(nll(&bad, &[0]).is_err());
        assert!(nll(&p, &[2]).is_err());
    }

    #[test]
    fn nll_uniform_is_ln_k() {
        for k in 2..=10 {
            let p = DenseMatrix::new(3, k, vec![1.0 / k as f64; 3 * k]).unwrap();
            assert_abs_diff_eq!(nll(&p, &[0, 1, k - 1]).unwrap(), (k as f64).ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn ece_examples() {
        let (e, _) = ece_15(&[1.0, 1.0, 1.0], &[true, true, true]).unwrap();
        assert_eq!(e, 0.0);

        let (e, bins) = ece_15(&[0.8, 0.8], &[true, false]).unwrap();
        assert_abs_diff_eq!(e, 0.3, epsilon = 1e-15);
        assert_eq!(bins[11].count, 2);
        assert!(bins[11].lo < 0.8 && 0.8 <= bins[11].hi);

        let (e, _) = ece_15(&[0.5, 0.5], &[true, false]).unwrap();
        assert_eq!(e, 0.0);

        assert!(ece_15(&[1.2], &[true]).is_err());
        assert!(ece_15(&[-0.1], &[true]).is_err());
    }

    #[test]
    fn bin_boundaries_are_right_closed() {
        assert_eq!(bin_index(0.0f64), 0);
        for i in 1..=ECE_BINS {
            let edge = i as f64 / 15.0;
            assert_eq!(bin_index(edge), i - 1, "edge {i}/15");
            if i < ECE_BINS {
                assert_eq!(bin_index(edge.next_up()), i, "just above {i}/15");
            }
        }
        assert_eq!(bin_index(1.0f64), 14);
    }

    #[test]
    fn csv_has_fifteen_rows() {
        let (_, bins) = ece_15(&[0.3], &[true]).unwrap();
        let csv = reliability_csv(&bins);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 16);
        assert_eq!(lines[0], "bin_lo,bin_hi,count,mean_conf,accuracy");
        assert_eq!(lines[1], "0.000000,0.066667,0,0.000000,0.000000");
        assert_eq!(lines[5], "0.266667,0.333333,1,0.300000,1.000000");
    }

    #[test]
    fn round_efficiency_examples() {
        let t = traj(&[0.8650, 0.8826, 0.9292, 0.9302, 0.9346]);
        assert_abs_diff_eq!(round_efficiency(&t).unwrap() * 100.0, 99.42, epsilon = 0.01);
        assert_eq!(round_efficiency(&traj(&[0.7; 5])).unwrap(), 1.0);
        assert_abs_diff_eq!(
            round_efficiency(&traj(&[0.1, 0.2, 0.6, 0.7, 0.8])).unwrap(),
            0.75,
            epsilon = 1e-15
        );
        assert!(round_efficiency(&traj(&[0.5; 3])).is_err());
        assert!(round_efficiency(&traj(&[0.5, 0.5, 0.5, 0.5, 0.0])).is_err());
    }

    #[test]
    fn trajectory_rejects_out_of_order_rounds() {
        let mut t = traj(&[0.5, 0.6]);
        let p = RoundPoint { round: 2, n_labeled: 8, accuracy: 0.1, nll: 0.0, ece: 0.0 };
        assert!(t.push(p).is_err());
    }

    proptest! {
        #[test]
        fn calibrated_bins_have_zero_ece(groups in prop::collection::vec((0usize..15, 1usize..4), 1..6)) {
            // Bin b gets 30·reps samples at confidence (2b+1)/30, of which
            // (2b+1)·reps are correct, so its accuracy equals its confidence.
            let mut conf = Vec::new();
            let mut ok = Vec::new();
            for &(b, reps) in &groups {
                let c = (2 * b + 1) as f64 / 30.0;
                for j in 0..30 * reps {
                    conf.push(c);
                    ok.push(j < (2 * b + 1) * reps);
                }
            }
            let (e, bins) = ece_15(&conf, &ok).unwrap();
            prop_assert!(e.abs() < 1e-12);
            prop_assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), conf.len());
        }

        #[test]
        fn ece_and_nll_permutation_invariant(
            rows in prop::collection::vec((0.01f64..1.0, 0.01f64..1.0, 0.01f64..1.0, 0usize..3), 1..40),
            rot in 0usize..40,
        ) {
            let mut probs = Vec::new();
            let mut labels = Vec::new();
            for &(a, b, c, y) in &rows {
                let z = a + b + c;
                probs.push(vec![a / z, b / z, c / z]);
                labels.push(y);
            }
            let n = rows.len();
            let r = rot % n;
            let mut p2 = probs.clone();
            p2.rotate_left(r);
            let mut l2 = labels.clone();
            l2.rotate_left(r);
            let a = calibration_report(&DenseMatrix::from_rows(&probs).unwrap(), &labels).unwrap();
            let b = calibration_report(&DenseMatrix::from_rows(&p2).unwrap(), &l2).unwrap();
            prop_assert!((a.ece - b.ece).abs() < 1e-12);
            prop_assert!((a.nll - b.nll).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a.ece));
            prop_assert!(a.nll >= 0.0);
            prop_assert_eq!(a.bins.iter().map(|b| b.count).sum::<usize>(), n);
        }
    }
}
