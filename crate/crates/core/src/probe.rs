//! Softmax-regression probe over frozen embeddings: the classifier whose test
//! accuracy the experiments report and whose per-sample cross-entropy feeds
//! the evidence head.

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Result, SaeError};
use crate::numerics::{argmax, gemm_nt, log_sum_exp, softmax_slice, DenseMatrix, DenseVector, SeededRng};
use crate::scalar::Scalar;
use crate::training::{cosine_annealing_lr, minibatches, steps_per_epoch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.002,
            epochs: 100,
            batch_size: 32,
        }
    }
}

/// `softmax(W x + b)` with `W: K × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe<T> {
    pub weights: DenseMatrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> LinearProbe<T> {
    /// All-zero probe: uniform predictions everywhere.
    pub fn zeros(k: usize, d: usize) -> Self {
        Self {
            weights: DenseMatrix::zeros(k, d),
            bias: vec![T::zero(); k],
        }
    }

    pub fn k(&self) -> usize {
        self.weights.rows()
    }

    pub fn d(&self) -> usize {
        self.weights.cols()
    }

    pub fn logits(&self, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if x.cols() != self.d() {
            return Err(SaeError::invalid(format!(
                "probe expects {} features, batch has {}",
                self.d(),
                x.cols()
            )));
        }
        let (n, k, d) = (x.rows(), self.k(), self.d());
        let mut out = Vec::with_capacity(n * k);
        for _ in 0..n {
            out.extend_from_slice(&self.bias);
        }
        gemm_nt(n, d, k, x.as_slice(), self.weights.as_slice(), &mut out);
        Ok(DenseMatrix::from_parts_unchecked(n, k, out))
    }

    /// Row-wise class probabilities.
    pub fn predict_proba(&self, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        let logits = self.logits(x)?;
        let k = self.k();
        let mut values = Vec::with_capacity(logits.rows() * k);
        for row in logits.row_iter() {
            values.extend(softmax_slice(row, T::one()));
        }
        Ok(DenseMatrix::from_parts_unchecked(logits.rows(), k, values))
    }

    pub fn predict(&self, x: &DenseMatrix<T>) -> Result<Vec<usize>> {
        Ok(self.logits(x)?.row_iter().map(argmax).collect())
    }

    /// `−log p_{i,y_i}` through log-sum-exp of the logits.
    pub fn per_sample_cross_entropy(&self, x: &DenseMatrix<T>, y: &[usize]) -> Result<DenseVector<T>> {
        if y.len() != x.rows() {
            return Err(SaeError::invalid(format!(
                "{} labels for {} samples",
                y.len(),
                x.rows()
            )));
        }
        if let Some(&bad) = y.iter().find(|&&label| label >= self.k()) {
            return Err(SaeError::invalid(format!(
                "label {bad} out of range for {} classes",
                self.k()
            )));
        }
        let logits = self.logits(x)?;
        let ce = logits
            .row_iter()
            .zip(y)
            .map(|(row, &label)| (log_sum_exp(row) - row[label]).max(T::zero()))
            .collect();
        DenseVector::new(ce)
    }

    pub fn mean_cross_entropy(&self, x: &DenseMatrix<T>, y: &[usize]) -> Result<T> {
        let ce = self.per_sample_cross_entropy(x, y)?;
        Ok(ce.sum() / T::from_count(ce.len()))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new("probe");
        let f = |v: &[T]| v.iter().map(|x| x.to_f64_lossless()).collect::<Vec<_>>();
        c.push("weights", &[self.k(), self.d()], f(self.weights.as_slice()));
        c.push("bias", &[self.k()], f(&self.bias));
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.kind != "probe" {
            return Err(SaeError::invalid(format!("expected a probe checkpoint, got '{}'", c.kind)));
        }
        let shape = c.shape_of("weights")?.to_vec();
        if shape.len() != 2 {
            return Err(SaeError::invalid("probe weights must be 2-d"));
        }
        let conv = |v: &[f64]| v.iter().map(|&x| T::of(x)).collect::<Vec<_>>();
        Ok(Self {
            weights: DenseMatrix::new(shape[0], shape[1], conv(c.take("weights", &shape)?))?,
            bias: conv(c.take("bias", &[shape[0]])?),
        })
    }
}

/// Mean cross-entropy minimized by mini-batch SGD with cosine annealing,
/// starting from the zero probe.
pub fn train_probe<T: Scalar>(
    x: &DenseMatrix<T>,
    y: &[usize],
    k: usize,
    cfg: &ProbeConfig,
    rng: &mut SeededRng,
) -> Result<LinearProbe<T>> {
    let n = x.rows();
    if y.len() != n {
        return Err(SaeError::invalid(format!("{} labels for {n} samples", y.len())));
    }
    if let Some(&bad) = y.iter().find(|&&label| label >= k) {
        return Err(SaeError::invalid(format!("label {bad} out of range for {k} classes")));
    }
    if y.iter().all(|&label| label == y[0]) {
        return Err(SaeError::DegenerateLabels);
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(SaeError::invalid("probe needs a positive batch size and learning rate"));
    }

    let d = x.cols();
    let mut probe = LinearProbe::<T>::zeros(k, d);
    let total_steps = cfg.epochs * steps_per_epoch(n, cfg.batch_size);
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0;
    let mut grad_w = vec![T::zero(); k * d];
    let mut grad_b = vec![T::zero(); k];
    let mut probs = vec![T::zero(); k];

    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for batch in minibatches(&order, cfg.batch_size) {
            grad_w.iter_mut().for_each(|g| *g = T::zero());
            grad_b.iter_mut().for_each(|g| *g = T::zero());
            let inv_b = T::one() / T::from_count(batch.len());
            for &i in batch {
                let xi = x.row(i);
                for (c, p) in probs.iter_mut().enumerate() {
                    *p = probe.bias[c] + crate::numerics::dot(probe.weights.row(c), xi);
                }
                let p = softmax_slice(&probs, T::one());
                for c in 0..k {
                    let target = if c == y[i] { T::one() } else { T::zero() };
                    let g = (p[c] - target) * inv_b;
                    grad_b[c] = grad_b[c] + g;
                    for (gw, &xv) in grad_w[c * d..(c + 1) * d].iter_mut().zip(xi) {
                        *gw = *gw + g * xv;
                    }
                }
            }
            let lr = T::of(cosine_annealing_lr(cfg.learning_rate, step, total_steps));
            for (w, &g) in probe.weights.as_mut_slice().iter_mut().zip(&grad_w) {
                *w = *w - lr * g;
            }
            for (b, &g) in probe.bias.iter_mut().zip(&grad_b) {
                *b = *b - lr * g;
            }
            step += 1;
        }
    }
    if probe.weights.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(SaeError::Numerical("probe weights diverged".into()));
    }
    Ok(probe)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Two Gaussian blobs at ±2 along the first axis.
    fn blobs(n_per_class: usize, seed: u64) -> (DenseMatrix<f64>, Vec<usize>) {
        let mut rng = SeededRng::new(seed);
        let mut values = Vec::new();
        let mut y = Vec::new();
        for class in 0..2 {
            let center = if class == 0 { -2.0 } else { 2.0 };
            for _ in 0..n_per_class {
                values.push(center + 0.5 * rng.normal());
                for _ in 1..4 {
                    values.push(0.5 * rng.normal());
                }
                y.push(class);
            }
        }
        (DenseMatrix::new(2 * n_per_class, 4, values).unwrap(), y)
    }

    #[test]
    fn separable_blobs_are_learned() {
        let (x, y) = blobs(100, 0);
        let cfg = ProbeConfig::default();
        let probe = train_probe(&x, &y, 2, &cfg, &mut SeededRng::new(1)).unwrap();
        let acc = crate::metrics::top1_accuracy(&probe.predict(&x).unwrap(), &y).unwrap();
        assert!(acc > 0.95, "train accuracy {acc}");
        let zero = LinearProbe::<f64>::zeros(2, 4);
        assert!(probe.mean_cross_entropy(&x, &y).unwrap() < zero.mean_cross_entropy(&x, &y).unwrap());
    }

    #[test]
    fn zero_epochs_gives_uniform_predictions() {
        let (x, y) = blobs(10, 2);
        let cfg = ProbeConfig { epochs: 0, ..ProbeConfig::default() };
        let probe = train_probe(&x, &y, 3, &cfg, &mut SeededRng::new(0)).unwrap();
        let p = probe.predict_proba(&x).unwrap();
        assert!(p.as_slice().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        for &ce in probe.per_sample_cross_entropy(&x, &y).unwrap().iter() {
            assert_abs_diff_eq!(ce, 3f64.ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn identical_seeds_identical_probes() {
        let (x, y) = blobs(30, 3);
        let cfg = ProbeConfig { epochs: 7, ..ProbeConfig::default() };
        let a = train_probe(&x, &y, 2, &cfg, &mut SeededRng::new(5)).unwrap();
        let b = train_probe(&x, &y, 2, &cfg, &mut SeededRng::new(5)).unwrap();
        assert_eq!(a.to_checkpoint().to_bytes(), b.to_checkpoint().to_bytes());
        let back = LinearProbe::<f64>::from_checkpoint(&a.to_checkpoint()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn degenerate_and_invalid_labels() {
        let (x, _) = blobs(5, 4);
        let cfg = ProbeConfig::default();
        assert!(matches!(
            train_probe(&x, &[1; 10], 2, &cfg, &mut SeededRng::new(0)),
            Err(SaeError::DegenerateLabels)
        ));
        let probe = LinearProbe::<f64>::zeros(2, 4);
        assert!(probe.per_sample_cross_entropy(&x, &[2; 10]).is_err());
        let wrong = DenseMatrix::<f64>::zeros(2, 3);
        assert!(probe.predict_proba(&wrong).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        // K = 2, logits (ln 3, 0) for the first class.
        let probe = LinearProbe {
            weights: DenseMatrix::new(2, 1, vec![3f64.ln(), 0.0]).unwrap(),
            bias: vec![0.0, 0.0],
        };
        let x = DenseMatrix::new(1, 1, vec![1.0]).unwrap();
        assert_abs_diff_eq!(
            probe.per_sample_cross_entropy(&x, &[0]).unwrap()[0],
            -(0.75f64).ln(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(probe.per_sample_cross_entropy(&x, &[0]).unwrap()[0], 0.287_682_072_451_780_9, epsilon = 1e-12);

        let saturated = LinearProbe {
            weights: DenseMatrix::new(2, 1, vec![800.0, -800.0]).unwrap(),
            bias: vec![0.0, 0.0],
        };
        let ce = saturated.per_sample_cross_entropy(&x, &[0]).unwrap()[0];
        assert!((0.0..1e-12).contains(&ce));
        assert!(saturated.per_sample_cross_entropy(&x, &[1]).unwrap()[0].is_finite());
    }

    #[test]
    fn class_permutation_permutes_columns() {
        let mut rng = SeededRng::new(9);
        let w: Vec<f64> = (0..12).map(|_| rng.normal()).collect();
        let probe = LinearProbe { weights: DenseMatrix::new(3, 4, w).unwrap(), bias: vec![0.1, -0.2, 0.3] };
        let perm = [2usize, 0, 1];
        let permuted = LinearProbe {
            weights: probe.weights.select_rows(&perm).unwrap(),
            bias: perm.iter().map(|&c| probe.bias[c]).collect(),
        };
        let x = DenseMatrix::new(5, 4, (0..20).map(|_| rng.normal()).collect()).unwrap();
        let p = probe.predict_proba(&x).unwrap();
        let q = permuted.predict_proba(&x).unwrap();
        for r in 0..5 {
            for (j, &c) in perm.iter().enumerate() {
                assert_abs_diff_eq!(p.get(r, c), q.get(r, j), epsilon = 1e-15);
            }
        }
    }

    proptest! {
        #[test]
        fn rows_sum_to_one_and_ce_matches_proba(seed in 0u64..1000) {
            let mut rng = SeededRng::new(seed);
            let probe = LinearProbe {
                weights: DenseMatrix::new(4, 3, (0..12).map(|_| 3.0 * rng.normal()).collect()).unwrap(),
                bias: (0..4).map(|_| rng.normal()).collect(),
            };
            let x = DenseMatrix::new(50, 3, (0..150).map(|_| rng.normal()).collect()).unwrap();
            let y: Vec<usize> = (0..50).map(|_| rng.index(4)).collect();
            let p = probe.predict_proba(&x).unwrap();
            let ce = probe.per_sample_cross_entropy(&x, &y).unwrap();
            for (r, row) in p.row_iter().enumerate() {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!((ce[r] + row[y[r]].ln()).abs() < 1e-9);
            }
        }

        #[test]
        fn logits_are_additive_in_weights(seed in 0u64..1000) {
            let mut rng = SeededRng::new(seed);
            let mut mk = || LinearProbe {
                weights: DenseMatrix::new(3, 2, (0..6).map(|_| rng.normal()).collect()).unwrap(),
                bias: vec![0.0; 3],
            };
            let (a, b) = (mk(), mk());
            let sum = LinearProbe {
                weights: DenseMatrix::new(3, 2, a.weights.as_slice().iter().zip(b.weights.as_slice()).map(|(u, v)| u + v).collect()).unwrap(),
                bias: vec![0.0; 3],
            };
            let x = DenseMatrix::new(4, 2, (0..8).map(|_| rng.normal()).collect()).unwrap();
            let (la, lb, ls) = (a.logits(&x).unwrap(), b.logits(&x).unwrap(), sum.logits(&x).unwrap());
            for i in 0..12 {
                prop_assert!((la.as_slice()[i] + lb.as_slice()[i] - ls.as_slice()[i]).abs() < 1e-12);
            }
        }
    }
}
