//! Linear → BatchNorm → ReLU → Dropout blocks with hand-written backward passes.

use crate::numerics::{gemm_nn, gemm_nt, gemm_tn, DenseMatrix, SeededRng};
use crate::scalar::Scalar;

pub(crate) const BN_EPS: f64 = 1e-5;

/// Affine layer; `weight` is stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: DenseMatrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Linear<T> {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot(fan_in: usize, fan_out: usize, rng: &mut SeededRng) -> Self {
        let limit = T::of((6.0 / (fan_in + fan_out) as f64).sqrt());
        let values = (0..fan_in * fan_out)
            .map(|_| rng.uniform_in(-limit, limit))
            .collect();
        Self {
            weight: DenseMatrix::from_parts_unchecked(fan_in, fan_out, values),
            bias: vec![T::zero(); fan_out],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }

    /// `input · W + b` for `rows` stacked inputs.
    pub(crate) fn apply(&self, input: &[T], rows: usize) -> Vec<T> {
        let (fi, fo) = (self.fan_in(), self.fan_out());
        let mut out = Vec::with_capacity(rows * fo);
        for _ in 0..rows {
            out.extend_from_slice(&self.bias);
        }
        gemm_nn(rows, fi, fo, input, self.weight.as_slice(), &mut out);
        out
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub(crate) fn backward(
        &self,
        input: &[T],
        d_out: &[T],
        rows: usize,
        grad: &mut LinearGrad<T>,
        need_input_grad: bool,
    ) -> Option<Vec<T>> {
        let (fi, fo) = (self.fan_in(), self.fan_out());
        gemm_tn(rows, fi, fo, input, d_out, &mut grad.weight);
        for r in 0..rows {
            for (g, &d) in grad.bias.iter_mut().zip(&d_out[r * fo..(r + 1) * fo]) {
                *g = *g + d;
            }
        }
        need_input_grad.then(|| {
            let mut d_in = vec![T::zero(); rows * fi];
            gemm_nt(rows, fo, fi, d_out, self.weight.as_slice(), &mut d_in);
            d_in
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrad<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> LinearGrad<T> {
    fn zeros(layer: &Linear<T>) -> Self {
        Self {
            weight: vec![T::zero(); layer.weight.as_slice().len()],
            bias: vec![T::zero(); layer.bias.len()],
        }
    }
}

/// Batch normalization over the batch axis with learned scale and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    /// Unbiased estimate, as used at eval time.
    pub running_var: Vec<T>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(width: usize) -> Self {
        Self {
            gamma: vec![T::one(); width],
            beta: vec![T::zero(); width],
            running_mean: vec![T::zero(); width],
            running_var: vec![T::one(); width],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpBlock<T> {
    pub linear: Linear<T>,
    pub norm: BatchNorm<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrad<T> {
    pub linear: LinearGrad<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

/// Everything the backward pass of one block needs from its forward pass.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BlockCache<T> {
    pub input: Vec<T>,
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    /// Post-norm, pre-ReLU activations.
    pub normed: Vec<T>,
    /// Inverted-dropout multipliers (0 or 1/(1−p)); all ones when disabled.
    pub mask: Vec<T>,
    pub batch_mean: Vec<T>,
    /// Biased batch variance.
    pub batch_var: Vec<T>,
}

impl<T: Scalar> MlpBlock<T> {
    pub fn new(fan_in: usize, fan_out: usize, rng: &mut SeededRng) -> Self {
        Self {
            linear: Linear::glorot(fan_in, fan_out, rng),
            norm: BatchNorm::new(fan_out),
        }
    }

    pub fn width(&self) -> usize {
        self.linear.fan_out()
    }

    pub(crate) fn zero_grad(&self) -> BlockGrad<T> {
        BlockGrad {
            linear: LinearGrad::zeros(&self.linear),
            gamma: vec![T::zero(); self.width()],
            beta: vec![T::zero(); self.width()],
        }
    }

    /// Inference: running statistics, no dropout.
    pub(crate) fn forward_eval(&self, input: &[T], rows: usize) -> Vec<T> {
        let w = self.width();
        let mut z = self.linear.apply(input, rows);
        let eps = T::of(BN_EPS);
        let scale: Vec<T> = (0..w)
            .map(|j| self.norm.gamma[j] / (self.norm.running_var[j] + eps).sqrt())
            .collect();
        for r in 0..rows {
            for j in 0..w {
                let v = &mut z[r * w + j];
                *v = ((*v - self.norm.running_mean[j]) * scale[j] + self.norm.beta[j]).max(T::zero());
            }
        }
        z
    }

    /// Training pass with batch statistics and the given dropout mask.
    pub(crate) fn forward_train(&self, input: &[T], rows: usize, mask: &[T]) -> (Vec<T>, BlockCache<T>) {
        let w = self.width();
        let z = self.linear.apply(input, rows);
        let n = T::from_count(rows);
        let eps = T::of(BN_EPS);

        let mut mean = vec![T::zero(); w];
        for r in 0..rows {
            for j in 0..w {
                mean[j] = mean[j] + z[r * w + j];
            }
        }
        for m in &mut mean {
            *m = *m / n;
        }
        let mut var = vec![T::zero(); w];
        for r in 0..rows {
            for j in 0..w {
                let d = z[r * w + j] - mean[j];
                var[j] = var[j] + d * d;
            }
        }
        for v in &mut var {
            *v = *v / n;
        }
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();

        let mut xhat = vec![T::zero(); rows * w];
        let mut normed = vec![T::zero(); rows * w];
        let mut out = vec![T::zero(); rows * w];
        for r in 0..rows {
            for j in 0..w {
                let i = r * w + j;
                xhat[i] = (z[i] - mean[j]) * inv_std[j];
                normed[i] = self.norm.gamma[j] * xhat[i] + self.norm.beta[j];
                out[i] = normed[i].max(T::zero()) * mask[i];
            }
        }
        let cache = BlockCache {
            input: input.to_vec(),
            xhat,
            inv_std,
            normed,
            mask: mask.to_vec(),
            batch_mean: mean,
            batch_var: var,
        };
        (out, cache)
    }

    /// Folds one batch's statistics into the running estimates.
    pub(crate) fn update_running(&mut self, cache: &BlockCache<T>, rows: usize, momentum: T) {
        let keep = T::one() - momentum;
        let unbias = T::from_count(rows) / T::from_count(rows - 1);
        for j in 0..self.width() {
            self.norm.running_mean[j] = keep * self.norm.running_mean[j] + momentum * cache.batch_mean[j];
            self.norm.running_var[j] =
                keep * self.norm.running_var[j] + momentum * cache.batch_var[j] * unbias;
        }
    }

    /// Backward through dropout, ReLU, batch norm (including the coupling
    /// through the batch mean and variance) and the linear layer.
    pub(crate) fn backward(
        &self,
        cache: &BlockCache<T>,
        d_out: &[T],
        rows: usize,
        grad: &mut BlockGrad<T>,
        need_input_grad: bool,
    ) -> Option<Vec<T>> {
        let w = self.width();
        let n = T::from_count(rows);
        let mut d_xhat = vec![T::zero(); rows * w];
        let mut sum_dxhat = vec![T::zero(); w];
        let mut sum_dxhat_xhat = vec![T::zero(); w];
        for r in 0..rows {
            for j in 0..w {
                let i = r * w + j;
                let d_normed = if cache.normed[i] > T::zero() {
                    d_out[i] * cache.mask[i]
                } else {
                    T::zero()
                };
                grad.gamma[j] = grad.gamma[j] + d_normed * cache.xhat[i];
                grad.beta[j] = grad.beta[j] + d_normed;
                let dx = d_normed * self.norm.gamma[j];
                d_xhat[i] = dx;
                sum_dxhat[j] = sum_dxhat[j] + dx;
                sum_dxhat_xhat[j] = sum_dxhat_xhat[j] + dx * cache.xhat[i];
            }
        }
        let mut d_z = d_xhat;
        for r in 0..rows {
            for j in 0..w {
                let i = r * w + j;
                d_z[i] = cache.inv_std[j] / n
                    * (n * d_z[i] - sum_dxhat[j] - cache.xhat[i] * sum_dxhat_xhat[j]);
            }
        }
        self.linear
            .backward(&cache.input, &d_z, rows, &mut grad.linear, need_input_grad)
    }
}
