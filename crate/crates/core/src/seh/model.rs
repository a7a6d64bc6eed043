use crate::checkpoint::Checkpoint;
use crate::error::{Result, SaeError};
use crate::numerics::{sigmoid, softplus, DenseMatrix, DenseVector, SeededRng};
use crate::scalar::Scalar;

use super::config::SehConfig;
use super::layers::{BlockCache, BlockGrad, Linear, LinearGrad, MlpBlock};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Dual-branch evidence head: two blocks over the image embedding, one over
/// the similarity vector, a linear fuse of the concatenation and a softplus.
#[derive(Debug, Clone, PartialEq)]
pub struct SehModel<T> {
    pub img1: MlpBlock<T>,
    pub img2: MlpBlock<T>,
    pub sim: MlpBlock<T>,
    pub fuse: Linear<T>,
    pub dropout_rate: T,
    pub bn_momentum: T,
    /// Bumped on every parameter update; caches from older versions are stale.
    version: u64,
}

/// Dropout multipliers for one batch, one entry per hidden activation.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks<T> {
    pub img1: Vec<T>,
    pub img2: Vec<T>,
    pub sim: Vec<T>,
}

/// Forward-pass state required by [`SehModel::backward`].
#[derive(Debug, Clone)]
pub struct SehBatchCache<T> {
    rows: usize,
    model_version: u64,
    img1: BlockCache<T>,
    img2: BlockCache<T>,
    sim: BlockCache<T>,
    fuse_input: Vec<T>,
    pre_softplus: Vec<T>,
    lambda: Vec<T>,
}

impl<T: Scalar> SehBatchCache<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn lambda(&self) -> &[T] {
        &self.lambda
    }

    pub fn pre_softplus(&self) -> &[T] {
        &self.pre_softplus
    }

    /// Batch mean and biased variance of the first image block.
    pub fn img1_stats(&self) -> (&[T], &[T]) {
        (&self.img1.batch_mean, &self.img1.batch_var)
    }

    pub fn img2_stats(&self) -> (&[T], &[T]) {
        (&self.img2.batch_mean, &self.img2.batch_var)
    }

    pub fn sim_stats(&self) -> (&[T], &[T]) {
        (&self.sim.batch_mean, &self.sim.batch_var)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SehGradients<T> {
    pub img1: BlockGrad<T>,
    pub img2: BlockGrad<T>,
    pub sim: BlockGrad<T>,
    pub fuse: LinearGrad<T>,
}

impl<T: Scalar> SehGradients<T> {
    /// Gradient slices in the same order as [`SehModel::params_mut`].
    pub fn as_slices(&self) -> Vec<&[T]> {
        let mut out = Vec::with_capacity(14);
        for b in [&self.img1, &self.img2, &self.sim] {
            out.push(b.linear.weight.as_slice());
            out.push(b.linear.bias.as_slice());
            out.push(b.gamma.as_slice());
            out.push(b.beta.as_slice());
        }
        out.push(self.fuse.weight.as_slice());
        out.push(self.fuse.bias.as_slice());
        out
    }

    pub fn max_abs(&self) -> T {
        self.as_slices()
            .into_iter()
            .flatten()
            .fold(T::zero(), |m, &g| m.max(g.abs()))
    }
}

impl<T: Scalar> SehModel<T> {
    /// Glorot-initialized head; batch norm starts at identity with unit running variance.
    pub fn new(cfg: &SehConfig, rng: &mut SeededRng) -> Result<Self> {
        cfg.validate()?;
        let img1 = MlpBlock::new(cfg.d_img, cfg.h1, rng);
        let img2 = MlpBlock::new(cfg.h1, cfg.h2, rng);
        let sim = MlpBlock::new(cfg.k, cfg.h_s, rng);
        let fuse = Linear::glorot(cfg.h2 + cfg.h_s, 1, rng);
        Ok(Self {
            img1,
            img2,
            sim,
            fuse,
            dropout_rate: T::of(cfg.dropout_rate),
            bn_momentum: T::of(cfg.bn_momentum),
            version: 0,
        })
    }

    pub fn d_img(&self) -> usize {
        self.img1.linear.fan_in()
    }

    pub fn k(&self) -> usize {
        self.sim.linear.fan_in()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    fn check_inputs(&self, x: &DenseMatrix<T>, s: &DenseMatrix<T>) -> Result<usize> {
        if x.cols() != self.d_img() {
            return Err(SaeError::invalid(format!(
                "image batch has {} columns, head expects {}",
                x.cols(),
                self.d_img()
            )));
        }
        if s.cols() != self.k() {
            return Err(SaeError::invalid(format!(
                "similarity batch has {} columns, head expects {}",
                s.cols(),
                self.k()
            )));
        }
        if x.rows() != s.rows() {
            return Err(SaeError::invalid(format!(
                "{} image rows vs {} similarity rows",
                x.rows(),
                s.rows()
            )));
        }
        Ok(x.rows())
    }

    fn fuse_forward(&self, zf: &[T], zs: &[T], rows: usize) -> (Vec<T>, Vec<T>, Vec<T>) {
        let (h2, hs) = (self.img2.width(), self.sim.width());
        let mut fuse_input = Vec::with_capacity(rows * (h2 + hs));
        for r in 0..rows {
            fuse_input.extend_from_slice(&zf[r * h2..(r + 1) * h2]);
            fuse_input.extend_from_slice(&zs[r * hs..(r + 1) * hs]);
        }
        let pre = self.fuse.apply(&fuse_input, rows);
        let lambda = pre.iter().map(|&u| softplus(u)).collect();
        (fuse_input, pre, lambda)
    }

    /// Eval-mode evidence strengths; a pure function of the model and inputs.
    pub fn predict(&self, x: &DenseMatrix<T>, s: &DenseMatrix<T>) -> Result<DenseVector<T>> {
        let rows = self.check_inputs(x, s)?;
        let h = self.img1.forward_eval(x.as_slice(), rows);
        let zf = self.img2.forward_eval(&h, rows);
        let zs = self.sim.forward_eval(s.as_slice(), rows);
        let (_, _, lambda) = self.fuse_forward(&zf, &zs, rows);
        DenseVector::new(lambda).map_err(|e| SaeError::Numerical(format!("evidence head output: {e}")))
    }

    /// Draws inverted-dropout masks for a batch.
    pub fn sample_masks(&self, rows: usize, rng: &mut SeededRng) -> DropoutMasks<T> {
        let p = self.dropout_rate;
        let mut draw = |width: usize| -> Vec<T> {
            if p == T::zero() {
                return vec![T::one(); rows * width];
            }
            let keep = T::one() / (T::one() - p);
            (0..rows * width)
                .map(|_| if T::of(rng.uniform()) < p { T::zero() } else { keep })
                .collect()
        };
        DropoutMasks {
            img1: draw(self.img1.width()),
            img2: draw(self.img2.width()),
            sim: draw(self.sim.width()),
        }
    }

    /// Masks that keep every unit (dropout disabled).
    pub fn identity_masks(&self, rows: usize) -> DropoutMasks<T> {
        DropoutMasks {
            img1: vec![T::one(); rows * self.img1.width()],
            img2: vec![T::one(); rows * self.img2.width()],
            sim: vec![T::one(); rows * self.sim.width()],
        }
    }

    /// Training-mode forward with caller-supplied masks. Does not touch the
    /// running statistics, so it can be repeated for finite-difference checks.
    pub fn forward_train_with_masks(
        &self,
        x: &DenseMatrix<T>,
        s: &DenseMatrix<T>,
        masks: &DropoutMasks<T>,
    ) -> Result<(DenseVector<T>, SehBatchCache<T>)> {
        let rows = self.check_inputs(x, s)?;
        if rows < 2 {
            return Err(SaeError::BatchTooSmall { rows });
        }
        let expect = [
            (masks.img1.len(), rows * self.img1.width()),
            (masks.img2.len(), rows * self.img2.width()),
            (masks.sim.len(), rows * self.sim.width()),
        ];
        if expect.iter().any(|(a, b)| a != b) {
            return Err(SaeError::invalid("dropout masks do not match the batch"));
        }
        let (h, img1) = self.img1.forward_train(x.as_slice(), rows, &masks.img1);
        let (zf, img2) = self.img2.forward_train(&h, rows, &masks.img2);
        let (zs, sim) = self.sim.forward_train(s.as_slice(), rows, &masks.sim);
        let (fuse_input, pre_softplus, lambda) = self.fuse_forward(&zf, &zs, rows);
        let out = DenseVector::new(lambda.clone())
            .map_err(|e| SaeError::Numerical(format!("evidence head output: {e}")))?;
        let cache = SehBatchCache {
            rows,
            model_version: self.version,
            img1,
            img2,
            sim,
            fuse_input,
            pre_softplus,
            lambda,
        };
        Ok((out, cache))
    }

    /// Forward pass in either mode. Train mode draws dropout masks from `rng`,
    /// normalizes with batch statistics and folds them into the running
    /// statistics; eval mode returns `None` for the cache.
    pub fn forward(
        &mut self,
        x: &DenseMatrix<T>,
        s: &DenseMatrix<T>,
        mode: Mode,
        rng: &mut SeededRng,
    ) -> Result<(DenseVector<T>, Option<SehBatchCache<T>>)> {
        match mode {
            Mode::Eval => Ok((self.predict(x, s)?, None)),
            Mode::Train => {
                let rows = self.check_inputs(x, s)?;
                if rows < 2 {
                    return Err(SaeError::BatchTooSmall { rows });
                }
                let masks = self.sample_masks(rows, rng);
                let (lambda, cache) = self.forward_train_with_masks(x, s, &masks)?;
                let m = self.bn_momentum;
                self.img1.update_running(&cache.img1, rows, m);
                self.img2.update_running(&cache.img2, rows, m);
                self.sim.update_running(&cache.sim, rows, m);
                Ok((lambda, Some(cache)))
            }
        }
    }

    /// Exact gradients of a loss with respect to every trainable parameter,
    /// given `∂loss/∂λ` for each row of the cached batch.
    pub fn backward(&self, cache: &SehBatchCache<T>, d_lambda: &[T]) -> Result<SehGradients<T>> {
        if cache.model_version != self.version {
            return Err(SaeError::InvalidState(format!(
                "cache from model version {} used with version {}",
                cache.model_version, self.version
            )));
        }
        if d_lambda.len() != cache.rows {
            return Err(SaeError::InvalidState(format!(
                "{} loss gradients for a cached batch of {}",
                d_lambda.len(),
                cache.rows
            )));
        }
        let rows = cache.rows;
        let d_pre: Vec<T> = d_lambda
            .iter()
            .zip(&cache.pre_softplus)
            .map(|(&g, &u)| g * sigmoid(u))
            .collect();

        let mut grads = SehGradients {
            img1: self.img1.zero_grad(),
            img2: self.img2.zero_grad(),
            sim: self.sim.zero_grad(),
            fuse: LinearGrad {
                weight: vec![T::zero(); self.fuse.weight.as_slice().len()],
                bias: vec![T::zero(); 1],
            },
        };
        let d_cat = self
            .fuse
            .backward(&cache.fuse_input, &d_pre, rows, &mut grads.fuse, true)
            .expect("input gradient requested");

        let (h2, hs) = (self.img2.width(), self.sim.width());
        let mut d_zf = Vec::with_capacity(rows * h2);
        let mut d_zs = Vec::with_capacity(rows * hs);
        for r in 0..rows {
            let row = &d_cat[r * (h2 + hs)..(r + 1) * (h2 + hs)];
            d_zf.extend_from_slice(&row[..h2]);
            d_zs.extend_from_slice(&row[h2..]);
        }
        let d_h = self
            .img2
            .backward(&cache.img2, &d_zf, rows, &mut grads.img2, true)
            .expect("input gradient requested");
        self.img1.backward(&cache.img1, &d_h, rows, &mut grads.img1, false);
        self.sim.backward(&cache.sim, &d_zs, rows, &mut grads.sim, false);
        Ok(grads)
    }

    /// Trainable parameters in declaration order.
    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::with_capacity(14);
        for b in [&mut self.img1, &mut self.img2, &mut self.sim] {
            out.push(b.linear.weight.as_mut_slice());
            out.push(b.linear.bias.as_mut_slice());
            out.push(b.norm.gamma.as_mut_slice());
            out.push(b.norm.beta.as_mut_slice());
        }
        out.push(self.fuse.weight.as_mut_slice());
        out.push(self.fuse.bias.as_mut_slice());
        out
    }

    /// Plain SGD step `θ ← θ − lr · ∇θ`.
    pub fn apply_gradients(&mut self, grads: &SehGradients<T>, lr: T) {
        let g = grads.as_slices();
        for (p, g) in self.params_mut().into_iter().zip(g) {
            for (pi, &gi) in p.iter_mut().zip(g) {
                *pi = *pi - lr * gi;
            }
        }
        self.version += 1;
    }

    /// Marks every outstanding cache stale, e.g. after editing parameters directly.
    pub fn touch(&mut self) {
        self.version += 1;
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new("seh");
        let f = |v: &[T]| v.iter().map(|x| x.to_f64_lossless()).collect::<Vec<_>>();
        for (name, b) in [("img1", &self.img1), ("img2", &self.img2), ("sim", &self.sim)] {
            let (fi, fo) = (b.linear.fan_in(), b.linear.fan_out());
            c.push(&format!("{name}.weight"), &[fi, fo], f(b.linear.weight.as_slice()));
            c.push(&format!("{name}.bias"), &[fo], f(&b.linear.bias));
            c.push(&format!("{name}.gamma"), &[fo], f(&b.norm.gamma));
            c.push(&format!("{name}.beta"), &[fo], f(&b.norm.beta));
            c.push(&format!("{name}.running_mean"), &[fo], f(&b.norm.running_mean));
            c.push(&format!("{name}.running_var"), &[fo], f(&b.norm.running_var));
        }
        c.push("fuse.weight", &[self.fuse.fan_in(), 1], f(self.fuse.weight.as_slice()));
        c.push("fuse.bias", &[1], f(&self.fuse.bias));
        c.push("dropout_rate", &[1], vec![self.dropout_rate.to_f64_lossless()]);
        c.push("bn_momentum", &[1], vec![self.bn_momentum.to_f64_lossless()]);
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.kind != "seh" {
            return Err(SaeError::invalid(format!("expected a seh checkpoint, got '{}'", c.kind)));
        }
        let conv = |v: &[f64]| v.iter().map(|&x| T::of(x)).collect::<Vec<_>>();
        let block = |name: &str| -> Result<MlpBlock<T>> {
            let shape = c.shape_of(&format!("{name}.weight"))?;
            if shape.len() != 2 {
                return Err(SaeError::invalid(format!("{name}.weight must be 2-d")));
            }
            let (fi, fo) = (shape[0], shape[1]);
            let weight = DenseMatrix::new(fi, fo, conv(c.take(&format!("{name}.weight"), &[fi, fo])?))?;
            let block = MlpBlock {
                linear: Linear {
                    weight,
                    bias: conv(c.take(&format!("{name}.bias"), &[fo])?),
                },
                norm: super::layers::BatchNorm {
                    gamma: conv(c.take(&format!("{name}.gamma"), &[fo])?),
                    beta: conv(c.take(&format!("{name}.beta"), &[fo])?),
                    running_mean: conv(c.take(&format!("{name}.running_mean"), &[fo])?),
                    running_var: conv(c.take(&format!("{name}.running_var"), &[fo])?),
                },
            };
            if block.norm.running_var.iter().any(|&v| v <= T::zero()) {
                return Err(SaeError::invalid(format!("{name}.running_var must be positive")));
            }
            Ok(block)
        };
        let img1 = block("img1")?;
        let img2 = block("img2")?;
        let sim = block("sim")?;
        if img2.linear.fan_in() != img1.width() {
            return Err(SaeError::invalid("img2 input width does not match img1 output"));
        }
        let fuse_in = img2.width() + sim.width();
        let fuse = Linear {
            weight: DenseMatrix::new(fuse_in, 1, conv(c.take("fuse.weight", &[fuse_in, 1])?))?,
            bias: conv(c.take("fuse.bias", &[1])?),
        };
        Ok(Self {
            img1,
            img2,
            sim,
            fuse,
            dropout_rate: T::of(c.scalar("dropout_rate")?),
            bn_momentum: T::of(c.scalar("bn_momentum")?),
            version: 0,
        })
    }
}
