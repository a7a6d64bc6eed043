use crate::error::{Result, SaeError};
use crate::numerics::{entropy_unchecked, softmax_slice, DenseMatrix, SeededRng};
use crate::scalar::Scalar;
use crate::training::{cosine_annealing_lr, minibatches, steps_per_epoch};

use super::config::SehConfig;
use super::loss::seh_loss;
use super::model::{Mode, SehModel};

/// A trained head together with its per-epoch mean training loss.
#[derive(Debug, Clone)]
pub struct TrainedSeh<T> {
    pub model: SehModel<T>,
    pub epoch_losses: Vec<T>,
}

/// Detached entropy targets `H(softmax(s_i / τ_f))`.
pub fn entropy_targets<T: Scalar>(s: &DenseMatrix<T>, tau_f: T) -> Vec<T> {
    s.row_iter()
        .map(|row| entropy_unchecked(&softmax_slice(row, tau_f)))
        .collect()
}

/// Fits a freshly initialized head by mini-batch SGD with a cosine-annealed
/// learning rate, reshuffling every epoch.
pub fn train_seh<T: Scalar>(
    x: &DenseMatrix<T>,
    s: &DenseMatrix<T>,
    l_cls: &[T],
    cfg: &SehConfig,
    rng: &mut SeededRng,
) -> Result<TrainedSeh<T>> {
    cfg.validate()?;
    let n = x.rows();
    if s.rows() != n || l_cls.len() != n {
        return Err(SaeError::invalid(format!(
            "training set sizes differ: {} embeddings, {} similarities, {} targets",
            n,
            s.rows(),
            l_cls.len()
        )));
    }
    if n < 2 {
        return Err(SaeError::InsufficientData { needed: 2, got: n });
    }
    if x.cols() != cfg.d_img || s.cols() != cfg.k {
        return Err(SaeError::invalid(format!(
            "data is {}-d with {} classes, config says {}-d with {}",
            x.cols(),
            s.cols(),
            cfg.d_img,
            cfg.k
        )));
    }

    let mut model = SehModel::new(cfg, rng)?;
    let targets = entropy_targets(s, T::of(cfg.tau_f));
    let total_steps = cfg.epochs * steps_per_epoch(n, cfg.batch_size);
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut weighted = T::zero();
        for batch in minibatches(&order, cfg.batch_size) {
            let xb = x.select_rows(batch)?;
            let sb = s.select_rows(batch)?;
            let lb: Vec<T> = batch.iter().map(|&i| l_cls[i]).collect();
            let hb: Vec<T> = batch.iter().map(|&i| targets[i]).collect();

            let (lambda, cache) = model.forward(&xb, &sb, Mode::Train, rng)?;
            let cache = cache.expect("train mode returns a cache");
            let (loss, d_lambda) = seh_loss(&lambda, &lb, &hb, cfg)?;
            if !loss.is_finite() {
                return Err(SaeError::Numerical(format!(
                    "evidence head loss diverged at epoch {epoch}"
                )));
            }
            let grads = model.backward(&cache, &d_lambda)?;
            let mut lr = T::of(cosine_annealing_lr(cfg.learning_rate, step, total_steps));
            if let Some(max_norm) = cfg.grad_clip_norm {
                let norm = grads
                    .as_slices()
                    .iter()
                    .flat_map(|g| g.iter())
                    .fold(T::zero(), |acc, &g| acc + g * g)
                    .sqrt();
                let max_norm = T::of(max_norm);
                if norm > max_norm {
                    lr = lr * max_norm / norm;
                }
            }
            model.apply_gradients(&grads, lr);
            weighted = weighted + loss * T::from_count(batch.len());
            step += 1;
        }
        epoch_losses.push(weighted / T::from_count(n));
    }
    Ok(TrainedSeh {
        model,
        epoch_losses,
    })
}
