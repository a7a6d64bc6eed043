//! Shared mini-batch SGD plumbing: cosine-annealed learning rate and batching.

use std::f64::consts::PI;

/// `lr · ½ · (1 + cos(π · step / total))`; `total = 0` returns `lr`.
pub fn cosine_annealing_lr(lr: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return lr;
    }
    lr * 0.5 * (1.0 + (PI * step as f64 / total as f64).cos())
}

/// Splits `order` into consecutive batches of `batch_size`. A trailing batch
/// of a single sample is merged into the previous batch, since batch norm
/// cannot normalize one row.
pub fn minibatches(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(batch_size.max(1)).collect();
    if out.len() >= 2 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let start = order.len() - 1 - out.last().unwrap().len();
        *out.last_mut().unwrap() = &order[start..];
    }
    out
}

/// Number of optimizer steps one epoch takes.
pub fn steps_per_epoch(n: usize, batch_size: usize) -> usize {
    minibatches(&(0..n).collect::<Vec<_>>(), batch_size).len()
}
