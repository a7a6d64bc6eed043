//! Synthetic pools: well-separated class directions on the unit sphere,
//! noisy class members, and text prototypes misaligned by their own noise.

use serde::{Deserialize, Serialize};

use super::pool::{compute_similarities, normalized, prototype_from_descriptions, EmbeddingPool};
use crate::error::{Result, SaeError};
use crate::numerics::{dot, DenseMatrix, DenseVector, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub k: usize,
    pub d: usize,
    pub n_per_class: usize,
    /// Relative class sizes; class `c` gets `round(n_per_class · w_c)` pool
    /// samples. `None` means balanced.
    pub imbalance: Option<Vec<f64>>,
    pub test_per_class: usize,
    pub intra_sigma: f64,
    pub proto_noise: f64,
    /// Noisy descriptions averaged into each prototype.
    pub descriptions_per_class: usize,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(k: usize, d: usize, n_per_class: usize) -> Self {
        Self {
            k,
            d,
            n_per_class,
            imbalance: None,
            test_per_class: 100,
            intra_sigma: 0.35,
            proto_noise: 0.15,
            descriptions_per_class: 1,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(SaeError::invalid(format!("k must be at least 2, got {}", self.k)));
        }
        if self.d < 2 {
            return Err(SaeError::invalid(format!("d must be at least 2, got {}", self.d)));
        }
        if !(self.intra_sigma >= 0.0 && self.intra_sigma.is_finite()) {
            return Err(SaeError::invalid("intra_sigma must be finite and non-negative"));
        }
        if !(self.proto_noise >= 0.0 && self.proto_noise.is_finite()) {
            return Err(SaeError::invalid("proto_noise must be finite and non-negative"));
        }
        if self.descriptions_per_class == 0 {
            return Err(SaeError::invalid("descriptions_per_class must be at least 1"));
        }
        if let Some(w) = &self.imbalance {
            if w.len() != self.k {
                return Err(SaeError::invalid(format!(
                    "{} imbalance weights for {} classes",
                    w.len(),
                    self.k
                )));
            }
            if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(SaeError::invalid("imbalance weights must be finite and non-negative"));
            }
        }
        if self.class_counts().iter().sum::<usize>() == 0 {
            return Err(SaeError::invalid("generated pool would be empty"));
        }
        Ok(())
    }

    /// Pool sample count per class.
    pub fn class_counts(&self) -> Vec<usize> {
        match &self.imbalance {
            None => vec![self.n_per_class; self.k],
            Some(w) => w
                .iter()
                .map(|x| (self.n_per_class as f64 * x).round() as usize)
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPools {
    pub pool: EmbeddingPool,
    pub test: EmbeddingPool,
    /// `k × d` ground-truth class directions.
    pub directions: DenseMatrix<f64>,
    /// False when `k > d` forced non-orthogonal random directions.
    pub orthonormal: bool,
    /// Largest |cos| between two distinct class directions.
    pub max_direction_cosine: f64,
}

fn gaussian(rng: &mut SeededRng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.normal()).collect()
}

fn quantize(values: &mut [f64]) {
    values.iter_mut().for_each(|v| *v = *v as f32 as f64);
}

/// Random unit directions, Gram–Schmidt orthonormalized when `k ≤ d`.
fn class_directions(k: usize, d: usize, rng: &mut SeededRng) -> (Vec<Vec<f64>>, bool) {
    let orthonormal = k <= d;
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(k);
    while dirs.len() < k {
        let mut v = gaussian(rng, d);
        if orthonormal {
            for u in &dirs {
                let p = dot(&v, u);
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
            }
        }
        if dot(&v, &v).sqrt() > 1e-6 {
            dirs.push(normalized(&v));
        }
    }
    (dirs, orthonormal)
}

fn sample_split(
    dirs: &[Vec<f64>],
    counts: &[usize],
    sigma: f64,
    rng: &mut SeededRng,
) -> (Vec<f64>, Vec<usize>) {
    let d = dirs[0].len();
    let mut rows: Vec<(Vec<f64>, usize)> = Vec::with_capacity(counts.iter().sum());
    for (c, (&count, dir)) in counts.iter().zip(dirs).enumerate() {
        for _ in 0..count {
            let x: Vec<f64> = dir.iter().map(|&m| m + sigma * rng.normal()).collect();
            let mut x = normalized(&x);
            quantize(&mut x);
            rows.push((x, c));
        }
    }
    rng.shuffle(&mut rows);
    let mut values = Vec::with_capacity(rows.len() * d);
    let mut labels = Vec::with_capacity(rows.len());
    for (x, y) in rows {
        values.extend(x);
        labels.push(y);
    }
    (values, labels)
}

/// Deterministic in `cfg.seed`. Payloads are quantized to `f32` so that a
/// save/load round trip is exact.
pub fn generate_synthetic_pool(cfg: &SynthConfig) -> Result<SyntheticPools> {
    cfg.validate()?;
    let (k, d) = (cfg.k, cfg.d);
    let root = SeededRng::new(cfg.seed);

    let (dirs, orthonormal) = class_directions(k, d, &mut root.derive(1));
    let mut max_cos = 0.0f64;
    for i in 0..k {
        for j in 0..i {
            max_cos = max_cos.max(dot(&dirs[i], &dirs[j]).abs());
        }
    }
    if !orthonormal {
        log::warn!("k = {k} > d = {d}: class directions are random, max pairwise |cos| = {max_cos:.4}");
    }

    let mut proto_rng = root.derive(2);
    let mut proto_values = Vec::with_capacity(k * d);
    for dir in &dirs {
        let descriptions = (0..cfg.descriptions_per_class)
            .map(|_| {
                let v: Vec<f64> = dir.iter().map(|&m| m + cfg.proto_noise * proto_rng.normal()).collect();
                DenseVector::new(v)
            })
            .collect::<Result<Vec<_>>>()?;
        proto_values.extend(prototype_from_descriptions(&descriptions)?.into_vec());
    }
    quantize(&mut proto_values);
    let prototypes = DenseMatrix::new(k, d, proto_values)?;

    let class_names: Vec<String> = (0..k).map(|c| format!("class_{c}")).collect();
    let build = |counts: &[usize], stream: u64| -> Result<EmbeddingPool> {
        let (values, labels) = sample_split(&dirs, counts, cfg.intra_sigma, &mut root.derive(stream));
        let embeddings = DenseMatrix::new(labels.len(), d, values)?;
        let mut sims = compute_similarities(&embeddings, &prototypes)?;
        quantize(sims.as_mut_slice());
        EmbeddingPool::new(class_names.clone(), embeddings, sims, labels, Some(prototypes.clone()))
    };
    let pool = build(&cfg.class_counts(), 3)?;
    let test = build(&vec![cfg.test_per_class; k], 4)?;

    let directions = DenseMatrix::new(k, d, dirs.concat())?;
    Ok(SyntheticPools {
        pool,
        test,
        directions,
        orthonormal,
        max_direction_cosine: max_cos,
    })
}
