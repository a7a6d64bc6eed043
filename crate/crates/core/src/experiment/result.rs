use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::acquisition::{run_active_learning, SeedRun};
use crate::datapool::{load_pool, EmbeddingPool};
use crate::error::{Result, SaeError};
use crate::metrics::{calibration_report, CalibrationReport};
use crate::numerics::DenseMatrix;

/// Mean and sample standard deviation; the deviation is 0 for one value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, std }
    }
}

/// Cross-seed summary of one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundAggregate {
    pub round: usize,
    /// Seeds that reached this round.
    pub n_seeds: usize,
    pub n_labeled: MeanStd,
    pub accuracy: MeanStd,
    pub nll: MeanStd,
    pub ece: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: RunConfig,
    pub strategy: String,
    pub seeds: Vec<SeedRun>,
    pub aggregate: Vec<RoundAggregate>,
    /// Calibration of the final-round predictions of every seed, pooled in
    /// seed order.
    pub final_calibration: CalibrationReport<f64>,
    /// Same, from the probe softmax, for evidential strategies.
    pub probe_final_calibration: Option<CalibrationReport<f64>>,
    /// Accuracy at round 3 over accuracy at round 5 of the mean trajectory.
    pub round_efficiency: Option<f64>,
    pub wall_clock_seconds: f64,
}

impl ExperimentResult {
    pub fn final_round(&self) -> Option<&RoundAggregate> {
        self.aggregate.last()
    }

    /// Mean final-round accuracy over seeds.
    pub fn final_accuracy(&self) -> MeanStd {
        self.final_metric(|p| p.accuracy)
    }

    pub fn final_ece(&self) -> MeanStd {
        self.final_metric(|p| p.ece)
    }

    pub fn final_nll(&self) -> MeanStd {
        self.final_metric(|p| p.nll)
    }

    fn final_metric(&self, f: impl Fn(&crate::metrics::RoundPoint) -> f64) -> MeanStd {
        let values: Vec<f64> = self
            .seeds
            .iter()
            .filter_map(|s| s.trajectory.points.last().map(&f))
            .collect();
        MeanStd::of(&values)
    }

    /// Recomputes the aggregates from the per-seed data and reports the largest
    /// absolute discrepancy with the stored ones.
    pub fn aggregate_discrepancy(&self) -> f64 {
        let fresh = aggregate(&self.seeds);
        if fresh.len() != self.aggregate.len() {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for (a, b) in fresh.iter().zip(&self.aggregate) {
            if a.round != b.round || a.n_seeds != b.n_seeds {
                return f64::INFINITY;
            }
            for (x, y) in [
                (a.n_labeled, b.n_labeled),
                (a.accuracy, b.accuracy),
                (a.nll, b.nll),
                (a.ece, b.ece),
            ] {
                worst = worst.max((x.mean - y.mean).abs()).max((x.std - y.std).abs());
            }
        }
        worst
    }
}

pub fn aggregate(seeds: &[SeedRun]) -> Vec<RoundAggregate> {
    let max_round = seeds
        .iter()
        .filter_map(|s| s.trajectory.points.last().map(|p| p.round))
        .max()
        .unwrap_or(0);
    (1..=max_round)
        .filter_map(|round| {
            let points: Vec<_> = seeds
                .iter()
                .filter_map(|s| s.trajectory.points.iter().find(|p| p.round == round))
                .collect();
            if points.is_empty() {
                return None;
            }
            let stat = |f: &dyn Fn(&crate::metrics::RoundPoint) -> f64| {
                MeanStd::of(&points.iter().map(|p| f(p)).collect::<Vec<_>>())
            };
            Some(RoundAggregate {
                round,
                n_seeds: points.len(),
                n_labeled: stat(&|p| p.n_labeled as f64),
                accuracy: stat(&|p| p.accuracy),
                nll: stat(&|p| p.nll),
                ece: stat(&|p| p.ece),
            })
        })
        .collect()
}

/// Stacks per-seed prediction matrices and labels, in seed order.
fn pooled(seeds: &[SeedRun], pick: impl Fn(&SeedRun) -> Option<&DenseMatrix<f64>>) -> Result<Option<CalibrationReport<f64>>> {
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut k = None;
    for s in seeds {
        let Some(m) = pick(s) else { return Ok(None) };
        if *k.get_or_insert(m.cols()) != m.cols() || m.rows() != s.test_labels.len() {
            return Err(SaeError::InvalidState(format!(
                "seed {}: stored predictions do not match the test labels",
                s.seed
            )));
        }
        values.extend_from_slice(m.as_slice());
        labels.extend_from_slice(&s.test_labels);
    }
    let Some(k) = k else { return Ok(None) };
    let stacked = DenseMatrix::new(labels.len(), k, values)?;
    Ok(Some(calibration_report(&stacked, &labels)?))
}

/// Final-round calibration recomputed from the stored predictions.
pub fn recompute_calibration(seeds: &[SeedRun]) -> Result<CalibrationReport<f64>> {
    pooled(seeds, |s| Some(&s.final_probs))?
        .ok_or_else(|| SaeError::InvalidState("result holds no final predictions".into()))
}

pub fn recompute_probe_calibration(seeds: &[SeedRun]) -> Result<Option<CalibrationReport<f64>>> {
    pooled(seeds, |s| s.final_probe_probs.as_ref())
}

fn mean_efficiency(aggregate: &[RoundAggregate]) -> Option<f64> {
    let at = |r: usize| aggregate.iter().find(|a| a.round == r).map(|a| a.accuracy.mean);
    match (at(3), at(5)) {
        (Some(a3), Some(a5)) if a5 > 0.0 => Some(a3 / a5),
        _ => None,
    }
}

/// Runs every configured seed on in-memory pools. Seeds run in parallel;
/// results come back in config order and do not depend on scheduling.
pub fn run_experiment_on(pool: &EmbeddingPool, test: &EmbeddingPool, cfg: &RunConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let started = Instant::now();
    let al = cfg.al_config();
    let strategy = cfg.strategy();
    let seeds = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_active_learning(pool, test, &al, &strategy, seed))
        .collect::<Result<Vec<_>>>()?;
    let aggregate = aggregate(&seeds);
    Ok(ExperimentResult {
        config: cfg.clone(),
        strategy: strategy.label(),
        final_calibration: recompute_calibration(&seeds)?,
        probe_final_calibration: recompute_probe_calibration(&seeds)?,
        round_efficiency: mean_efficiency(&aggregate),
        aggregate,
        seeds,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Loads the pool and test directories named in the config and runs it.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let pool = load_pool(&cfg.pool_path)?;
    let test = load_pool(&cfg.test_path())?;
    run_experiment_on(&pool, &test, cfg)
}
