use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::schedule::{dual_factor_scores, schedule_weights};
use super::scoring::{baseline_scores, kcenter_greedy, Strategy};
use super::select::{round_budget, select_batch, BudgetBasis, RoundPlan};
use crate::datapool::EmbeddingPool;
use crate::error::{Result, SaeError};
use crate::evidence::{decompose, evidence_from_similarity};
use crate::metrics::{calibration_report, top1_accuracy, RoundPoint, RoundTrajectory};
use crate::numerics::{DenseMatrix, DenseVector, SeededRng};
use crate::probe::{train_probe, LinearProbe, ProbeConfig};
use crate::seh::{train_seh, SehConfig, SehModel};

/// One acquired sample. Evidential fields are `None` for baselines and for
/// warm-start seeds (round 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub round: usize,
    pub index: usize,
    pub score: f64,
    pub vacuity: Option<f64>,
    pub dissonance: Option<f64>,
    pub w_v: Option<f64>,
    pub w_d: Option<f64>,
}

impl SelectionRecord {
    fn plain(round: usize, index: usize, score: f64) -> Self {
        Self {
            round,
            index,
            score,
            vacuity: None,
            dissonance: None,
            w_v: None,
            w_d: None,
        }
    }
}

/// Labeled/unlabeled partition of the pool plus the acquisition log.
#[derive(Debug, Clone, PartialEq)]
pub struct AlState {
    n: usize,
    /// In acquisition order.
    labeled: Vec<usize>,
    /// Ascending.
    unlabeled: Vec<usize>,
    round: usize,
    log: Vec<SelectionRecord>,
}

impl AlState {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            labeled: Vec::new(),
            unlabeled: (0..n).collect(),
            round: 0,
            log: Vec::new(),
        }
    }

    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &[usize] {
        &self.unlabeled
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn log(&self) -> &[SelectionRecord] {
        &self.log
    }

    /// Moves the selected indices from the unlabeled to the labeled set.
    pub fn acquire(&mut self, round: usize, picks: Vec<SelectionRecord>) -> Result<()> {
        if round < self.round {
            return Err(SaeError::InvalidState(format!(
                "round {round} recorded after round {}",
                self.round
            )));
        }
        let mut chosen = vec![false; self.n];
        for p in &picks {
            if p.round != round {
                return Err(SaeError::InvalidState(format!(
                    "pick of sample {} is tagged round {}, expected {round}",
                    p.index, p.round
                )));
            }
            if p.index >= self.n || self.unlabeled.binary_search(&p.index).is_err() || chosen[p.index] {
                return Err(SaeError::InvalidState(format!(
                    "sample {} is not an unlabeled pool index or was picked twice",
                    p.index
                )));
            }
            chosen[p.index] = true;
        }
        self.unlabeled.retain(|&i| !chosen[i]);
        self.labeled.extend(picks.iter().map(|p| p.index));
        self.log.extend(picks);
        self.round = round;
        self.check_invariants()
    }

    /// Disjoint partition of `0..n`, and every labeled sample logged once.
    pub fn check_invariants(&self) -> Result<()> {
        let mut seen = vec![0u8; self.n];
        for &i in self.labeled.iter().chain(&self.unlabeled) {
            if i >= self.n || seen[i] != 0 {
                return Err(SaeError::InvalidState(format!("sample {i} appears twice or out of range")));
            }
            seen[i] = 1;
        }
        if self.labeled.len() + self.unlabeled.len() != self.n {
            return Err(SaeError::InvalidState("labeled and unlabeled sets do not cover the pool".into()));
        }
        if self.log.len() != self.labeled.len()
            || self.log.iter().zip(&self.labeled).any(|(r, &i)| r.index != i)
        {
            return Err(SaeError::InvalidState("selection log does not match the labeled set".into()));
        }
        Ok(())
    }
}

/// Everything a strategy may look at when choosing a batch.
pub struct RoundContext<'a> {
    pub pool: &'a EmbeddingPool,
    pub labeled: &'a [usize],
    pub unlabeled: &'a [usize],
    pub probe: &'a LinearProbe<f64>,
    pub seh: &'a SehModel<f64>,
    pub round: usize,
    pub rounds: usize,
    pub tau: f64,
}

/// A batch-selection policy. Implementors only choose samples; the driver
/// owns all bookkeeping.
pub trait Acquisition: Sync {
    fn label(&self) -> String;

    /// Whether the evidence head is trained and used for evaluation.
    fn is_evidential(&self) -> bool;

    /// Exactly `n` distinct unlabeled indices, best first.
    fn select(&self, ctx: &RoundContext<'_>, n: usize, rng: &mut SeededRng) -> Result<Vec<SelectionRecord>>;
}

/// Per-sample evidential quantities under a trained head.
pub struct EvidentialView {
    pub lambda: Vec<f64>,
    pub vacuity: Vec<f64>,
    pub dissonance: Vec<f64>,
    /// Expected class probabilities `α / S`, one row per sample.
    pub probs: DenseMatrix<f64>,
}

pub fn evidential_view(
    seh: &SehModel<f64>,
    x: &DenseMatrix<f64>,
    s: &DenseMatrix<f64>,
    tau: f64,
) -> Result<EvidentialView> {
    let lambda = seh.predict(x, s)?.into_vec();
    let k = s.cols();
    let mut vacuity = Vec::with_capacity(lambda.len());
    let mut dissonance = Vec::with_capacity(lambda.len());
    let mut probs = Vec::with_capacity(lambda.len() * k);
    for (row, &l) in s.row_iter().zip(&lambda) {
        let ev = evidence_from_similarity(&DenseVector::from_vec_unchecked(row.to_vec()), l, tau)
            .map_err(|e| SaeError::Numerical(format!("evidence head output unusable: {e}")))?;
        let u = decompose(&ev);
        vacuity.push(u.vacuity);
        dissonance.push(u.dissonance);
        probs.extend(u.expected_prob.into_vec());
    }
    Ok(EvidentialView {
        lambda,
        vacuity,
        dissonance,
        probs: DenseMatrix::from_parts_unchecked(s.rows(), k, probs),
    })
}

impl Acquisition for Strategy {
    fn label(&self) -> String {
        Strategy::label(*self)
    }

    fn is_evidential(&self) -> bool {
        Strategy::is_evidential(*self)
    }

    fn select(&self, ctx: &RoundContext<'_>, n: usize, rng: &mut SeededRng) -> Result<Vec<SelectionRecord>> {
        let u = ctx.unlabeled;
        match *self {
            Strategy::Sae(kind) => {
                let x = ctx.pool.embeddings.select_rows(u)?;
                let s = ctx.pool.similarities.select_rows(u)?;
                let view = evidential_view(ctx.seh, &x, &s, ctx.tau)?;
                let vac = DenseVector::from_vec_unchecked(view.vacuity);
                let dis = DenseVector::from_vec_unchecked(view.dissonance);
                let scores = dual_factor_scores(&vac, &dis, ctx.round, ctx.rounds, kind)?;
                let (w_v, w_d) = schedule_weights(ctx.round, ctx.rounds, kind)?;
                Ok(select_batch(&scores, n)?
                    .into_iter()
                    .map(|p| SelectionRecord {
                        round: ctx.round,
                        index: u[p],
                        score: scores[p],
                        vacuity: Some(vac[p]),
                        dissonance: Some(dis[p]),
                        w_v: Some(w_v),
                        w_d: Some(w_d),
                    })
                    .collect())
            }
            Strategy::CoresetKcenter => Ok(kcenter_greedy(&ctx.pool.embeddings, u, ctx.labeled, n)?
                .into_iter()
                .map(|(i, d)| SelectionRecord::plain(ctx.round, i, d))
                .collect()),
            baseline => {
                let probs = ctx.probe.predict_proba(&ctx.pool.embeddings.select_rows(u)?)?;
                let scores = baseline_scores(baseline, &probs, rng)?;
                Ok(select_batch(&scores, n)?
                    .into_iter()
                    .map(|p| SelectionRecord::plain(ctx.round, u[p], scores[p]))
                    .collect())
            }
        }
    }
}

/// Settings of one active-learning run, shared by every strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlConfig {
    pub rounds: usize,
    pub rho: f64,
    pub budget_basis: BudgetBasis,
    /// Softmax temperature turning similarities into evidence shares.
    pub tau: f64,
    /// Labeled samples per class drawn at random before round 1.
    pub n_seed_per_class: usize,
    pub probe: ProbeConfig,
    /// Head settings; dimensions are taken from the pool.
    pub seh: SehConfig,
}

impl AlConfig {
    pub fn new(d_img: usize, k: usize) -> Self {
        Self {
            rounds: 5,
            rho: 0.2,
            budget_basis: BudgetBasis::Initial,
            tau: 0.01,
            n_seed_per_class: 0,
            probe: ProbeConfig::default(),
            seh: SehConfig::new(d_img, k),
        }
    }
}

/// Trajectory, acquisitions and final predictions of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub strategy: String,
    pub trajectory: RoundTrajectory,
    pub selections: Vec<SelectionRecord>,
    /// Round at which the pool ran out, if it did.
    pub early_stop_round: Option<usize>,
    /// Test-set class probabilities after the last completed round.
    pub final_probs: DenseMatrix<f64>,
    /// Probe softmax on the test set, kept next to `final_probs` when those
    /// are evidential.
    pub final_probe_probs: Option<DenseMatrix<f64>>,
    pub test_labels: Vec<usize>,
    /// Evidence-head loss per epoch for each round's retraining; empty when
    /// the head was not trained that round.
    pub seh_epoch_losses: Vec<Vec<f64>>,
    /// Wall-clock seconds per round. Not reproducible by nature.
    pub round_seconds: Vec<f64>,
}

const STREAM_HEAD_INIT: u64 = 1;
const STREAM_WARM_START: u64 = 2;
const STREAM_ACQUIRE: u64 = 0x100;
const STREAM_PROBE: u64 = 0x200;
const STREAM_SEH: u64 = 0x300;

struct Models {
    probe: LinearProbe<f64>,
    seh: SehModel<f64>,
    seh_losses: Vec<f64>,
}

fn fit_models(
    pool: &EmbeddingPool,
    labeled: &[usize],
    cfg: &AlConfig,
    seh_cfg: &SehConfig,
    evidential: bool,
    root: &SeededRng,
    round: u64,
    previous_seh: SehModel<f64>,
) -> Result<Models> {
    let (k, d) = (pool.k(), pool.d());
    let x = pool.embeddings.select_rows(labeled)?;
    let y: Vec<usize> = labeled.iter().map(|&i| pool.labels[i]).collect();
    let probe = if labeled.is_empty() {
        LinearProbe::zeros(k, d)
    } else {
        match train_probe(&x, &y, k, &cfg.probe, &mut root.derive(STREAM_PROBE + round)) {
            Ok(p) => p,
            Err(SaeError::DegenerateLabels) => LinearProbe::zeros(k, d),
            Err(e) => return Err(e),
        }
    };
    if !evidential || labeled.len() < 2 {
        return Ok(Models {
            probe,
            seh: previous_seh,
            seh_losses: Vec::new(),
        });
    }
    let l_cls = probe.per_sample_cross_entropy(&x, &y)?.into_vec();
    let s = pool.similarities.select_rows(labeled)?;
    let trained = train_seh(&x, &s, &l_cls, seh_cfg, &mut root.derive(STREAM_SEH + round))?;
    Ok(Models {
        probe,
        seh: trained.model,
        seh_losses: trained.epoch_losses,
    })
}

fn warm_start(pool: &EmbeddingPool, per_class: usize, rng: &mut SeededRng) -> Vec<SelectionRecord> {
    let mut picks = Vec::new();
    for c in 0..pool.k() {
        let mut members: Vec<usize> = (0..pool.n()).filter(|&i| pool.labels[i] == c).collect();
        rng.shuffle(&mut members);
        members.truncate(per_class);
        members.sort_unstable();
        picks.extend(members.into_iter().map(|i| SelectionRecord::plain(0, i, 0.0)));
    }
    picks
}

struct Evaluation {
    accuracy: f64,
    nll: f64,
    ece: f64,
    probs: DenseMatrix<f64>,
    probe_probs: Option<DenseMatrix<f64>>,
}

/// Probe accuracy on the test set, plus calibration of the strategy's own
/// probabilities: `α / S` for evidential strategies, probe softmax otherwise.
fn evaluate(test: &EmbeddingPool, models: &Models, evidential: bool, tau: f64) -> Result<Evaluation> {
    let probe_probs = models.probe.predict_proba(&test.embeddings)?;
    let accuracy = top1_accuracy(&models.probe.predict(&test.embeddings)?, &test.labels)?;
    let (probs, probe_probs) = if evidential {
        let view = evidential_view(&models.seh, &test.embeddings, &test.similarities, tau)?;
        (view.probs, Some(probe_probs))
    } else {
        (probe_probs, None)
    };
    let report = calibration_report(&probs, &test.labels)?;
    Ok(Evaluation {
        accuracy,
        nll: report.nll,
        ece: report.ece,
        probs,
        probe_probs,
    })
}

/// Runs the round loop for one seed: score the unlabeled pool, query the
/// oracle (the stored labels), retrain, evaluate.
pub fn run_active_learning(
    pool: &EmbeddingPool,
    test: &EmbeddingPool,
    cfg: &AlConfig,
    strategy: &dyn Acquisition,
    seed: u64,
) -> Result<SeedRun> {
    if pool.n() == 0 {
        return Err(SaeError::invalid("pool is empty"));
    }
    if test.n() == 0 || test.k() != pool.k() || test.d() != pool.d() {
        return Err(SaeError::invalid(format!(
            "test set ({} samples, d={}, k={}) does not match the pool (d={}, k={})",
            test.n(),
            test.d(),
            test.k(),
            pool.d(),
            pool.k()
        )));
    }
    if !(cfg.tau > 0.0 && cfg.tau.is_finite()) {
        return Err(SaeError::invalid(format!("tau must be positive, got {}", cfg.tau)));
    }
    let mut seh_cfg = cfg.seh.clone();
    seh_cfg.d_img = pool.d();
    seh_cfg.k = pool.k();
    seh_cfg.validate()?;

    let plan = RoundPlan {
        rounds: cfg.rounds,
        rho: cfg.rho,
        initial_pool_size: pool.n(),
        basis: cfg.budget_basis,
    };
    plan.validate()?;

    let evidential = strategy.is_evidential();
    let root = SeededRng::new(seed);
    let mut state = AlState::new(pool.n());
    let fresh_seh = SehModel::new(&seh_cfg, &mut root.derive(STREAM_HEAD_INIT))?;

    let mut models = Models {
        probe: LinearProbe::zeros(pool.k(), pool.d()),
        seh: fresh_seh,
        seh_losses: Vec::new(),
    };
    if cfg.n_seed_per_class > 0 {
        let seeds = warm_start(pool, cfg.n_seed_per_class, &mut root.derive(STREAM_WARM_START));
        state.acquire(0, seeds)?;
        models = fit_models(pool, state.labeled(), cfg, &seh_cfg, evidential, &root, 0, models.seh)?;
    }

    let mut trajectory = RoundTrajectory::default();
    let mut seh_epoch_losses = Vec::new();
    let mut round_seconds = Vec::new();
    let mut early_stop_round = None;
    let mut last_eval = None;

    for t in 1..=cfg.rounds {
        if state.unlabeled().is_empty() {
            early_stop_round = Some(t);
            break;
        }
        let started = Instant::now();
        let n_t = round_budget(&plan, t, state.unlabeled().len())?;
        let ctx = RoundContext {
            pool,
            labeled: state.labeled(),
            unlabeled: state.unlabeled(),
            probe: &models.probe,
            seh: &models.seh,
            round: t,
            rounds: cfg.rounds,
            tau: cfg.tau,
        };
        let picks = strategy.select(&ctx, n_t, &mut root.derive(STREAM_ACQUIRE + t as u64))?;
        if picks.len() != n_t {
            return Err(SaeError::InvalidState(format!(
                "{} returned {} picks, expected {n_t}",
                strategy.label(),
                picks.len()
            )));
        }
        state.acquire(t, picks)?;

        models = fit_models(pool, state.labeled(), cfg, &seh_cfg, evidential, &root, t as u64, models.seh)?;
        let eval = evaluate(test, &models, evidential, cfg.tau)?;
        trajectory.push(RoundPoint {
            round: t,
            n_labeled: state.labeled().len(),
            accuracy: eval.accuracy,
            nll: eval.nll,
            ece: eval.ece,
        })?;
        seh_epoch_losses.push(std::mem::take(&mut models.seh_losses));
        last_eval = Some(eval);
        round_seconds.push(started.elapsed().as_secs_f64());
    }

    let last_eval = match last_eval {
        Some(e) => e,
        None => evaluate(test, &models, evidential, cfg.tau)?,
    };
    Ok(SeedRun {
        seed,
        strategy: strategy.label(),
        trajectory,
        selections: state.log().to_vec(),
        early_stop_round,
        final_probs: last_eval.probs,
        final_probe_probs: last_eval.probe_probs,
        test_labels: test.labels.clone(),
        seh_epoch_losses,
        round_seconds,
    })
}
