use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::acquisition::{AlConfig, BudgetBasis, ScheduleKind, Strategy};
use crate::error::{Result, SaeError};
use crate::probe::ProbeConfig;
use crate::seh::{LossVariant, RegressionForm, SehConfig};

/// Strategy family as written in a run config; `sae` takes its schedule from
/// the separate `schedule` field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    Sae,
    Random,
    Entropy,
    Margin,
    LeastConfidence,
    CoresetKcenter,
}

impl StrategyName {
    pub const ALL: [StrategyName; 6] = [
        StrategyName::Sae,
        StrategyName::Random,
        StrategyName::Entropy,
        StrategyName::Margin,
        StrategyName::LeastConfidence,
        StrategyName::CoresetKcenter,
    ];

    pub fn with_schedule(self, schedule: ScheduleKind) -> Strategy {
        match self {
            StrategyName::Sae => Strategy::Sae(schedule),
            StrategyName::Random => Strategy::Random,
            StrategyName::Entropy => Strategy::Entropy,
            StrategyName::Margin => Strategy::Margin,
            StrategyName::LeastConfidence => Strategy::LeastConfidence,
            StrategyName::CoresetKcenter => Strategy::CoresetKcenter,
        }
    }

    pub fn name(self) -> &'static str {
        self.with_schedule(ScheduleKind::Dynamic).family()
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

/// Evidence-head settings that are not promoted to the top level of
/// [`RunConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SehParams {
    pub h1: usize,
    pub h2: usize,
    pub h_s: usize,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub bn_momentum: f64,
    pub grad_clip_norm: Option<f64>,
}

impl Default for SehParams {
    fn default() -> Self {
        let c = SehConfig::new(1, 2);
        Self {
            h1: c.h1,
            h2: c.h2,
            h_s: c.h_s,
            dropout_rate: c.dropout_rate,
            learning_rate: c.learning_rate,
            epochs: c.epochs,
            batch_size: c.batch_size,
            bn_momentum: c.bn_momentum,
            grad_clip_norm: c.grad_clip_norm,
        }
    }
}

fn default_rho() -> f64 {
    0.2
}
fn default_rounds() -> usize {
    5
}
fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}
fn default_tau() -> f64 {
    0.01
}
fn default_beta() -> f64 {
    0.5
}
fn default_epsilon() -> f64 {
    1e-3
}
fn default_schedule() -> ScheduleKind {
    ScheduleKind::Dynamic
}
fn default_loss_variant() -> LossVariant {
    LossVariant::Dual
}
fn default_regression_form() -> RegressionForm {
    RegressionForm::Inverse
}

/// One experiment: a strategy run over several seeds on a pool/test pair.
///
/// Unknown JSON fields are rejected. Only `pool_path`, `strategy` and
/// `output_dir` are required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub pool_path: PathBuf,
    /// Defaults to the `<pool_path>_test` sibling written by the generator.
    #[serde(default)]
    pub test_path: Option<PathBuf>,
    pub strategy: StrategyName,
    #[serde(default = "default_schedule")]
    pub schedule: ScheduleKind,
    #[serde(default = "default_loss_variant")]
    pub loss_variant: LossVariant,
    #[serde(default = "default_regression_form")]
    pub regression_form: RegressionForm,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_tau")]
    pub tau_f: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub n_seed_per_class: usize,
    #[serde(default)]
    pub budget_basis: BudgetBasis,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default)]
    pub seh: SehParams,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn new(pool_path: impl Into<PathBuf>, strategy: StrategyName, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            pool_path: pool_path.into(),
            test_path: None,
            strategy,
            schedule: default_schedule(),
            loss_variant: default_loss_variant(),
            regression_form: default_regression_form(),
            rho: default_rho(),
            rounds: default_rounds(),
            seeds: default_seeds(),
            tau: default_tau(),
            tau_f: default_tau(),
            beta: default_beta(),
            epsilon: default_epsilon(),
            n_seed_per_class: 0,
            budget_basis: BudgetBasis::Initial,
            probe: ProbeConfig::default(),
            seh: SehParams::default(),
            output_dir: output_dir.into(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| SaeError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SaeError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            SaeError::Config(m) => SaeError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn test_path(&self) -> PathBuf {
        self.test_path.clone().unwrap_or_else(|| sibling_test_dir(&self.pool_path))
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy.with_schedule(self.schedule)
    }

    /// Settings for the round driver; head dimensions are filled in from the
    /// pool at run time.
    pub fn al_config(&self) -> AlConfig {
        let mut seh = SehConfig::new(1, 2);
        seh.h1 = self.seh.h1;
        seh.h2 = self.seh.h2;
        seh.h_s = self.seh.h_s;
        seh.dropout_rate = self.seh.dropout_rate;
        seh.learning_rate = self.seh.learning_rate;
        seh.epochs = self.seh.epochs;
        seh.batch_size = self.seh.batch_size;
        seh.bn_momentum = self.seh.bn_momentum;
        seh.grad_clip_norm = self.seh.grad_clip_norm;
        seh.beta = self.beta;
        seh.epsilon = self.epsilon;
        seh.tau_f = self.tau_f;
        seh.loss_variant = self.loss_variant;
        seh.regression_form = self.regression_form;
        AlConfig {
            rounds: self.rounds,
            rho: self.rho,
            budget_basis: self.budget_basis,
            tau: self.tau,
            n_seed_per_class: self.n_seed_per_class,
            probe: self.probe.clone(),
            seh,
        }
    }

    /// Checks every field that can be checked without touching the disk.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SaeError::Config(m));
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return bad(format!("rho must lie in (0, 1], got {}", self.rho));
        }
        if self.rounds == 0 {
            return bad("rounds must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be > 0, got {}", self.tau));
        }
        let p = &self.probe;
        if !(p.learning_rate > 0.0 && p.learning_rate.is_finite()) || p.batch_size == 0 {
            return bad("probe: learning_rate must be > 0 and batch_size at least 1".into());
        }
        self.al_config().seh.validate().map_err(|e| match e {
            SaeError::InvalidArgument(m) => SaeError::Config(m),
            other => other,
        })
    }
}

/// `<dir>_test` next to `dir`.
pub fn sibling_test_dir(pool_dir: &Path) -> PathBuf {
    let mut name = pool_dir
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_else(|| "pool".into());
    name.push("_test");
    pool_dir.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_json_takes_defaults() {
        let cfg = RunConfig::from_json(r#"{"pool_path": "p", "strategy": "sae", "output_dir": "o"}"#).unwrap();
        assert_eq!(cfg, RunConfig::new("p", StrategyName::Sae, "o"));
        assert_eq!(cfg.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(cfg.test_path(), PathBuf::from("p_test"));
        assert_eq!(cfg.strategy(), Strategy::Sae(ScheduleKind::Dynamic));
        let al = cfg.al_config();
        assert_eq!(al.seh.h1, 256);
        assert_eq!(al.tau, 0.01);
        assert_eq!(al.seh.tau_f, 0.01);
    }

    #[test]
    fn unknown_and_invalid_fields_are_config_errors() {
        let unknown = RunConfig::from_json(r#"{"pool_path": "p", "strategy": "sae", "output_dir": "o", "rh0": 0.1}"#);
        assert!(matches!(unknown, Err(SaeError::Config(m)) if m.contains("rh0")));
        let nested = RunConfig::from_json(r#"{"pool_path": "p", "strategy": "sae", "output_dir": "o", "seh": {"h3": 1}}"#);
        assert!(matches!(nested, Err(SaeError::Config(_))));
        let strategy = RunConfig::from_json(r#"{"pool_path": "p", "strategy": "badge", "output_dir": "o"}"#);
        assert!(matches!(strategy, Err(SaeError::Config(_))));
        for field in [r#""rho": 0"#, r#""rounds": 0"#, r#""seeds": []"#, r#""epsilon": 0"#, r#""seeds": [1, 1]"#] {
            let text = format!(r#"{{"pool_path": "p", "strategy": "random", "output_dir": "o", {field}}}"#);
            assert!(matches!(RunConfig::from_json(&text), Err(SaeError::Config(_))), "{field}");
        }
    }

    #[test]
    fn json_round_trip() {
        let mut cfg = RunConfig::new("a/b", StrategyName::CoresetKcenter, "out");
        cfg.test_path = Some("t".into());
        cfg.budget_basis = BudgetBasis::Current;
        cfg.seh.grad_clip_norm = None;
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in StrategyName::ALL {
            assert_eq!(StrategyName::parse(s.name()), Some(s));
        }
        assert_eq!(StrategyName::parse("sae_dynamic"), None);
    }
}
