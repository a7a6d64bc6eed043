use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, StrategyName};
use super::result::{run_experiment_on, ExperimentResult, MeanStd};
use crate::acquisition::ScheduleKind;
use crate::datapool::EmbeddingPool;
use crate::error::{Result, SaeError};
use crate::seh::{LossVariant, RegressionForm};

pub const BETA_GRID: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 1.0];
pub const EPSILON_GRID: [f64; 5] = [1e-4, 5e-4, 1e-3, 5e-3, 1e-2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    LossVariant,
    RegressionForm,
    Beta,
    Epsilon,
    Schedule,
}

impl AblationAxis {
    pub const ALL: [AblationAxis; 5] = [
        AblationAxis::LossVariant,
        AblationAxis::RegressionForm,
        AblationAxis::Beta,
        AblationAxis::Epsilon,
        AblationAxis::Schedule,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationAxis::LossVariant => "loss_variant",
            AblationAxis::RegressionForm => "regression_form",
            AblationAxis::Beta => "beta",
            AblationAxis::Epsilon => "epsilon",
            AblationAxis::Schedule => "schedule",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }

    /// The base config with this axis set to each of its values, labeled.
    pub fn variants(self, base: &RunConfig) -> Vec<(String, RunConfig)> {
        let with = |f: &dyn Fn(&mut RunConfig)| {
            let mut c = base.clone();
            f(&mut c);
            c
        };
        match self {
            AblationAxis::LossVariant => LossVariant::ALL
                .iter()
                .map(|&v| (v.name().to_string(), with(&|c| c.loss_variant = v)))
                .collect(),
            AblationAxis::RegressionForm => [RegressionForm::Inverse, RegressionForm::Log]
                .iter()
                .map(|&v| (v.name().to_string(), with(&|c| c.regression_form = v)))
                .collect(),
            AblationAxis::Beta => BETA_GRID
                .iter()
                .map(|&v| (format!("beta={v}"), with(&|c| c.beta = v)))
                .collect(),
            AblationAxis::Epsilon => EPSILON_GRID
                .iter()
                .map(|&v| (format!("epsilon={v}"), with(&|c| c.epsilon = v)))
                .collect(),
            AblationAxis::Schedule => ScheduleKind::ALL
                .iter()
                .map(|&v| (v.name().to_string(), with(&|c| c.schedule = v)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub accuracy: MeanStd,
    pub nll: MeanStd,
    pub ece: MeanStd,
}

impl AblationRow {
    pub fn from_result(variant: &str, result: &ExperimentResult) -> Self {
        Self {
            variant: variant.to_string(),
            accuracy: result.final_accuracy(),
            nll: result.final_nll(),
            ece: result.final_ece(),
        }
    }
}

/// Runs the base config once per value of `axis`. Every axis varies a part
/// of the evidential pipeline, so the base strategy must be `sae`.
pub fn run_ablation(
    pool: &EmbeddingPool,
    test: &EmbeddingPool,
    base: &RunConfig,
    axis: AblationAxis,
) -> Result<Vec<(AblationRow, ExperimentResult)>> {
    if base.strategy != StrategyName::Sae {
        return Err(SaeError::Config(format!(
            "ablation over {} needs strategy \"sae\", got \"{}\"",
            axis.name(),
            base.strategy.name()
        )));
    }
    axis.variants(base)
        .into_iter()
        .map(|(label, cfg)| {
            let result = run_experiment_on(pool, test, &cfg)?;
            Ok((AblationRow::from_result(&label, &result), result))
        })
        .collect()
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("variant,accuracy_mean,accuracy_std,nll_mean,nll_std,ece_mean,ece_std\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.variant, r.accuracy.mean, r.accuracy.std, r.nll.mean, r.nll.std, r.ece.mean, r.ece.std
        );
    }
    out
}
