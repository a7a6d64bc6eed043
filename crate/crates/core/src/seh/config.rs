use serde::{Deserialize, Serialize};

use crate::error::{Result, SaeError};

/// Which terms of the evidence-head loss are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    /// Difficulty regression plus `β` times entropy regression.
    Dual,
    DifficultyOnly,
    EntropyOnly,
}

/// Transform of `λ` regressed onto the per-sample classification loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionForm {
    /// `1 / (λ + ε)`
    Inverse,
    /// `−log λ`
    Log,
}

impl LossVariant {
    pub const ALL: [LossVariant; 3] = [
        LossVariant::EntropyOnly,
        LossVariant::DifficultyOnly,
        LossVariant::Dual,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossVariant::Dual => "dual",
            LossVariant::DifficultyOnly => "difficulty_only",
            LossVariant::EntropyOnly => "entropy_only",
        }
    }
}

impl RegressionForm {
    pub fn name(self) -> &'static str {
        match self {
            RegressionForm::Inverse => "inverse",
            RegressionForm::Log => "log",
        }
    }
}

/// Architecture and training hyperparameters of the evidence head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SehConfig {
    pub d_img: usize,
    pub k: usize,
    pub h1: usize,
    pub h2: usize,
    pub h_s: usize,
    pub dropout_rate: f64,
    pub beta: f64,
    pub epsilon: f64,
    /// Temperature of the frozen softmax whose entropy is the regression target.
    pub tau_f: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub bn_momentum: f64,
    pub loss_variant: LossVariant,
    pub regression_form: RegressionForm,
    /// Upper bound on the global L2 norm of each SGD step's gradient.
    pub grad_clip_norm: Option<f64>,
}

impl SehConfig {
    pub fn new(d_img: usize, k: usize) -> Self {
        Self {
            d_img,
            k,
            h1: 256,
            h2: 128,
            h_s: 64,
            dropout_rate: 0.1,
            beta: 0.5,
            epsilon: 1e-3,
            tau_f: 0.01,
            learning_rate: 0.002,
            epochs: 100,
            batch_size: 32,
            bn_momentum: 0.1,
            loss_variant: LossVariant::Dual,
            regression_form: RegressionForm::Inverse,
            grad_clip_norm: Some(1000.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [
            ("d_img", self.d_img),
            ("k", self.k),
            ("h1", self.h1),
            ("h2", self.h2),
            ("h_s", self.h_s),
            ("batch_size", self.batch_size),
        ];
        for (name, w) in widths {
            if w == 0 {
                return Err(SaeError::invalid(format!("{name} must be at least 1")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(SaeError::invalid(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(SaeError::invalid(format!("beta must be >= 0, got {}", self.beta)));
        }
        for (name, v) in [
            ("epsilon", self.epsilon),
            ("tau_f", self.tau_f),
            ("learning_rate", self.learning_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SaeError::invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(SaeError::invalid(format!(
                "bn_momentum must be in [0, 1], got {}",
                self.bn_momentum
            )));
        }
        if let Some(c) = self.grad_clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(SaeError::invalid(format!("grad_clip_norm must be > 0, got {c}")));
            }
        }
        Ok(())
    }
}
