use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smile::Architecture;

/// Per-sample loss used for the data term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Squared error, for regression.
    Mse,
    /// Binary cross-entropy on the logit, for 0/1 labels.
    Bce,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub architecture: Architecture,
    pub adam: AdamConfig,
    pub eta_dual: f64,
    pub lambda_box: f64,
    pub pretrain_epochs: usize,
    /// Stop pretraining after this many epochs without improvement of the total loss.
    pub pretrain_patience: Option<usize>,
    pub train_epochs: usize,
    pub batch_size: usize,
    /// Projector calls allowed in posttraining; one more generator call checks the result.
    pub post_max_iters: usize,
    pub projector_steps: usize,
    /// Step size of the projector's gradient descent.
    pub projector_lr: f64,
    pub projector_eta_dual: f64,
    /// Slack, as a multiple of the counterexample's violation, that the
    /// projector resolves each counterexample with.
    pub projector_margin: f64,
    pub gen_t0: f64,
    pub gen_t_max: f64,
    /// Limit for posttraining generator calls; `None` searches to completion.
    pub post_t_max: Option<f64>,
    pub resolved_tol: f64,
    pub pattern_tol: f64,
    pub seed: u64,
    /// Record elapsed time in telemetry; off keeps runs byte-reproducible.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::Mse,
            architecture: Architecture::default(),
            adam: AdamConfig::default(),
            eta_dual: 0.1,
            lambda_box: 1.0,
            pretrain_epochs: 50,
            pretrain_patience: None,
            train_epochs: 50,
            batch_size: 64,
            post_max_iters: 200,
            projector_steps: 200,
            projector_lr: 0.5,
            projector_eta_dual: 1.0,
            projector_margin: 0.0,
            gen_t0: 1.0,
            gen_t_max: 64.0,
            post_t_max: None,
            resolved_tol: 1e-8,
            pattern_tol: 1e-9,
            seed: 0,
            record_wall_time: false,
        }
    }
}

impl TrainConfig {
    /// Regression on one monotone feature.
    pub fn monotonicity() -> Self {
        TrainConfig {
            loss: LossKind::Mse,
            architecture: Architecture {
                backbone_hidden: vec![16, 32, 64, 32, 16],
                aux_hidden: Some(32),
                latent_dim: 8,
            },
            pretrain_epochs: 1000,
            pretrain_patience: Some(10),
            train_epochs: 100,
            batch_size: 64,
            gen_t0: 0.1,
            ..Default::default()
        }
    }

    /// Binary classification under input perturbations.
    pub fn robustness() -> Self {
        TrainConfig {
            loss: LossKind::Bce,
            architecture: Architecture {
                backbone_hidden: vec![32, 32],
                aux_hidden: None,
                latent_dim: 8,
            },
            pretrain_epochs: 60,
            train_epochs: 15,
            batch_size: 64,
            adam: AdamConfig::with_lr(3e-3),
            ..Default::default()
        }
    }

    /// Binary classification insensitive to protected features.
    pub fn fairness() -> Self {
        TrainConfig {
            loss: LossKind::Bce,
            architecture: Architecture {
                backbone_hidden: vec![32, 32],
                aux_hidden: Some(4),
                latent_dim: 8,
            },
            pretrain_epochs: 50,
            train_epochs: 50,
            batch_size: 128,
            adam: AdamConfig::with_lr(3e-3),
            gen_t_max: 1.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("adam.lr", self.adam.lr),
            ("adam.eps", self.adam.eps),
            ("projectorLr", self.projector_lr),
            ("etaDual", self.eta_dual),
            ("projectorEtaDual", self.projector_eta_dual),
            ("genT0", self.gen_t0),
            ("genTMax", self.gen_t_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Contract(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, b) in [
            ("adam", self.adam.beta1),
            ("adam", self.adam.beta2),
        ] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Contract(format!("{name} betas must lie in [0, 1), got {b}")));
            }
        }
        if !(self.projector_margin >= 0.0 && self.projector_margin.is_finite()) {
            return Err(Error::Contract(format!(
                "projectorMargin must be >= 0, got {}",
                self.projector_margin
            )));
        }
        if !(self.lambda_box >= 0.0 && self.lambda_box.is_finite()) {
            return Err(Error::Contract(format!(
                "lambdaBox must be >= 0, got {}",
                self.lambda_box
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Contract("batchSize must be positive".into()));
        }
        if let Some(t) = self.post_t_max {
            if !(t > 0.0) {
                return Err(Error::Contract(format!("postTMax must be positive, got {t}")));
            }
        }
        if !(self.resolved_tol >= 0.0 && self.pattern_tol >= 0.0) {
            return Err(Error::Contract("tolerances must be >= 0".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for c in [
            TrainConfig::default(),
            TrainConfig::monotonicity(),
            TrainConfig::robustness(),
            TrainConfig::fairness(),
        ] {
            c.validate().unwrap();
        }
    }

    #[test]
    fn rejects_bad_rates() {
        let mut c = TrainConfig::default();
        c.eta_dual = 0.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.lambda_box = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: TrainConfig = serde_json::from_str(r#"{"loss":"bce","batchSize":16}"#).unwrap();
        assert_eq!(c.loss, LossKind::Bce);
        assert_eq!(c.batch_size, 16);
        assert_eq!(c.eta_dual, 0.1);
    }
}
