//! Open-set device classifier: a compact K-way CNN backbone plus a
//! generator/discriminator pair trained on its frozen pre-logit features.
//!
//! Training happens in two phases. The backbone is first fit as a standard
//! K-way classifier on legitimate-device images only. It is then frozen and
//! a GAN is trained in feature space: the generator synthesizes pseudo
//! open-set features from noise while the discriminator learns to score how
//! "known" a feature looks. No real impostor images are ever consumed during
//! training; held-out impostors touch only threshold calibration. Inference
//! is a single forward pass: accept iff the discriminator score clears the
//! calibrated threshold and the predicted class matches the claimed identity.

pub mod backbone;
pub mod calibrate;
pub mod gan;
pub mod manifest;
pub mod metrics;
pub mod train;

pub use backbone::{Backbone, BackboneConfig};
pub use calibrate::{calibrate_threshold, AuthDecision, CalibrationRecord, OpenSetModel};
pub use gan::{Discriminator, GanPair, Generator};
pub use metrics::{confusion_at_tau, evaluate, Confusion, MetricsReport};
pub use train::{extract_feature, extract_features, train_closed_set, train_open_gan};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::ModelInput;

#[derive(Debug, Error)]
pub enum OpensetError {
    #[error("class {0} has no training samples")]
    EmptyClass(usize),
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    TrainingDiverged { epoch: usize },
    #[error("input shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("threshold calibration requires a non-empty validation impostor set")]
    CalibrationImpossible,
    #[error("evaluation requires non-empty legitimate and impostor test sets")]
    EvaluationImpossible,
    #[error("model manifest error: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which dataset split a set of samples belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Labeled images from legitimate devices. Labels are dense class indices
/// in 0..K.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Vec<ModelInput>,
    pub labels: Vec<usize>,
    pub split: Split,
}

impl Dataset {
    pub fn new(inputs: Vec<ModelInput>, labels: Vec<usize>, split: Split) -> Self {
        assert_eq!(inputs.len(), labels.len());
        Self {
            inputs,
            labels,
            split,
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Threshold selection rule used at calibration time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Maximize validation open-set F1 (legit-accept as positive class).
    #[default]
    MaxF1,
    /// Equalize score-level false-accept and false-reject rates.
    EqualErrorRate,
}

/// Training hyperparameters, recorded verbatim in the model manifest.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Hyperparameters {
    pub closed_lr: f64,
    pub closed_weight_decay: f64,
    pub closed_epochs: usize,
    pub closed_batch: usize,
    pub gan_epochs: usize,
    pub gan_batch: usize,
    pub gan_lr_g: f64,
    pub gan_lr_d: f64,
    pub gan_weight_decay: f64,
    /// Smoothed target for enrolled features.
    pub label_real: f32,
    /// Smoothed target for generated features.
    pub label_fake: f32,
    /// Weight of the generated-feature term in the discriminator objective.
    pub lambda_g: f32,
    pub z_dim: usize,
    pub hidden_g: usize,
    pub hidden_d: usize,
    pub threshold_rule: ThresholdRule,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            closed_lr: 1e-4,
            closed_weight_decay: 1e-3,
            closed_epochs: 10,
            closed_batch: 32,
            gan_epochs: 50,
            gan_batch: 256,
            gan_lr_g: 3e-4,
            gan_lr_d: 1.2e-4,
            gan_weight_decay: 1e-3,
            label_real: 0.95,
            label_fake: 0.05,
            lambda_g: 1.0,
            z_dim: 100,
            hidden_g: 256,
            hidden_d: 256,
            threshold_rule: ThresholdRule::MaxF1,
        }
    }
}
