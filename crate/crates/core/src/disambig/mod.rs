//! Hypothesis scoring: the analytic MSE scorer, the learned twin (four
//! branch) and siamese (two branch) scorers, and the transform-gated fusion
//! of their outputs.
//!
//! H0 means the first region is the source, H1 that it is the target.

mod checkpoint;
mod fusion;
mod model;
mod mse;
mod net;
mod train;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_model, save_model, Checkpoint, TensorEntry, CHECKPOINT_FORMAT};
pub use fusion::{fuse, FusionConfig, FusionOutcome};
pub use model::{
    patch_input, select_most_confident, siamese_forward, siamese_pair_scores, twin_forward,
    twin_forward_ordered, twin_symmetrized, Architecture, PairModel, SiameseModel, TwinModel,
};
pub use mse::{mse_score, MseScore, MIN_JOINT_VALIDITY};
pub use net::{NetConfig, ParamLayout};
pub use train::{
    siamese_loss_and_grad, siamese_sample_correct, siamese_samples, train_siamese, train_twin,
    twin_loss_and_grad, twin_sample_correct, twin_samples, EpochLog, PatchTensor, SiameseSample,
    TrainConfig, TrainingLog, TwinSample,
};

#[derive(Debug, thiserror::Error)]
pub enum DisambigError {
    #[error("invalid scores f_h0={f_h0}, f_h1={f_h1}")]
    InvalidScore { f_h0: f64, f_h1: f64 },
    #[error("no boundary pairs to score")]
    NoPairs,
    #[error("empty training set")]
    EmptyDataset,
    #[error("training loss became non-finite at epoch {0}")]
    NonFiniteLoss(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint {}: {message}", path.display())]
    Checkpoint { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    /// The first region is the source.
    H0,
    /// The first region is the target.
    H1,
}

impl Decision {
    pub fn flipped(self) -> Self {
        match self {
            Decision::H0 => Decision::H1,
            Decision::H1 => Decision::H0,
        }
    }
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Decision::H0 => "H0",
            Decision::H1 => "H1",
        })
    }
}

/// Probabilities of the two hypotheses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisScore {
    pub f_h0: f64,
    pub f_h1: f64,
}

impl HypothesisScore {
    pub const TIE: HypothesisScore = HypothesisScore { f_h0: 0.5, f_h1: 0.5 };

    pub fn new(f_h0: f64, f_h1: f64) -> Result<Self, DisambigError> {
        let ok = (0.0..=1.0).contains(&f_h0)
            && (0.0..=1.0).contains(&f_h1)
            && (f_h0 + f_h1 - 1.0).abs() <= 1e-9;
        if ok {
            Ok(Self { f_h0, f_h1 })
        } else {
            Err(DisambigError::InvalidScore { f_h0, f_h1 })
        }
    }

    /// Softmax over the logits `(z0, z1)`, stable for any finite magnitude.
    pub fn from_logits(z0: f64, z1: f64) -> Self {
        let (f_h0, f_h1) = softmax2(z0, z1);
        Self { f_h0, f_h1 }
    }

    /// Score with `f_h1 = sigmoid(z)`.
    pub fn from_h1_logit(z: f64) -> Self {
        let (f_h1, f_h0) = sigmoid_pair(z);
        Self { f_h0, f_h1 }
    }

    /// Relabeled view: the hypotheses trade places.
    pub fn swapped(self) -> Self {
        Self { f_h0: self.f_h1, f_h1: self.f_h0 }
    }

    pub fn is_tie(&self) -> bool {
        self.f_h0 == self.f_h1
    }

    /// H0 iff `f_h0 >= 0.5`; an exact tie resolves to H0.
    pub fn decision(&self) -> Decision {
        if self.f_h0 >= 0.5 {
            Decision::H0
        } else {
            Decision::H1
        }
    }
}

/// `(sigmoid(z), 1 - sigmoid(z))`, each computed without cancellation.
pub fn sigmoid_pair(z: f64) -> (f64, f64) {
    if z >= 0.0 {
        let e = (-z).exp();
        (1.0 / (1.0 + e), e / (1.0 + e))
    } else {
        let e = z.exp();
        (e / (1.0 + e), 1.0 / (1.0 + e))
    }
}

pub fn sigmoid(z: f64) -> f64 {
    sigmoid_pair(z).0
}

/// Two-class softmax via the max-subtracted form.
pub fn softmax2(z0: f64, z1: f64) -> (f64, f64) {
    sigmoid_pair(z0 - z1)
}
