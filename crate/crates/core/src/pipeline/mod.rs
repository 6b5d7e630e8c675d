//! End-to-end disambiguation: mask pre-processing and OptIn gating,
//! transform estimation, patch extraction, scoring, fusion, output maps,
//! dataset evaluation and robustness sweeps.

mod eval;
mod preprocess;
mod run;
mod sweep;

use serde::{Deserialize, Serialize};

pub use eval::{
    evaluate, evaluate_dataset, evaluate_record, truth_for, CsvRow, KindMetrics, MetricsReport,
    RecordOutcome, Scenario,
};
pub use preprocess::{preprocess_mask, regions_from_labels, OPEN_AREA_RATIO};
pub use run::{disambiguate, render_outputs, DisambigOptions, DisambigResult, MaskInput, ScorerScores, Scorers, TransformSource};
pub use sweep::{degrade_labels, resize_record, robustness_sweep, SweepAxis, SweepPoint, SweepReport};

use crate::disambig::DisambigError;
use crate::imaging::{ImagingError, PixelSet};
use crate::synthgen::SynthError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("mask is {mask:?} but image is {image:?}")]
    DimensionMismatch { image: (usize, usize), mask: (usize, usize) },
    #[error("no scorer enabled")]
    NoScorer,
    #[error("result is OptOut ({0}); nothing to render")]
    NotOptIn(OptOutReason),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("empty sweep grid")]
    EmptyGrid,
    #[error("invalid sweep value: {0}")]
    InvalidSweepValue(String),
    #[error(transparent)]
    Disambig(#[from] DisambigError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{}: {source}", path.display())]
    Io { path: std::path::PathBuf, source: std::io::Error },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    GroundTruthMap,
    DetectorMask,
}

/// The two nearly duplicate regions. `p1` is the larger one; equal areas
/// fall back to raster order of the first pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionPair {
    pub p1: PixelSet,
    pub p2: PixelSet,
    pub provenance: Provenance,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptOutReason {
    FewerThanTwoRegions,
    RegionsNotSeparable,
    RegionTooSmall,
}

impl std::fmt::Display for OptOutReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptOutReason::FewerThanTwoRegions => "fewer-than-two-regions",
            OptOutReason::RegionsNotSeparable => "regions-not-separable",
            OptOutReason::RegionTooSmall => "region-too-small",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "kebab-case")]
pub enum OptStatus {
    OptIn,
    OptOut(OptOutReason),
}

impl OptStatus {
    pub fn is_opt_in(&self) -> bool {
        matches!(self, OptStatus::OptIn)
    }
}

impl std::fmt::Display for OptStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OptStatus::OptIn => f.write_str("opt-in"),
            OptStatus::OptOut(r) => write!(f, "opt-out:{r}"),
        }
    }
}
