use serde::{Deserialize, Serialize};

use super::{Decision, DisambigError, HypothesisScore};
use crate::geometry::{SimilarityTransform, NEAR_RIGID_MAX_ANGLE, NEAR_RIGID_MAX_SCALE_DEVIATION};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionConfig {
    /// Weight of the interpolation-path score for clearly non-rigid transforms.
    pub c: f64,
    pub max_angle_deg: f64,
    pub max_scale_deviation: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            c: 0.65,
            max_angle_deg: NEAR_RIGID_MAX_ANGLE,
            max_scale_deviation: NEAR_RIGID_MAX_SCALE_DEVIATION,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), DisambigError> {
        if !(self.c > 0.5 && self.c <= 1.0) {
            return Err(DisambigError::Config(format!("fusion c={} not in (0.5, 1]", self.c)));
        }
        if !(self.max_angle_deg >= 0.0) || !(self.max_scale_deviation >= 0.0) {
            return Err(DisambigError::Config("fusion thresholds must be non-negative".into()));
        }
        Ok(())
    }

    /// Weight of the interpolation path for transform `t`.
    pub fn w_tr(&self, t: &SimilarityTransform) -> f64 {
        if t.is_near_rigid_within(self.max_angle_deg, self.max_scale_deviation) {
            1.0 - self.c
        } else {
            self.c
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionOutcome {
    pub score: HypothesisScore,
    pub decision: Decision,
    pub w_tr: f64,
    pub w_si: f64,
}

/// Weighted mean of the interpolation-path score `f_tw` and the boundary
/// score `f_si`.
pub fn fuse(
    f_tw: &HypothesisScore,
    f_si: &HypothesisScore,
    t: &SimilarityTransform,
    cfg: &FusionConfig,
) -> FusionOutcome {
    let w_tr = cfg.w_tr(t);
    let w_si = 1.0 - w_tr;
    let f_h0 = (w_tr * f_tw.f_h0 + w_si * f_si.f_h0).clamp(0.0, 1.0);
    let f_h1 = (w_tr * f_tw.f_h1 + w_si * f_si.f_h1).clamp(0.0, 1.0);
    let score = HypothesisScore { f_h0, f_h1 };
    FusionOutcome { score, decision: score.decision(), w_tr, w_si }
}
