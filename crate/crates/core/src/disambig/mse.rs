use serde::{Deserialize, Serialize};

use super::HypothesisScore;
use crate::foa::PatchQuad;
use crate::warp::WarpedPatch;

/// Pairs whose jointly valid fraction is below this produce a flagged tie.
pub const MIN_JOINT_VALIDITY: f64 = 0.25;

const TIE_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MseScore {
    pub score: HypothesisScore,
    /// Residual of replicating the second region from the first (`x3` vs `x4`).
    pub m01: f64,
    /// Residual of replicating the first region from the second (`x1` vs `x2`).
    pub m10: f64,
    pub tie: bool,
    /// Too few jointly valid pixels to compare.
    pub warning: bool,
}

/// Mean squared difference over pixels valid in both patches, and the
/// jointly valid fraction.
fn pair_mse(a: &WarpedPatch, b: &WarpedPatch) -> (f64, f64) {
    let (w, h) = a.image.dimensions();
    let (mut sum, mut n) = (0.0, 0usize);
    for y in 0..h {
        for x in 0..w {
            if a.validity.get(x, y) && b.validity.get(x, y) {
                let (pa, pb) = (a.image.pixel(x, y), b.image.pixel(x, y));
                for c in 0..3 {
                    let d = pa[c] - pb[c];
                    sum += d * d;
                }
                n += 1;
            }
        }
    }
    let frac = n as f64 / (w * h) as f64;
    if n == 0 {
        (0.0, 0.0)
    } else {
        (sum / (3 * n) as f64, frac)
    }
}

/// Picks the direction whose replication fits better: the backward residual
/// `m10` being larger favors H0.
pub fn mse_score(quad: &PatchQuad) -> MseScore {
    let (m10, v10) = pair_mse(&quad.x1, &quad.x2);
    let (m01, v01) = pair_mse(&quad.x3, &quad.x4);
    let warning = v10 < MIN_JOINT_VALIDITY || v01 < MIN_JOINT_VALIDITY;
    let total = m01 + m10;
    if warning || total <= TIE_EPS {
        return MseScore { score: HypothesisScore::TIE, m01, m10, tie: true, warning };
    }
    let score = HypothesisScore { f_h0: m10 / total, f_h1: m01 / total };
    MseScore { score, m01, m10, tie: score.is_tie(), warning }
}
