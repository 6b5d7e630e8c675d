use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{NetConfig, ParamLayout};
use super::{sigmoid_pair, DisambigError, HypothesisScore};
use crate::foa::{BoundaryPair, PatchQuad};
use crate::warp::WarpedPatch;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Twin,
    Siamese,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Twin => "twin",
            Architecture::Siamese => "siamese",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "twin" => Some(Architecture::Twin),
            "siamese" => Some(Architecture::Siamese),
            _ => None,
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Shared feature extractor plus pair head, as one flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PairModel {
    config: NetConfig,
    layout: ParamLayout,
    params: Vec<f64>,
}

impl PairModel {
    pub fn new(config: NetConfig, seed: u64) -> Result<Self, DisambigError> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let params = layout.init(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Self { config, layout, params })
    }

    pub fn from_params(config: NetConfig, params: Vec<f64>) -> Result<Self, DisambigError> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        if params.len() != layout.total {
            return Err(DisambigError::Config(format!(
                "expected {} parameters, found {}",
                layout.total,
                params.len()
            )));
        }
        Ok(Self { config, layout, params })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn features(&self, input: &[f64]) -> Vec<f64> {
        self.layout.features(&self.params, input, self.config.input_size).0
    }

    pub fn logit(&self, fa: &[f64], fb: &[f64]) -> f64 {
        self.layout.pair_logit(&self.params, fa, fb).0
    }

    fn patch_features(&self, patch: &WarpedPatch) -> Vec<f64> {
        self.features(&patch_input(patch))
    }
}

/// Four branches with one weight set: `z0` from `(x1, x2)`, `z1` from
/// `(x3, x4)`, coupled by a softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct TwinModel(pub PairModel);

/// Two branches scoring an ordered boundary pair; `sigmoid(z)` is the
/// probability that the first patch shows the target boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct SiameseModel(pub PairModel);

/// Channel-first network input: intensities centered on 0.5, invalid pixels
/// zeroed.
pub fn patch_input(patch: &WarpedPatch) -> Vec<f64> {
    let (w, h) = patch.image.dimensions();
    let mut out = vec![0.0; 3 * w * h];
    for y in 0..h {
        for x in 0..w {
            if !patch.validity.get(x, y) {
                continue;
            }
            let px = patch.image.pixel(x, y);
            for c in 0..3 {
                out[(c * h + y) * w + x] = px[c] - 0.5;
            }
        }
    }
    out
}

/// Softmax score from the pairs in the given order, without symmetrization.
pub fn twin_forward_ordered(model: &TwinModel, quad: &PatchQuad) -> HypothesisScore {
    let m = &model.0;
    let f: Vec<Vec<f64>> = [&quad.x1, &quad.x2, &quad.x3, &quad.x4]
        .iter()
        .map(|p| m.patch_features(p))
        .collect();
    HypothesisScore::from_logits(m.logit(&f[0], &f[1]), m.logit(&f[2], &f[3]))
}

/// Twin score averaged over the four intra-pair orderings.
///
/// The two logits of each pair are sorted before averaging, so swapping the
/// members of a pair gives a bit-identical result.
pub fn twin_forward(model: &TwinModel, quad: &PatchQuad) -> HypothesisScore {
    let inputs: Vec<Vec<f64>> =
        [&quad.x1, &quad.x2, &quad.x3, &quad.x4].iter().map(|p| patch_input(p)).collect();
    twin_symmetrized(&model.0, [&inputs[0], &inputs[1], &inputs[2], &inputs[3]])
}

/// Symmetrized twin score on prepared network inputs.
pub fn twin_symmetrized(m: &PairModel, inputs: [&[f64]; 4]) -> HypothesisScore {
    let f: Vec<Vec<f64>> = inputs.iter().map(|x| m.features(x)).collect();
    let sorted = |a: f64, b: f64| if a <= b { (a, b) } else { (b, a) };
    let (u, v) = sorted(m.logit(&f[0], &f[1]), m.logit(&f[1], &f[0]));
    let (p, q) = sorted(m.logit(&f[2], &f[3]), m.logit(&f[3], &f[2]));
    let terms = [sigmoid_pair(u - p), sigmoid_pair(u - q), sigmoid_pair(v - p), sigmoid_pair(v - q)];
    let f_h0 = ((terms[0].0 + terms[1].0) + (terms[2].0 + terms[3].0)) / 4.0;
    let f_h1 = ((terms[0].1 + terms[1].1) + (terms[2].1 + terms[3].1)) / 4.0;
    HypothesisScore { f_h0, f_h1 }
}

/// `sigmoid(z)` of each pair.
pub fn siamese_pair_scores(model: &SiameseModel, pairs: &[BoundaryPair]) -> Vec<f64> {
    let m = &model.0;
    pairs
        .iter()
        .map(|pair| {
            let (fa, fb) = (m.patch_features(&pair.b1), m.patch_features(&pair.b2));
            sigmoid_pair(m.logit(&fa, &fb)).0
        })
        .collect()
}

/// Scores the first region's corner pairs `[B1, ~B1]` and keeps the most
/// confident one; ties keep the earliest pair.
pub fn siamese_forward(model: &SiameseModel, pairs: &[BoundaryPair]) -> Result<HypothesisScore, DisambigError> {
    let scores = siamese_pair_scores(model, pairs);
    let f = select_most_confident(&scores).ok_or(DisambigError::NoPairs)?;
    Ok(HypothesisScore { f_h0: 1.0 - f, f_h1: f })
}

pub fn select_most_confident(scores: &[f64]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for &s in scores {
        if best.map_or(true, |b| (s - 0.5).abs() > (b - 0.5).abs()) {
            best = Some(s);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{BinaryMask, RasterImage};
    use rand::Rng;

    fn small_cfg() -> NetConfig {
        NetConfig { channels: vec![3, 4], stride: 2, feature_dim: 6, input_size: 16 }
    }

    fn noise_patch(rng: &mut ChaCha8Rng) -> WarpedPatch {
        WarpedPatch {
            image: RasterImage::from_fn(16, 16, |_, _| [rng.gen(), rng.gen(), rng.gen()]).unwrap(),
            validity: BinaryMask::full(16, 16),
        }
    }

    #[test]
    fn symmetrized_twin_ignores_pair_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..5 {
            let model = TwinModel(PairModel::new(small_cfg(), seed).unwrap());
            let q = PatchQuad {
                x1: noise_patch(&mut rng),
                x2: noise_patch(&mut rng),
                x3: noise_patch(&mut rng),
                x4: noise_patch(&mut rng),
            };
            let base = twin_forward(&model, &q);
            let mut s = q.clone();
            std::mem::swap(&mut s.x1, &mut s.x2);
            assert_eq!(twin_forward(&model, &s), base);
            std::mem::swap(&mut s.x3, &mut s.x4);
            assert_eq!(twin_forward(&model, &s), base);
            assert!((base.f_h0 + base.f_h1 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zeroed_head_gives_tie() {
        let mut model = PairModel::new(small_cfg(), 1).unwrap();
        let l = model.layout().clone();
        let p = model.params_mut();
        p[l.fc2_w..l.fc2_w + l.hidden].fill(0.0);
        p[l.fc2_b] = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = PatchQuad {
            x1: noise_patch(&mut rng),
            x2: noise_patch(&mut rng),
            x3: noise_patch(&mut rng),
            x4: noise_patch(&mut rng),
        };
        let twin = TwinModel(model.clone());
        assert_eq!(twin_forward(&twin, &q), HypothesisScore::TIE);
        let si = SiameseModel(model);
        let pair = BoundaryPair { b1: q.x1.clone(), b2: q.x2.clone(), corner: crate::foa::Corner::TopLeft };
        assert_eq!(siamese_forward(&si, &[pair]).unwrap(), HypothesisScore::TIE);
    }

    #[test]
    fn most_confident_selection() {
        assert_eq!(select_most_confident(&[0.6, 0.1, 0.55, 0.48]), Some(0.1));
        assert_eq!(select_most_confident(&[0.8, 0.3]), Some(0.8));
        assert_eq!(select_most_confident(&[0.25, 0.75]), Some(0.25));
        assert_eq!(select_most_confident(&[]), None);
        let model = SiameseModel(PairModel::new(small_cfg(), 0).unwrap());
        assert!(matches!(siamese_forward(&model, &[]), Err(DisambigError::NoPairs)));
    }
}
