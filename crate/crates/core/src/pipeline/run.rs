use serde::{Deserialize, Serialize};

use super::preprocess::{preprocess_mask, regions_from_labels};
use super::{OptOutReason, OptStatus, PipelineError, RegionPair};
use crate::disambig::{
    fuse, mse_score, siamese_forward, twin_forward, Decision, FusionConfig, HypothesisScore,
    MseScore, SiameseModel, TwinModel,
};
use crate::foa::{build_boundary_pairs, build_quad, FoaError};
use crate::geometry::{estimate_from_masks, SimilarityTransform};
use crate::imaging::{BinaryMask, LabelMap, RasterImage};

pub enum MaskInput<'a> {
    /// Binary detector output; always pre-processed.
    Detector(&'a BinaryMask),
    /// Ground-truth map with the two regions already separated.
    GroundTruth(&'a LabelMap),
}

impl MaskInput<'_> {
    fn dimensions(&self) -> (usize, usize) {
        match self {
            MaskInput::Detector(m) => m.dimensions(),
            MaskInput::GroundTruth(l) => l.dimensions(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TransformSource {
    /// Known transform mapping the first (larger) region onto the second.
    Given(SimilarityTransform),
    Estimate,
}

#[derive(Clone, Copy, Default)]
pub struct Scorers<'a> {
    pub mse: bool,
    pub twin: Option<&'a TwinModel>,
    pub siamese: Option<&'a SiameseModel>,
}

impl Scorers<'_> {
    pub fn mse_only() -> Self {
        Self { mse: true, twin: None, siamese: None }
    }

    fn is_empty(&self) -> bool {
        !self.mse && self.twin.is_none() && self.siamese.is_none()
    }
}

#[derive(Clone, Copy)]
pub struct DisambigOptions<'a> {
    pub transform: TransformSource,
    pub scorers: Scorers<'a>,
    pub fusion: FusionConfig,
}

impl<'a> DisambigOptions<'a> {
    pub fn new(transform: TransformSource, scorers: Scorers<'a>) -> Self {
        Self { transform, scorers, fusion: FusionConfig::default() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScorerScores {
    pub mse: Option<MseScore>,
    pub twin: Option<HypothesisScore>,
    pub siamese: Option<HypothesisScore>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisambigResult {
    pub opt_status: OptStatus,
    pub decision: Option<Decision>,
    pub fused: Option<HypothesisScore>,
    /// The fused score is an exact tie; the decision fell back to H0.
    pub tie: bool,
    /// Weight of the interpolation path when two paths were fused.
    pub w_tr: Option<f64>,
    pub scores: ScorerScores,
    pub transform: Option<SimilarityTransform>,
    pub transform_estimated: bool,
    #[serde(skip)]
    pub regions: Option<RegionPair>,
}

impl DisambigResult {
    fn opt_out(reason: OptOutReason, regions: Option<RegionPair>, transform: Option<SimilarityTransform>, estimated: bool) -> Self {
        Self {
            opt_status: OptStatus::OptOut(reason),
            decision: None,
            fused: None,
            tie: false,
            w_tr: None,
            scores: ScorerScores::default(),
            transform,
            transform_estimated: estimated,
            regions,
        }
    }
}

fn foa_reason(e: FoaError) -> Result<OptOutReason, PipelineError> {
    match e {
        FoaError::RegionTooSmall { .. } => Ok(OptOutReason::RegionTooSmall),
        FoaError::Imaging(e) => Err(e.into()),
    }
}

pub fn disambiguate(
    img: &RasterImage,
    mask: MaskInput<'_>,
    opts: &DisambigOptions<'_>,
) -> Result<DisambigResult, PipelineError> {
    if mask.dimensions() != img.dimensions() {
        return Err(PipelineError::DimensionMismatch { image: img.dimensions(), mask: mask.dimensions() });
    }
    if opts.scorers.is_empty() {
        return Err(PipelineError::NoScorer);
    }
    opts.fusion.validate()?;
    let estimated = matches!(opts.transform, TransformSource::Estimate);
    let regions = match mask {
        MaskInput::Detector(m) => preprocess_mask(m),
        MaskInput::GroundTruth(l) => regions_from_labels(l).map(|r| r.0),
    };
    let regions = match regions {
        Ok(r) => r,
        Err(reason) => return Ok(DisambigResult::opt_out(reason, None, None, estimated)),
    };
    let t = match opts.transform {
        TransformSource::Given(t) => t,
        TransformSource::Estimate => match estimate_from_masks(&regions.p1, &regions.p2) {
            Ok(e) => e.transform,
            Err(_) => {
                return Ok(DisambigResult::opt_out(OptOutReason::RegionTooSmall, Some(regions), None, true))
            }
        },
    };

    let mut scores = ScorerScores::default();
    if opts.scorers.mse || opts.scorers.twin.is_some() {
        let quad = match build_quad(img, &regions.p1, &regions.p2, &t) {
            Ok(q) => q,
            Err(e) => {
                let reason = foa_reason(e)?;
                return Ok(DisambigResult::opt_out(reason, Some(regions), Some(t), estimated));
            }
        };
        if opts.scorers.mse {
            scores.mse = Some(mse_score(&quad));
        }
        if let Some(m) = opts.scorers.twin {
            scores.twin = Some(twin_forward(m, &quad));
        }
    }
    if let Some(m) = opts.scorers.siamese {
        let pairs = match build_boundary_pairs(img, &regions.p1, &regions.p2, &t) {
            Ok((first, _)) => first,
            Err(e) => {
                let reason = foa_reason(e)?;
                return Ok(DisambigResult::opt_out(reason, Some(regions), Some(t), estimated));
            }
        };
        scores.siamese = Some(siamese_forward(m, &pairs)?);
    }

    // The learned interpolation scorer takes precedence over the analytic one.
    let interp = scores.twin.or(scores.mse.map(|m| m.score));
    let (fused, w_tr) = match (interp, scores.siamese) {
        (Some(a), Some(b)) => {
            let out = fuse(&a, &b, &t, &opts.fusion);
            (out.score, Some(out.w_tr))
        }
        (Some(a), None) => (a, None),
        (None, Some(b)) => (b, None),
        (None, None) => unreachable!("at least one scorer ran"),
    };
    Ok(DisambigResult {
        opt_status: OptStatus::OptIn,
        decision: Some(fused.decision()),
        fused: Some(fused),
        tie: fused.is_tie(),
        w_tr,
        scores,
        transform: Some(t),
        transform_estimated: estimated,
        regions: Some(regions),
    })
}

/// Source/target map and the tampering mask (target only) of an OptIn result.
pub fn render_outputs(
    result: &DisambigResult,
    regions: &RegionPair,
    width: usize,
    height: usize,
) -> Result<(LabelMap, BinaryMask), PipelineError> {
    let decision = match (result.opt_status, result.decision) {
        (OptStatus::OptIn, Some(d)) => d,
        (OptStatus::OptOut(r), _) => return Err(PipelineError::NotOptIn(r)),
        (OptStatus::OptIn, None) => unreachable!("OptIn results carry a decision"),
    };
    let (s, t) = match decision {
        Decision::H0 => (&regions.p1, &regions.p2),
        Decision::H1 => (&regions.p2, &regions.p1),
    };
    let source = BinaryMask::from_pixels(width, height, s);
    let target = BinaryMask::from_pixels(width, height, t);
    let map = LabelMap::from_masks(&source, &target)?;
    Ok((map, target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{Label, PixelSet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rect(x0: i32, y0: i32, w: i32, h: i32) -> PixelSet {
        (y0..y0 + h).flat_map(|y| (x0..x0 + w).map(move |x| (x, y))).collect()
    }

    fn rigid_fixture(side: i32) -> (RasterImage, LabelMap, SimilarityTransform) {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut img = RasterImage::from_fn(300, 200, |_, _| [rng.gen(), rng.gen(), rng.gen()]).unwrap();
        let s = rect(10, 20, side, side);
        for (x, y) in s.iter() {
            let px = img.pixel(x as usize, y as usize);
            img.set_pixel(x as usize + 150, y as usize + 60, px);
        }
        let t = s.translated(150, 60);
        let labels =
            LabelMap::from_masks(&BinaryMask::from_pixels(300, 200, &s), &BinaryMask::from_pixels(300, 200, &t)).unwrap();
        (img.quantized(), labels, SimilarityTransform::translation(150.0, 60.0))
    }

    #[test]
    fn rigid_copy_ties_to_h0() {
        let (img, labels, _) = rigid_fixture(80);
        let opts = DisambigOptions::new(TransformSource::Estimate, Scorers::mse_only());
        let r = disambiguate(&img, MaskInput::GroundTruth(&labels), &opts).unwrap();
        assert_eq!(r.opt_status, OptStatus::OptIn);
        assert!(r.tie);
        assert_eq!(r.decision, Some(Decision::H0));
        assert_eq!(r.fused, Some(HypothesisScore::TIE));
        let again = disambiguate(&img, MaskInput::GroundTruth(&labels), &opts).unwrap();
        assert_eq!(r, again);
        let det = disambiguate(&img, MaskInput::Detector(&labels.localization_mask()), &opts).unwrap();
        assert_eq!(det.fused, r.fused);
    }

    #[test]
    fn small_regions_opt_out() {
        let (img, labels, t) = rigid_fixture(50);
        let opts = DisambigOptions::new(TransformSource::Given(t), Scorers::mse_only());
        let r = disambiguate(&img, MaskInput::GroundTruth(&labels), &opts).unwrap();
        assert_eq!(r.opt_status, OptStatus::OptOut(OptOutReason::RegionTooSmall));
        assert_eq!(r.decision, None);
    }

    #[test]
    fn mismatched_mask_and_no_scorer_are_errors() {
        let (img, _, t) = rigid_fixture(80);
        let m = BinaryMask::new(10, 10);
        let opts = DisambigOptions::new(TransformSource::Given(t), Scorers::mse_only());
        assert!(matches!(
            disambiguate(&img, MaskInput::Detector(&m), &opts),
            Err(PipelineError::DimensionMismatch { .. })
        ));
        let none = DisambigOptions::new(TransformSource::Given(t), Scorers::default());
        let m = BinaryMask::new(300, 200);
        assert!(matches!(disambiguate(&img, MaskInput::Detector(&m), &none), Err(PipelineError::NoScorer)));
    }

    #[test]
    fn rendering_follows_the_decision() {
        let (img, labels, _) = rigid_fixture(80);
        let opts = DisambigOptions::new(TransformSource::Estimate, Scorers::mse_only());
        let mut r = disambiguate(&img, MaskInput::GroundTruth(&labels), &opts).unwrap();
        let regions = r.regions.clone().unwrap();
        let (map, tamper) = render_outputs(&r, &regions, 300, 200).unwrap();
        let (x, y) = regions.p1.points()[0];
        assert_eq!(map.get(x as usize, y as usize), Label::Source);
        assert_eq!(tamper.count(), regions.p2.len());
        r.decision = Some(Decision::H1);
        let (map, tamper) = render_outputs(&r, &regions, 300, 200).unwrap();
        assert_eq!(map.get(x as usize, y as usize), Label::Target);
        assert_eq!(tamper.count(), regions.p1.len());
        assert!(map.source_mask().intersection(&map.target_mask()).unwrap().is_empty());
        r.opt_status = OptStatus::OptOut(OptOutReason::RegionTooSmall);
        assert!(render_outputs(&r, &regions, 300, 200).is_err());
    }
}
