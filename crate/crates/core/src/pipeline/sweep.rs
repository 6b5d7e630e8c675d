use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eval::{evaluate_record, MetricsReport, Scenario};
use super::run::Scorers;
use super::PipelineError;
use crate::disambig::FusionConfig;
use crate::geometry::SimilarityTransform;
use crate::imaging::{
    apply_filter, binary_dilate, binary_erode, jpeg_round_trip, BinaryMask, BoundingBox, FilterSpec,
    LabelMap, NOISE_VARIANCES,
};
use crate::synthgen::{record_rng, ForgeryRecord};
use crate::warp::{warp_image, warp_mask};

/// A post-processing or mask-degradation axis with its grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "values", rename_all = "kebab-case")]
pub enum SweepAxis {
    Jpeg(Vec<u8>),
    Noise(Vec<f64>),
    Resize(Vec<f64>),
    Dilate(Vec<usize>),
    Erode(Vec<usize>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Jpeg(_) => "jpeg",
            SweepAxis::Noise(_) => "noise",
            SweepAxis::Resize(_) => "resize",
            SweepAxis::Dilate(_) => "dilate",
            SweepAxis::Erode(_) => "erode",
        }
    }

    /// The axis with its default grid.
    pub fn default_for(name: &str) -> Option<Self> {
        Some(match name {
            "jpeg" => SweepAxis::Jpeg((55..=100).step_by(5).collect()),
            "noise" => SweepAxis::Noise(NOISE_VARIANCES.to_vec()),
            "resize" => SweepAxis::Resize(vec![0.8, 1.2]),
            "dilate" => SweepAxis::Dilate((1..=5).collect()),
            "erode" => SweepAxis::Erode((1..=5).collect()),
            _ => return None,
        })
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            SweepAxis::Jpeg(v) => v.iter().map(|&q| f64::from(q)).collect(),
            SweepAxis::Noise(v) | SweepAxis::Resize(v) => v.clone(),
            SweepAxis::Dilate(v) | SweepAxis::Erode(v) => v.iter().map(|&r| r as f64).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.values().is_empty() {
            return Err(PipelineError::EmptyGrid);
        }
        let bad = |m: String| Err(PipelineError::InvalidSweepValue(m));
        match self {
            SweepAxis::Jpeg(v) => {
                if let Some(q) = v.iter().find(|&&q| q == 0 || q > 100) {
                    return bad(format!("jpeg quality {q}"));
                }
            }
            SweepAxis::Noise(v) => {
                if let Some(n) = v.iter().find(|n| !NOISE_VARIANCES.contains(n)) {
                    return bad(format!("noise variance {n} not in {NOISE_VARIANCES:?}"));
                }
            }
            SweepAxis::Resize(v) => {
                if let Some(s) = v.iter().find(|&&s| !(s > 0.0 && s <= 4.0)) {
                    return bad(format!("resize factor {s}"));
                }
            }
            SweepAxis::Dilate(_) | SweepAxis::Erode(_) => {}
        }
        Ok(())
    }

    /// The record as seen at grid point `i`. `index` keys the noise stream.
    pub fn apply(&self, record: &ForgeryRecord, i: usize, seed: u64, index: u64) -> Result<ForgeryRecord, PipelineError> {
        let mut r = record.clone();
        match self {
            SweepAxis::Jpeg(v) => r.image = jpeg_round_trip(&record.image, v[i])?,
            SweepAxis::Noise(v) => {
                let spec = FilterSpec::GaussianNoise { variance: v[i] };
                let mut rng = record_rng(seed, index);
                r.image = apply_filter(&record.image, &spec, &mut rng)?.quantized();
            }
            SweepAxis::Resize(v) => r = resize_record(record, v[i])?,
            SweepAxis::Dilate(v) => r.labels = degrade_labels(&record.labels, v[i] as isize)?,
            SweepAxis::Erode(v) => r.labels = degrade_labels(&record.labels, -(v[i] as isize))?,
        }
        Ok(r)
    }
}

/// Dilates (`radius > 0`) or erodes (`radius < 0`) each region separately,
/// with a 3x3 element applied `|radius|` times. Dilated regions never overlap:
/// the target loses any pixel claimed by the source.
pub fn degrade_labels(labels: &LabelMap, radius: isize) -> Result<LabelMap, PipelineError> {
    let (s, t) = (labels.source_mask(), labels.target_mask());
    let n = radius.unsigned_abs();
    let (s, t) = if radius >= 0 {
        let s = binary_dilate(&s, n);
        let t = binary_dilate(&t, n).difference(&s)?;
        (s, t)
    } else {
        (binary_erode(&s, n), binary_erode(&t, n))
    };
    Ok(LabelMap::from_masks(&s, &t)?)
}

/// Global rescaling of the whole record by `factor` with the bilinear
/// resampler. Masks follow the image and the ground-truth transform is
/// conjugated by the scaling.
pub fn resize_record(record: &ForgeryRecord, factor: f64) -> Result<ForgeryRecord, PipelineError> {
    let (w, h) = record.image.dimensions();
    let (nw, nh) = (((w as f64) * factor).round().max(1.0), ((h as f64) * factor).round().max(1.0));
    let out = BoundingBox::new(0, 0, nw as usize, nh as usize);
    let s = SimilarityTransform::new(0.0, factor, factor, 0.0, 0.0)
        .map_err(|e| PipelineError::InvalidSweepValue(e.to_string()))?;
    let image = warp_image(&record.image, &s, out).image.quantized();
    let source = warp_mask(&record.labels.source_mask(), &s, out);
    let target = warp_mask(&record.labels.target_mask(), &s, out).difference(&source)?;
    let labels = LabelMap::from_masks(&source, &target)?;
    let conj = SimilarityTransform::compose(&record.transform, &s.invert())
        .and_then(|t| SimilarityTransform::compose(&s, &t))
        .map_err(|e| PipelineError::InvalidSweepValue(e.to_string()))?;
    let bbox = |m: &BinaryMask, fallback: BoundingBox| m.pixels().bounding_box().unwrap_or(fallback);
    Ok(ForgeryRecord {
        image,
        source_bbox: bbox(&source, record.source_bbox),
        target_bbox: bbox(&target, record.target_bbox),
        labels,
        transform: conj,
        ..record.clone()
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Grid value, `None` for the unmodified baseline.
    pub value: Option<f64>,
    pub total: usize,
    pub opt_in: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
}

impl SweepPoint {
    fn of(value: Option<f64>, r: &MetricsReport) -> Self {
        Self { value, total: r.total, opt_in: r.opt_in, correct: r.correct, accuracy: r.accuracy, f1: r.f1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub axis: String,
    pub scenario: Scenario,
    pub clean: SweepPoint,
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    /// Accuracy change (in points, negative = loss) at grid point `i`.
    pub fn accuracy_delta(&self, i: usize) -> Option<f64> {
        Some(100.0 * (self.points[i].accuracy? - self.clean.accuracy?))
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), PipelineError> {
        #[derive(Serialize)]
        struct Row<'a> {
            axis: &'a str,
            value: Option<f64>,
            total: usize,
            opt_in: usize,
            correct: usize,
            accuracy: Option<f64>,
            f1: Option<f64>,
        }
        let io = |source: std::io::Error| PipelineError::Io { path: path.to_path_buf(), source };
        let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
        for p in std::iter::once(&self.clean).chain(&self.points) {
            let row = Row {
                axis: &self.axis,
                value: p.value,
                total: p.total,
                opt_in: p.opt_in,
                correct: p.correct,
                accuracy: p.accuracy,
                f1: p.f1,
            };
            w.serialize(row).map_err(|e| io(e.into()))?;
        }
        w.flush().map_err(io)
    }
}

fn evaluate_point(
    records: &[ForgeryRecord],
    point: Option<usize>,
    axis: &SweepAxis,
    scenario: Scenario,
    scorers: Scorers<'_>,
    fusion: FusionConfig,
    seed: u64,
) -> Result<MetricsReport, PipelineError> {
    let outcomes = records
        .par_iter()
        .enumerate()
        .map(|(k, rec)| match point {
            None => evaluate_record(rec, scenario, scorers, fusion),
            Some(i) => evaluate_record(&axis.apply(rec, i, seed, k as u64)?, scenario, scorers, fusion),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MetricsReport::from_outcomes(scenario, outcomes))
}

/// Re-evaluates the records at every grid point of `axis`, next to a clean
/// baseline.
pub fn robustness_sweep(
    records: &[ForgeryRecord],
    axis: &SweepAxis,
    scenario: Scenario,
    scorers: Scorers<'_>,
    fusion: FusionConfig,
    seed: u64,
) -> Result<SweepReport, PipelineError> {
    axis.validate()?;
    if records.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let clean = evaluate_point(records, None, axis, scenario, scorers, fusion, seed)?;
    let mut points = Vec::new();
    for (i, v) in axis.values().into_iter().enumerate() {
        let r = evaluate_point(records, Some(i), axis, scenario, scorers, fusion, seed)?;
        log::info!("{} {v}: accuracy {:?}", axis.name(), r.accuracy);
        points.push(SweepPoint::of(Some(v), &r));
    }
    Ok(SweepReport { axis: axis.name().into(), scenario, clean: SweepPoint::of(None, &clean), points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_grid_is_an_error() {
        assert!(matches!(SweepAxis::Jpeg(vec![]).validate(), Err(PipelineError::EmptyGrid)));
        assert!(SweepAxis::Noise(vec![0.003]).validate().is_err());
        for name in ["jpeg", "noise", "resize", "dilate", "erode"] {
            SweepAxis::default_for(name).unwrap().validate().unwrap();
        }
        assert_eq!(SweepAxis::default_for("jpeg").unwrap().values().len(), 10);
    }

    #[test]
    fn degradation_keeps_regions_disjoint() {
        let s = BinaryMask::from_fn(40, 20, |x, y| (2..12).contains(&x) && (2..12).contains(&y));
        let t = BinaryMask::from_fn(40, 20, |x, y| (13..23).contains(&x) && (2..12).contains(&y));
        let l = LabelMap::from_masks(&s, &t).unwrap();
        let d = degrade_labels(&l, 3).unwrap();
        assert!(d.source_mask().intersection(&d.target_mask()).unwrap().is_empty());
        assert!(s.is_subset_of(&d.source_mask()));
        let e = degrade_labels(&l, -2).unwrap();
        assert_eq!(e.source_mask().count(), 36);
        assert_eq!(degrade_labels(&l, 0).unwrap(), l);
    }
}
