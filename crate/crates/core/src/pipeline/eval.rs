use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::preprocess::regions_from_labels;
use super::run::{disambiguate, render_outputs, DisambigOptions, DisambigResult, MaskInput, TransformSource};
use super::{OptStatus, PipelineError, RegionPair};
use crate::disambig::{Decision, FusionConfig};
use crate::imaging::LabelMap;
use crate::synthgen::{read_manifest, read_record, ForgeryRecord};

use super::run::Scorers;

/// Which inputs the disambiguator gets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Ground-truth regions and the true transform.
    KnownTransform,
    /// Ground-truth regions, transform estimated from them.
    EstimatedTransform,
    /// The unlabeled localization mask goes through pre-processing; the
    /// transform is estimated.
    DetectorMask,
}

impl Scenario {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "known-transform" => Some(Scenario::KnownTransform),
            "estimated-transform" => Some(Scenario::EstimatedTransform),
            "detector-mask" => Some(Scenario::DetectorMask),
            _ => None,
        }
    }
}

/// The correct decision for regions found in a labeled image: H0 iff `p1`
/// overlaps the source at least as much as the target.
pub fn truth_for(regions: &RegionPair, labels: &LabelMap) -> Decision {
    let (mut s, mut t) = (0usize, 0usize);
    for (x, y) in regions.p1.iter() {
        match labels.get(x as usize, y as usize) {
            crate::imaging::Label::Source => s += 1,
            crate::imaging::Label::Target => t += 1,
            crate::imaging::Label::Background => {}
        }
    }
    if s >= t {
        Decision::H0
    } else {
        Decision::H1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordOutcome {
    pub record_id: String,
    pub kind: String,
    pub result: DisambigResult,
    pub truth: Option<Decision>,
    pub correct: Option<bool>,
    /// Pixel counts of the emitted tampering mask against the true target.
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// One line of the metrics CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub record_id: String,
    pub opt_status: String,
    pub decision: Option<Decision>,
    pub correct: Option<bool>,
    pub f_h0_fused: Option<f64>,
    pub f_h0_mse: Option<f64>,
    pub f_h0_twin: Option<f64>,
    pub f_h0_siamese: Option<f64>,
    pub alpha: Option<f64>,
    pub fx: Option<f64>,
    pub fy: Option<f64>,
}

impl RecordOutcome {
    pub fn csv_row(&self) -> CsvRow {
        let r = &self.result;
        CsvRow {
            record_id: self.record_id.clone(),
            opt_status: r.opt_status.to_string(),
            decision: r.decision,
            correct: self.correct,
            f_h0_fused: r.fused.map(|s| s.f_h0),
            f_h0_mse: r.scores.mse.map(|s| s.score.f_h0),
            f_h0_twin: r.scores.twin.map(|s| s.f_h0),
            f_h0_siamese: r.scores.siamese.map(|s| s.f_h0),
            alpha: r.transform.map(|t| t.alpha_deg),
            fx: r.transform.map(|t| t.fx),
            fy: r.transform.map(|t| t.fy),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KindMetrics {
    pub total: usize,
    pub opt_in: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: Scenario,
    pub total: usize,
    pub opt_in: usize,
    pub correct: usize,
    pub ties: usize,
    /// Correct decisions over OptIn records.
    pub accuracy: Option<f64>,
    /// Pixel-level scores of the tampering masks, pooled over OptIn records.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub per_kind: BTreeMap<String, KindMetrics>,
    pub records: Vec<RecordOutcome>,
}

fn ratio(a: usize, b: usize) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

impl MetricsReport {
    pub fn from_outcomes(scenario: Scenario, records: Vec<RecordOutcome>) -> Self {
        let mut per_kind: BTreeMap<String, KindMetrics> = BTreeMap::new();
        let (mut opt_in, mut correct, mut ties) = (0, 0, 0);
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for o in &records {
            let k = per_kind.entry(o.kind.clone()).or_default();
            k.total += 1;
            if o.result.opt_status.is_opt_in() {
                opt_in += 1;
                k.opt_in += 1;
                tp += o.true_positives;
                fp += o.false_positives;
                fn_ += o.false_negatives;
                if o.result.tie {
                    ties += 1;
                }
                if o.correct == Some(true) {
                    correct += 1;
                    k.correct += 1;
                }
            }
        }
        for k in per_kind.values_mut() {
            k.accuracy = ratio(k.correct, k.opt_in);
        }
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        Self {
            scenario,
            total: records.len(),
            opt_in,
            correct,
            ties,
            accuracy: ratio(correct, opt_in),
            precision,
            recall,
            f1,
            per_kind,
            records,
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), PipelineError> {
        let io = |source: std::io::Error| PipelineError::Io { path: path.to_path_buf(), source };
        let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
        for o in &self.records {
            w.serialize(o.csv_row()).map_err(|e| io(e.into()))?;
        }
        w.flush().map_err(io)
    }

    /// Human-readable table, one line per transform kind plus a total.
    pub fn summary_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        let mut s = format!("{:<10} {:>6} {:>6} {:>8} {:>9}\n", "kind", "total", "optin", "correct", "accuracy");
        for (k, m) in &self.per_kind {
            s += &format!("{:<10} {:>6} {:>6} {:>8} {:>9}\n", k, m.total, m.opt_in, m.correct, fmt(m.accuracy));
        }
        s += &format!(
            "{:<10} {:>6} {:>6} {:>8} {:>9}\nprecision {}  recall {}  f1 {}  ties {}\n",
            "all",
            self.total,
            self.opt_in,
            self.correct,
            fmt(self.accuracy),
            fmt(self.precision),
            fmt(self.recall),
            fmt(self.f1),
            self.ties
        );
        s
    }
}

pub fn evaluate_record(
    record: &ForgeryRecord,
    scenario: Scenario,
    scorers: Scorers<'_>,
    fusion: FusionConfig,
) -> Result<RecordOutcome, PipelineError> {
    let mask = record.mask();
    let (input, transform) = match scenario {
        Scenario::KnownTransform => {
            let t = match regions_from_labels(&record.labels) {
                Ok((_, true)) => record.transform,
                Ok((_, false)) => record.transform.invert(),
                Err(_) => record.transform,
            };
            (MaskInput::GroundTruth(&record.labels), TransformSource::Given(t))
        }
        Scenario::EstimatedTransform => (MaskInput::GroundTruth(&record.labels), TransformSource::Estimate),
        Scenario::DetectorMask => (MaskInput::Detector(&mask), TransformSource::Estimate),
    };
    let opts = DisambigOptions { transform, scorers, fusion };
    let result = disambiguate(&record.image, input, &opts)?;
    let (w, h) = record.image.dimensions();
    let true_target = record.labels.target_mask();
    let mut out = RecordOutcome {
        record_id: record.id.clone(),
        kind: record.kind.name().to_string(),
        result,
        truth: None,
        correct: None,
        true_positives: 0,
        false_positives: 0,
        false_negatives: true_target.count(),
    };
    if let (OptStatus::OptIn, Some(regions)) = (out.result.opt_status, out.result.regions.as_ref()) {
        let truth = truth_for(regions, &record.labels);
        out.truth = Some(truth);
        out.correct = out.result.decision.map(|d| d == truth);
        let (_, tamper) = render_outputs(&out.result, regions, w, h)?;
        let tp = tamper.intersection(&true_target)?.count();
        out.true_positives = tp;
        out.false_positives = tamper.count() - tp;
        out.false_negatives = true_target.count() - tp;
    }
    Ok(out)
}

/// Runs the disambiguator on every record in parallel; the report lists
/// records in input order.
pub fn evaluate(
    records: &[ForgeryRecord],
    scenario: Scenario,
    scorers: Scorers<'_>,
    fusion: FusionConfig,
) -> Result<MetricsReport, PipelineError> {
    if records.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let outcomes = records
        .par_iter()
        .map(|r| evaluate_record(r, scenario, scorers, fusion))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MetricsReport::from_outcomes(scenario, outcomes))
}

/// Like [`evaluate`] on a dataset directory, loading one record at a time.
pub fn evaluate_dataset(
    root: &Path,
    scenario: Scenario,
    scorers: Scorers<'_>,
    fusion: FusionConfig,
) -> Result<MetricsReport, PipelineError> {
    let manifest = read_manifest(root)?;
    if manifest.ids.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let outcomes = manifest
        .ids
        .par_iter()
        .map(|id| {
            let rec = read_record(root, id)?;
            evaluate_record(&rec, scenario, scorers, fusion)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MetricsReport::from_outcomes(scenario, outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disambig::HypothesisScore;
    use crate::pipeline::{OptOutReason, ScorerScores};

    fn outcome(id: usize, kind: &str, opt_in: bool, correct: bool) -> RecordOutcome {
        let decision = Decision::H0;
        RecordOutcome {
            record_id: format!("{id:06}"),
            kind: kind.into(),
            result: DisambigResult {
                opt_status: if opt_in { OptStatus::OptIn } else { OptStatus::OptOut(OptOutReason::RegionTooSmall) },
                decision: opt_in.then_some(decision),
                fused: opt_in.then_some(HypothesisScore::TIE),
                tie: false,
                w_tr: None,
                scores: ScorerScores::default(),
                transform: None,
                transform_estimated: true,
                regions: None,
            },
            truth: opt_in.then_some(if correct { decision } else { decision.flipped() }),
            correct: opt_in.then_some(correct),
            true_positives: if correct { 10 } else { 0 },
            false_positives: if correct { 0 } else { 10 },
            false_negatives: if correct { 0 } else { 10 },
        }
    }

    #[test]
    fn accuracy_is_counted_over_opt_in() {
        let mut v: Vec<RecordOutcome> = (0..10).map(|i| outcome(i, "res", true, i < 7)).collect();
        v.push(outcome(10, "rot", false, false));
        let r = MetricsReport::from_outcomes(Scenario::EstimatedTransform, v.clone());
        let recount = v.iter().filter(|o| o.correct == Some(true)).count() as f64
            / v.iter().filter(|o| o.result.opt_status.is_opt_in()).count() as f64;
        assert_eq!(r.accuracy, Some(recount));
        assert_eq!(r.accuracy, Some(0.7));
        assert_eq!((r.total, r.opt_in), (11, 10));
        assert_eq!(r.per_kind["rot"].accuracy, None);
        assert_eq!(r.per_kind["res"].accuracy, Some(0.7));
        assert!((r.precision.unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn perfect_masks_score_one() {
        let v: Vec<RecordOutcome> = (0..4).map(|i| outcome(i, "rigid", true, true)).collect();
        let r = MetricsReport::from_outcomes(Scenario::KnownTransform, v);
        assert_eq!((r.accuracy, r.precision, r.recall, r.f1), (Some(1.0), Some(1.0), Some(1.0), Some(1.0)));
    }

    #[test]
    fn csv_has_the_documented_columns() {
        let r = MetricsReport::from_outcomes(Scenario::KnownTransform, vec![outcome(0, "res", true, true)]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        r.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(
            header,
            "record_id,opt_status,decision,correct,f_h0_fused,f_h0_mse,f_h0_twin,f_h0_siamese,alpha,fx,fy"
        );
        assert_eq!(text.lines().nth(1).unwrap(), "000000,opt-in,H0,true,0.5,,,,,,");
    }

    #[test]
    fn empty_dataset_is_an_error() {
        assert!(matches!(
            evaluate(&[], Scenario::KnownTransform, Scorers::mse_only(), FusionConfig::default()),
            Err(PipelineError::EmptyDataset)
        ));
    }
}
