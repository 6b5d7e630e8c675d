use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::imaging::{apply_filter, jpeg_round_trip, FilterSpec, ImagingError, RasterImage};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "params", rename_all = "snake_case")]
pub enum JpegOp {
    Jpeg { quality: u8 },
}

/// A global post-processing operation, logged as `{name, params}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GlobalOp {
    Filter(FilterSpec),
    Jpeg(JpegOp),
}

impl GlobalOp {
    pub fn jpeg(quality: u8) -> Self {
        GlobalOp::Jpeg(JpegOp::Jpeg { quality })
    }

    pub fn apply<R: Rng + ?Sized>(
        &self,
        img: &RasterImage,
        rng: &mut R,
    ) -> Result<RasterImage, ImagingError> {
        match self {
            GlobalOp::Filter(f) => apply_filter(img, f, rng),
            GlobalOp::Jpeg(JpegOp::Jpeg { quality }) => jpeg_round_trip(img, *quality),
        }
    }

    /// Short label used in frequency tables.
    pub fn label(&self) -> String {
        match self {
            GlobalOp::Filter(FilterSpec::GaussianLowpass { sigma }) => format!("gaussian_{sigma}"),
            GlobalOp::Filter(FilterSpec::Average { size }) => format!("average_{size}"),
            GlobalOp::Filter(FilterSpec::Unsharp { .. }) => "unsharp".into(),
            GlobalOp::Filter(FilterSpec::AdaptiveDenoise { window }) => format!("denoise_{window}"),
            GlobalOp::Filter(FilterSpec::GaussianNoise { .. }) => "noise".into(),
            GlobalOp::Filter(FilterSpec::HistogramStretch { saturation, .. }) => {
                format!("stretch_{saturation}")
            }
            GlobalOp::Filter(FilterSpec::HistogramEqualization) => "histeq".into(),
            GlobalOp::Jpeg(_) => "jpeg".into(),
        }
    }
}

/// Total weight of the non-identity rows, in units of 1/600. The identity row
/// carries the other half of the probability mass.
pub const TABLE_UNITS: u32 = 300;

/// Non-identity rows of the post-processing table with weights in units of
/// 1/600 (so 10 units = 1/60, 20 = 1/30, 30 = 0.05, 60 = 0.1). JPEG's 0.1 is
/// split evenly over the ten quality factors.
pub fn pp_table() -> Vec<(GlobalOp, u32)> {
    let mut rows = vec![
        (GlobalOp::Filter(FilterSpec::GaussianLowpass { sigma: 0.5 }), 10),
        (GlobalOp::Filter(FilterSpec::GaussianLowpass { sigma: 1.0 }), 10),
        (GlobalOp::Filter(FilterSpec::GaussianLowpass { sigma: 1.5 }), 10),
        (GlobalOp::Filter(FilterSpec::GaussianLowpass { sigma: 2.0 }), 10),
        (GlobalOp::Filter(FilterSpec::Average { size: 3 }), 10),
        (GlobalOp::Filter(FilterSpec::Unsharp { amount: 0.2 }), 10),
        (GlobalOp::Filter(FilterSpec::AdaptiveDenoise { window: 3 }), 30),
        (GlobalOp::Filter(FilterSpec::AdaptiveDenoise { window: 5 }), 30),
        (GlobalOp::Filter(FilterSpec::GaussianNoise { variance: 0.001 }), 60),
        (GlobalOp::Filter(FilterSpec::HistogramStretch { saturation: 0.02, gamma: 1.0 }), 20),
        (GlobalOp::Filter(FilterSpec::HistogramStretch { saturation: 0.06, gamma: 0.8 }), 20),
        (GlobalOp::Filter(FilterSpec::HistogramEqualization), 20),
    ];
    for q in (55..=100).step_by(5) {
        rows.push((GlobalOp::jpeg(q), 6));
    }
    rows
}

/// With probability `p`, draws one row of the table in proportion to its weight.
pub fn sample_global_op<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Option<GlobalOp> {
    if !rng.gen_bool(p) {
        return None;
    }
    let mut u = rng.gen_range(0..TABLE_UNITS);
    for (op, w) in pp_table() {
        if u < w {
            return Some(op);
        }
        u -= w;
    }
    unreachable!("weights sum to TABLE_UNITS")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_weights_sum_to_half() {
        let total: u32 = pp_table().iter().map(|r| r.1).sum();
        assert_eq!(total, TABLE_UNITS);
        for (op, _) in pp_table() {
            if let GlobalOp::Filter(f) = op {
                f.validate().unwrap();
            }
        }
    }

    #[test]
    fn ops_serialize_as_name_and_params() {
        let j = serde_json::to_value(GlobalOp::jpeg(75)).unwrap();
        assert_eq!(j, serde_json::json!({"name": "jpeg", "params": {"quality": 75}}));
        let g = serde_json::to_value(GlobalOp::Filter(FilterSpec::GaussianLowpass { sigma: 1.5 }))
            .unwrap();
        assert_eq!(g, serde_json::json!({"name": "gaussian_lowpass", "params": {"sigma": 1.5}}));
        for (op, _) in pp_table() {
            let back: GlobalOp = serde_json::from_value(serde_json::to_value(op).unwrap()).unwrap();
            assert_eq!(back, op);
        }
    }
}
