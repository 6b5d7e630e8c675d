use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::foa::PATCH_SIZE;
use crate::imaging::AVERAGE_SIZES;

/// Rotation angles in degrees: 2, 4, ..., 180.
pub fn rotation_grid() -> impl Iterator<Item = f64> {
    (1..=90).map(|k| f64::from(2 * k))
}

/// Resize factors 0.50, 0.51, ..., 2.00.
pub fn resize_grid() -> impl Iterator<Item = f64> {
    (50..=200).map(|k| f64::from(k) / 100.0)
}

pub const MAX_RESIZE: f64 = 2.0;

pub fn on_rotation_grid(a: f64) -> bool {
    rotation_grid().any(|g| g == a)
}

pub fn on_resize_grid(f: f64) -> bool {
    resize_grid().any(|g| g == f)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    /// Integer translation.
    Rigid,
    Rot,
    Res,
    /// Rotation, then resizing (two interpolations).
    #[serde(rename = "rot+res")]
    RotRes,
    /// Resizing, then rotation (two interpolations).
    #[serde(rename = "res+rot")]
    ResRot,
}

impl TransformKind {
    pub const ALL: [TransformKind; 5] = [
        TransformKind::Rigid,
        TransformKind::Rot,
        TransformKind::Res,
        TransformKind::RotRes,
        TransformKind::ResRot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransformKind::Rigid => "rigid",
            TransformKind::Rot => "rot",
            TransformKind::Res => "res",
            TransformKind::RotRes => "rot+res",
            TransformKind::ResRot => "res+rot",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    fn rotates(self) -> bool {
        matches!(self, TransformKind::Rot | TransformKind::RotRes | TransformKind::ResRot)
    }

    fn resizes(self) -> bool {
        matches!(self, TransformKind::Res | TransformKind::RotRes | TransformKind::ResRot)
    }

    /// Default source box side: small boxes for rigid copies so corner crops
    /// reach the boundary.
    pub fn default_source_box(self) -> usize {
        if self == TransformKind::Rigid {
            74
        } else {
            170
        }
    }
}

impl std::fmt::Display for TransformKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlendConfig {
    pub enabled: bool,
    /// Side of the high-pass kernel that finds the target edge.
    pub highpass_size: usize,
    pub dilation_iterations: usize,
    /// Candidate averaging filter sizes; one is drawn per record.
    pub average_sizes: Vec<usize>,
}

impl Default for BlendConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            highpass_size: 5,
            dilation_iterations: 5,
            average_sizes: AVERAGE_SIZES.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackgroundSource {
    /// Synthetic textures, `pool_size` distinct ones selected by index.
    Procedural { pool_size: usize },
    /// Images from a directory; a random `image_size` crop is taken from each.
    Directory { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub image_size: usize,
    pub source_box: usize,
    pub vertex_count: usize,
    pub kind: TransformKind,
    /// Probability that one global post-processing operation is applied.
    pub pp_probability: f64,
    pub blend: BlendConfig,
    pub background: BackgroundSource,
    pub seed: u64,
}

impl GenConfig {
    pub fn new(kind: TransformKind, seed: u64) -> Self {
        Self {
            image_size: 1024,
            source_box: kind.default_source_box(),
            vertex_count: 20,
            kind,
            pp_probability: 0.5,
            blend: BlendConfig::default(),
            background: BackgroundSource::Procedural { pool_size: 16 },
            seed,
        }
    }

    /// Same configuration with blending and post-processing switched off.
    pub fn clean(mut self) -> Self {
        self.blend.enabled = false;
        self.pp_probability = 0.0;
        self
    }

    pub fn quadrant_size(&self) -> usize {
        self.image_size / 2
    }

    /// Smallest quadrant that holds the largest possible target centered in
    /// it, with a few pixels of slack for rounding and interpolation.
    pub fn required_quadrant(&self) -> usize {
        let mut extent = self.source_box as f64;
        if self.kind.resizes() {
            extent *= MAX_RESIZE;
        }
        if self.kind.rotates() {
            extent *= std::f64::consts::SQRT_2;
        }
        extent.ceil() as usize + 4
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        if self.source_box < PATCH_SIZE {
            return bad(format!("source_box {} is below {PATCH_SIZE}", self.source_box));
        }
        if self.image_size % 2 != 0 {
            return bad(format!("image_size {} must be even", self.image_size));
        }
        if self.quadrant_size() < self.required_quadrant() {
            return bad(format!(
                "image_size {} too small for {} targets from a {} box (needs quadrants of {})",
                self.image_size,
                self.kind,
                self.source_box,
                self.required_quadrant()
            ));
        }
        if self.vertex_count < 3 {
            return bad(format!("vertex_count {} is below 3", self.vertex_count));
        }
        if !(0.0..=1.0).contains(&self.pp_probability) {
            return bad(format!("pp_probability {} not in [0, 1]", self.pp_probability));
        }
        if self.blend.enabled {
            if self.blend.average_sizes.is_empty()
                || self.blend.average_sizes.iter().any(|s| !AVERAGE_SIZES.contains(s))
            {
                return bad(format!("blend sizes {:?} not in {AVERAGE_SIZES:?}", self.blend.average_sizes));
            }
            if self.blend.highpass_size % 2 == 0 || self.blend.highpass_size < 3 {
                return bad(format!("highpass_size {} must be odd and >= 3", self.blend.highpass_size));
            }
        }
        if let BackgroundSource::Procedural { pool_size } = self.background {
            if pool_size == 0 {
                return bad("procedural pool_size must be positive".into());
            }
        }
        Ok(())
    }
}
