//! Synthetic copy-move forgeries with ground truth: convex source regions,
//! grid-sampled similarity transforms, boundary blending and global
//! post-processing.

mod background;
mod config;
mod dataset;
mod generate;
mod polygon;
mod postprocess;

use std::path::PathBuf;

pub use background::{procedural_texture, Background, BackgroundPool};
pub use config::{
    on_resize_grid, on_rotation_grid, resize_grid, rotation_grid, BackgroundSource, BlendConfig,
    GenConfig, TransformKind, MAX_RESIZE,
};
pub use dataset::{
    parse_json, read_dataset, read_json, read_manifest, read_record, write_dataset, write_json,
    write_manifest, write_record, Manifest, RecordMeta, IMAGE_FILE, MANIFEST_FILE, MAP_FILE, MASK_FILE, META_FILE,
};
pub use generate::{
    edge_enhanced_mask, generate_forgery, generate_record, generate_records, record_id,
    record_rng, ApplicationOrder, BlendLog, ForgeryRecord, Quadrant,
};
pub use polygon::{
    convex_hull, hull_contains, polygon_area, rasterize_convex, sample_convex_polygon, Polygon,
};
pub use postprocess::{pp_table, sample_global_op, GlobalOp, JpegOp, TABLE_UNITS};

use crate::imaging::ImagingError;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("background smaller than {needed}x{needed}")]
    BackgroundTooSmall { needed: usize },
    #[error("transformed source region is empty")]
    EmptyTarget,
    #[error("{}: field `{field}`: {message}", path.display())]
    Sidecar { path: PathBuf, field: String, message: String },
    #[error("inconsistent record: {0}")]
    Inconsistent(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}
