//! Pixel-level primitives: images, masks, codecs, filters, morphology and
//! connected components.

mod codec;
mod components;
mod filters;
mod mask;
mod morphology;
mod raster;

use std::path::PathBuf;

pub use codec::{
    encode, jpeg_round_trip, load_image, load_label_map, load_mask, save_image, save_label_map,
    save_mask, Codec,
};
pub use components::{connected_components, Component};
pub use filters::{
    apply_filter, box_mean_at, box_mean_plane, convolve3, gaussian_kernel3, FilterSpec,
    AVERAGE_SIZES, DENOISE_WINDOWS, GAUSSIAN_SIGMAS, NOISE_VARIANCES, STRETCH_ROWS,
    UNSHARP_AMOUNT,
};
pub use mask::{
    BinaryMask, BoundingBox, Label, LabelMap, PixelSet, BACKGROUND_RGB, SOURCE_RGB, TARGET_RGB,
};
pub use morphology::{binary_dilate, binary_erode, morphological_open};
pub use raster::{from_u8, to_u8, RasterImage, CHANNELS};

#[derive(Debug, thiserror::Error)]
pub enum ImagingError {
    #[error("image must be at least 1x1")]
    EmptyImage,
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch { expected: (usize, usize), found: (usize, usize) },
    #[error("intensity outside [0, 1]")]
    OutOfRange,
    #[error("box {0:?} does not fit inside the image")]
    BoxOutOfBounds(BoundingBox),
    #[error("pixel set is empty")]
    EmptyPixelSet,
    #[error("source and target labels overlap")]
    OverlappingLabels,
    #[error("label map does not cover the localization mask")]
    LabelMaskMismatch,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("decode error: {0}")]
    Decode(String),
    #[error("encode error: {0}")]
    Encode(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}
