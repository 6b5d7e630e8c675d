//! Similarity transforms: representation, algebra, estimation from region
//! masks and training-time perturbation.

mod estimate;
mod transform;

pub use estimate::{
    estimate_from_masks, inertia, principal_axis, Estimate, PrincipalAxis, DEGENERATE_EIGEN_GAP,
    MIN_REGION_PIXELS,
};
pub use transform::{
    affine_inverse, mat_max_diff, mat_mul, normalize_degrees, Mat3, SimilarityTransform,
    IDENTITY3, NEAR_RIGID_MAX_ANGLE, NEAR_RIGID_MAX_SCALE_DEVIATION,
};

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("transform parameters must be finite")]
    NonFinite,
    #[error("scale factors must be positive, got fx={fx}, fy={fy}")]
    NonPositiveScale { fx: f64, fy: f64 },
    #[error("matrix is not a rotation-scale-translation")]
    NotSimilarity,
    #[error("region is empty")]
    EmptyRegion,
    #[error("region has {0} pixels, at least 8 are needed")]
    RegionTooSmall(usize),
}
