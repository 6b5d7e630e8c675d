//! Fixed-size patch extraction feeding the scorers: the central 64×64
//! quadruple `[(P1, ~P1), (P2, ~P2)]` and the corner crops of each region's
//! bounding box paired with the remapped counterpart.

use serde::{Deserialize, Serialize};

use crate::geometry::SimilarityTransform;
use crate::imaging::{BinaryMask, BoundingBox, ImagingError, PixelSet, RasterImage};
use crate::warp::{warp_image_from, WarpedPatch};

pub const PATCH_SIZE: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum FoaError {
    #[error("region bounding box {width}x{height} is smaller than {PATCH_SIZE}x{PATCH_SIZE}")]
    RegionTooSmall { width: usize, height: usize },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

/// `x1, x2` come from the first region (the original crop and its
/// replication from the second region), `x3, x4` from the second.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchQuad {
    pub x1: WarpedPatch,
    pub x2: WarpedPatch,
    pub x3: WarpedPatch,
    pub x4: WarpedPatch,
}

impl PatchQuad {
    /// The quadruple seen with the regions relabeled.
    pub fn swapped(&self) -> Self {
        Self { x1: self.x3.clone(), x2: self.x4.clone(), x3: self.x1.clone(), x4: self.x2.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Corner {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

impl Corner {
    pub const ALL: [Corner; 4] =
        [Corner::TopLeft, Corner::TopRight, Corner::BottomLeft, Corner::BottomRight];

    /// The `size`×`size` crop at this corner of a `width`×`height` box, in box
    /// coordinates.
    pub fn crop_box(self, width: usize, height: usize, size: usize) -> BoundingBox {
        let (dx, dy) = ((width - size) as i32, (height - size) as i32);
        let (x0, y0) = match self {
            Corner::TopLeft => (0, 0),
            Corner::TopRight => (dx, 0),
            Corner::BottomLeft => (0, dy),
            Corner::BottomRight => (dx, dy),
        };
        BoundingBox::new(x0, y0, size, size)
    }
}

/// `b1` is a corner crop of a region's box, `b2` the same corner of the
/// other region remapped onto that box.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryPair {
    pub b1: WarpedPatch,
    pub b2: WarpedPatch,
    pub corner: Corner,
}

fn full_patch(img: RasterImage) -> WarpedPatch {
    let validity = BinaryMask::full(img.width(), img.height());
    WarpedPatch { image: img, validity }
}

/// Region boxes checked against the minimum size.
pub fn region_boxes(p1: &PixelSet, p2: &PixelSet) -> Result<(BoundingBox, BoundingBox), FoaError> {
    let b1 = p1.bounding_box()?;
    let b2 = p2.bounding_box()?;
    for b in [b1, b2] {
        if b.min_side() < PATCH_SIZE {
            return Err(FoaError::RegionTooSmall { width: b.width, height: b.height });
        }
    }
    Ok((b1, b2))
}

/// Bounding-box patches of both regions and their cross replications:
/// `(P1^b, ~P1^b, P2^b, ~P2^b)` where `~P2^b` warps `P1^b` by `t` onto the box
/// of `P2` and `~P1^b` warps `P2^b` by the inverse onto the box of `P1`.
pub struct RegionPatches {
    pub box1: BoundingBox,
    pub box2: BoundingBox,
    pub p1: WarpedPatch,
    pub p1_tilde: WarpedPatch,
    pub p2: WarpedPatch,
    pub p2_tilde: WarpedPatch,
}

pub fn region_patches(
    img: &RasterImage,
    p1: &PixelSet,
    p2: &PixelSet,
    t: &SimilarityTransform,
) -> Result<RegionPatches, FoaError> {
    let (box1, box2) = region_boxes(p1, p2)?;
    let crop1 = img.crop(box1)?;
    let crop2 = img.crop(box2)?;
    let p2_tilde = warp_image_from(&crop1, (box1.x0, box1.y0), t, box2);
    let p1_tilde = warp_image_from(&crop2, (box2.x0, box2.y0), &t.invert(), box1);
    Ok(RegionPatches {
        box1,
        box2,
        p1: full_patch(crop1),
        p1_tilde,
        p2: full_patch(crop2),
        p2_tilde,
    })
}

fn central(patch: &WarpedPatch) -> WarpedPatch {
    let b = BoundingBox::new(0, 0, patch.image.width(), patch.image.height())
        .central(PATCH_SIZE)
        .expect("box checked against the patch size");
    patch.crop(b).expect("central crop lies inside the patch")
}

pub fn build_quad(
    img: &RasterImage,
    p1: &PixelSet,
    p2: &PixelSet,
    t: &SimilarityTransform,
) -> Result<PatchQuad, FoaError> {
    let r = region_patches(img, p1, p2, t)?;
    Ok(PatchQuad {
        x1: central(&r.p1),
        x2: central(&r.p1_tilde),
        x3: central(&r.p2),
        x4: central(&r.p2_tilde),
    })
}

fn corner_pairs(a: &WarpedPatch, b: &WarpedPatch) -> Vec<BoundaryPair> {
    let (w, h) = a.image.dimensions();
    Corner::ALL
        .iter()
        .map(|&corner| {
            let cb = corner.crop_box(w, h, PATCH_SIZE);
            BoundaryPair {
                b1: a.crop(cb).expect("corner crop inside box"),
                b2: b.crop(cb).expect("corner crop inside box"),
                corner,
            }
        })
        .collect()
}

/// Corner pairs `[B1, ~B1]` for the first region and `[B2, ~B2]` for the
/// second, in the order top-left, top-right, bottom-left, bottom-right.
pub fn build_boundary_pairs(
    img: &RasterImage,
    p1: &PixelSet,
    p2: &PixelSet,
    t: &SimilarityTransform,
) -> Result<(Vec<BoundaryPair>, Vec<BoundaryPair>), FoaError> {
    let r = region_patches(img, p1, p2, t)?;
    Ok((corner_pairs(&r.p1, &r.p1_tilde), corner_pairs(&r.p2, &r.p2_tilde)))
}
