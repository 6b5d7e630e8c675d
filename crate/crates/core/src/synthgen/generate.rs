use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::background::BackgroundPool;
use super::config::{resize_grid, rotation_grid, GenConfig, TransformKind};
use super::polygon::sample_convex_polygon;
use super::postprocess::{sample_global_op, GlobalOp};
use super::SynthError;
use crate::geometry::SimilarityTransform;
use crate::imaging::{
    binary_dilate, box_mean_at, box_mean_plane, BinaryMask, BoundingBox, LabelMap, PixelSet,
    RasterImage,
};
use crate::warp::{warp_image_from, warp_mask_from};

/// Context kept around the source region when resampling it, so that the
/// interpolation near the region edge reads real image content.
const SOURCE_MARGIN: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quadrant {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] =
        [Quadrant::TopLeft, Quadrant::TopRight, Quadrant::BottomLeft, Quadrant::BottomRight];

    pub fn bounds(self, image_size: usize) -> BoundingBox {
        let q = image_size / 2;
        let (x, y) = match self {
            Quadrant::TopLeft => (0, 0),
            Quadrant::TopRight => (q, 0),
            Quadrant::BottomLeft => (0, q),
            Quadrant::BottomRight => (q, q),
        };
        BoundingBox::new(x as i32, y as i32, q, q)
    }
}

/// How many interpolation steps produced the target, and in which order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApplicationOrder {
    Single,
    RotationFirst,
    ResizeFirst,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlendLog {
    pub average_size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForgeryRecord {
    pub id: String,
    pub image: RasterImage,
    pub labels: LabelMap,
    /// Maps source coordinates to target coordinates.
    pub transform: SimilarityTransform,
    pub kind: TransformKind,
    pub order: ApplicationOrder,
    pub source_bbox: BoundingBox,
    pub target_bbox: BoundingBox,
    pub source_quadrant: Quadrant,
    pub target_quadrant: Quadrant,
    pub blend: Option<BlendLog>,
    pub postprocessing: Vec<GlobalOp>,
    pub seed: u64,
    pub background_ref: String,
}

impl ForgeryRecord {
    pub fn mask(&self) -> BinaryMask {
        self.labels.localization_mask()
    }

    pub fn source_pixels(&self) -> PixelSet {
        self.labels.source_mask().pixels()
    }

    pub fn target_pixels(&self) -> PixelSet {
        self.labels.target_mask().pixels()
    }
}

/// Independent stream for record `index` under `seed`.
pub fn record_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn record_id(index: u64) -> String {
    format!("{index:06}")
}

/// The drawn geometry: parameters on the grids and the resampling steps that
/// realize them, each expressed in absolute image coordinates.
struct TargetPlan {
    transform: SimilarityTransform,
    order: ApplicationOrder,
    steps: Vec<SimilarityTransform>,
}

fn pick<R: Rng + ?Sized>(grid: impl Iterator<Item = f64>, rng: &mut R) -> f64 {
    let v: Vec<f64> = grid.collect();
    v[rng.gen_range(0..v.len())]
}

fn plan_target<R: Rng + ?Sized>(
    kind: TransformKind,
    center: (f64, f64),
    dest: (f64, f64),
    rng: &mut R,
) -> TargetPlan {
    let about = |alpha: f64, fx: f64, fy: f64, to: (f64, f64)| {
        // Maps `center` to `to`: t = to - S R center.
        let t = SimilarityTransform { alpha_deg: alpha, fx, fy, tx: 0.0, ty: 0.0, inverse: false };
        let (cx, cy) = t.apply(center.0, center.1);
        SimilarityTransform { tx: to.0 - cx, ty: to.1 - cy, ..t }
    };
    match kind {
        TransformKind::Rigid => {
            let t = SimilarityTransform::translation(
                (dest.0 - center.0).round(),
                (dest.1 - center.1).round(),
            );
            TargetPlan { transform: t, order: ApplicationOrder::Single, steps: vec![t] }
        }
        TransformKind::Rot => {
            let t = about(pick(rotation_grid(), rng), 1.0, 1.0, dest);
            TargetPlan { transform: t, order: ApplicationOrder::Single, steps: vec![t] }
        }
        TransformKind::Res => {
            let fx = pick(resize_grid(), rng);
            let fy = pick(resize_grid(), rng);
            let t = about(0.0, fx, fy, dest);
            TargetPlan { transform: t, order: ApplicationOrder::Single, steps: vec![t] }
        }
        TransformKind::RotRes => {
            let alpha = pick(rotation_grid(), rng);
            let fx = pick(resize_grid(), rng);
            let fy = pick(resize_grid(), rng);
            TargetPlan {
                transform: about(alpha, fx, fy, dest),
                order: ApplicationOrder::RotationFirst,
                steps: vec![about(alpha, 1.0, 1.0, center), about(0.0, fx, fy, dest)],
            }
        }
        TransformKind::ResRot => {
            // Isotropic factor: rotation after anisotropic scaling has no
            // single rotation-then-scaling equivalent.
            let alpha = pick(rotation_grid(), rng);
            let f = pick(resize_grid(), rng);
            TargetPlan {
                transform: about(alpha, f, f, dest),
                order: ApplicationOrder::ResizeFirst,
                steps: vec![about(0.0, f, f, center), about(alpha, 1.0, 1.0, dest)],
            }
        }
    }
}

fn mapped_box(b: BoundingBox, t: &SimilarityTransform, margin: usize) -> BoundingBox {
    let (x0, y0) = (f64::from(b.x0), f64::from(b.y0));
    let (x1, y1) = (f64::from(b.x1() - 1), f64::from(b.y1() - 1));
    let corners: Vec<(f64, f64)> =
        [(x0, y0), (x1, y0), (x0, y1), (x1, y1)].iter().map(|&(x, y)| t.apply(x, y)).collect();
    BoundingBox::enclosing(&corners).expect("four corners").expanded(margin)
}

fn clip_to(b: BoundingBox, w: usize, h: usize) -> BoundingBox {
    let x0 = b.x0.max(0);
    let y0 = b.y0.max(0);
    let x1 = b.x1().min(w as i32);
    let y1 = b.y1().min(h as i32);
    BoundingBox::new(x0, y0, (x1 - x0).max(1) as usize, (y1 - y0).max(1) as usize)
}

/// Edge-enhanced mask: nonzero response of a `size`×`size` high-pass
/// (identity minus box mean) on the 0/1 mask, then `iterations` dilations.
/// Computed inside `region` only.
pub fn edge_enhanced_mask(
    mask: &BinaryMask,
    region: BoundingBox,
    highpass_size: usize,
    iterations: usize,
) -> BinaryMask {
    let (w, h) = mask.dimensions();
    let sub = mask.crop(region).expect("region inside mask");
    let field: Vec<f64> = sub.data().iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    let low = box_mean_plane(&field, sub.width(), sub.height(), highpass_size);
    let edge = BinaryMask::from_fn(sub.width(), sub.height(), |x, y| {
        let i = y * sub.width() + x;
        (field[i] - low[i]).abs() > 1e-9
    });
    let grown = binary_dilate(&edge, iterations);
    BinaryMask::from_fn(w, h, |x, y| {
        region.contains(x as i32, y as i32)
            && grown.get(x - region.x0 as usize, y - region.y0 as usize)
    })
}

/// Builds one forgery on `background`, which must be at least
/// `image_size` on both sides; a random `image_size` crop is used.
pub fn generate_forgery<R: Rng + ?Sized>(
    background: &RasterImage,
    cfg: &GenConfig,
    rng: &mut R,
) -> Result<ForgeryRecord, SynthError> {
    cfg.validate()?;
    let n = cfg.image_size;
    let (bw, bh) = background.dimensions();
    if bw < n || bh < n {
        return Err(SynthError::BackgroundTooSmall { needed: n });
    }
    let (ox, oy) = (rng.gen_range(0..=bw - n), rng.gen_range(0..=bh - n));
    let mut image = background.crop(BoundingBox::new(ox as i32, oy as i32, n, n))?.quantized();
    let crop_ref = if (bw, bh) == (n, n) { String::new() } else { format!("@{ox},{oy}") };

    // Source selection.
    let source_quadrant = *Quadrant::ALL.choose(rng).expect("four quadrants");
    let qb = source_quadrant.bounds(n);
    let slack = qb.width - cfg.source_box;
    let bx = qb.x0 + rng.gen_range(0..=slack) as i32;
    let by = qb.y0 + rng.gen_range(0..=slack) as i32;
    let polygon = sample_convex_polygon(cfg.source_box, cfg.vertex_count, rng)?;
    let source = polygon.pixels.translated(bx, by);
    let source_bbox = source.bounding_box()?;
    let source_mask = BinaryMask::from_pixels(n, n, &source);

    // Target creation.
    let others: Vec<Quadrant> = Quadrant::ALL.into_iter().filter(|&q| q != source_quadrant).collect();
    let target_quadrant = *others.choose(rng).expect("three quadrants");
    let dest = target_quadrant.bounds(n).center();
    let plan = plan_target(cfg.kind, source_bbox.center(), dest, rng);

    let local_box = source_bbox.expanded(1);
    let local_mask = BinaryMask::from_fn(local_box.width, local_box.height, |x, y| {
        source.contains(x as i32 + local_box.x0, y as i32 + local_box.y0)
    });
    let target_area = mapped_box(local_box, &plan.transform, 2);
    if !target_area.is_inside(n, n) {
        return Err(SynthError::Config(format!("target {target_area:?} leaves the frame")));
    }
    let warped_mask =
        warp_mask_from(&local_mask, (local_box.x0, local_box.y0), &plan.transform, target_area);
    let target: PixelSet = warped_mask.pixels().translated(target_area.x0, target_area.y0);
    let target_bbox = target.bounding_box().map_err(|_| SynthError::EmptyTarget)?;
    let target_mask = BinaryMask::from_pixels(n, n, &target);
    let labels = LabelMap::from_masks(&source_mask, &target_mask)?;

    // Resample the source with context, one interpolation per step.
    let mut cur_box = clip_to(source_bbox.expanded(SOURCE_MARGIN), n, n);
    let mut cur = image.crop(cur_box)?;
    let (last, first) = plan.steps.split_last().expect("at least one step");
    for step in first {
        let out_box = mapped_box(cur_box, step, 1);
        cur = warp_image_from(&cur, (cur_box.x0, cur_box.y0), step, out_box).image;
        cur_box = out_box;
    }
    let patch = warp_image_from(&cur, (cur_box.x0, cur_box.y0), last, target_bbox);
    let mut missing = 0;
    for (x, y) in target.iter() {
        let (px, py) = ((x - target_bbox.x0) as usize, (y - target_bbox.y0) as usize);
        if patch.validity.get(px, py) {
            image.set_pixel(x as usize, y as usize, patch.image.pixel(px, py));
        } else {
            missing += 1;
        }
    }
    if missing > 0 {
        log::warn!("{missing} target pixels had no source support");
    }

    // Boundary blending.
    let blend = if cfg.blend.enabled {
        let size = *cfg.blend.average_sizes.choose(rng).expect("validated non-empty");
        let reach = cfg.blend.highpass_size / 2 + cfg.blend.dilation_iterations + 1;
        let region = clip_to(target_bbox.expanded(reach), n, n);
        let edges = edge_enhanced_mask(
            &target_mask,
            region,
            cfg.blend.highpass_size,
            cfg.blend.dilation_iterations,
        );
        let before = image.clone();
        for (x, y) in edges.pixels().iter() {
            image.set_pixel(x as usize, y as usize, box_mean_at(&before, x as usize, y as usize, size));
        }
        Some(BlendLog { average_size: size })
    } else {
        None
    };

    // Global post-processing.
    let mut postprocessing = Vec::new();
    if let Some(op) = sample_global_op(cfg.pp_probability, rng) {
        image = op.apply(&image, rng)?;
        postprocessing.push(op);
    }

    Ok(ForgeryRecord {
        id: String::new(),
        image: image.quantized(),
        labels,
        transform: plan.transform,
        kind: cfg.kind,
        order: plan.order,
        source_bbox,
        target_bbox,
        source_quadrant,
        target_quadrant,
        blend,
        postprocessing,
        seed: cfg.seed,
        background_ref: crop_ref,
    })
}

/// Generates record `index`: draws a background from the pool and a forgery
/// on it, both from the record's own stream.
pub fn generate_record(
    cfg: &GenConfig,
    pool: &BackgroundPool,
    index: u64,
) -> Result<ForgeryRecord, SynthError> {
    let mut rng = record_rng(cfg.seed, index);
    let bg = pool.draw(&mut rng)?;
    let mut rec = generate_forgery(&bg.image, cfg, &mut rng)?;
    rec.id = record_id(index);
    rec.background_ref = format!("{}{}", bg.reference, rec.background_ref);
    Ok(rec)
}

/// Generates records `start..start + count` in parallel. The output does not
/// depend on the number of worker threads.
pub fn generate_records(
    cfg: &GenConfig,
    pool: &BackgroundPool,
    start: u64,
    count: u64,
) -> Result<Vec<ForgeryRecord>, SynthError> {
    cfg.validate()?;
    (start..start + count).into_par_iter().map(|i| generate_record(cfg, pool, i)).collect()
}
