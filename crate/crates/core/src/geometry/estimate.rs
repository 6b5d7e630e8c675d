use crate::imaging::{BinaryMask, BoundingBox, PixelSet};
use crate::warp::warp_mask_from;

use super::{normalize_degrees, GeometryError, SimilarityTransform};

/// Relative eigenvalue gap below which a region has no preferred axis.
pub const DEGENERATE_EIGEN_GAP: f64 = 1e-6;
pub const MIN_REGION_PIXELS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrincipalAxis {
    /// Unit vector along the direction of largest spread.
    pub direction: (f64, f64),
    /// Largest eigenvalue of the inertia matrix (pixels²).
    pub moment: f64,
    pub minor_moment: f64,
    pub centroid: (f64, f64),
    pub degenerate: bool,
}

impl PrincipalAxis {
    /// Axis orientation in degrees, in `(-90, 90]`.
    pub fn angle_deg(&self) -> f64 {
        let a = self.direction.1.atan2(self.direction.0).to_degrees();
        if a <= -90.0 {
            a + 180.0
        } else if a > 90.0 {
            a - 180.0
        } else {
            a
        }
    }
}

/// Second-order central moments `(sxx, sxy, syy)`, normalized by the count.
pub fn inertia(region: &PixelSet) -> Result<((f64, f64), [f64; 3]), GeometryError> {
    let (cx, cy) = region.centroid().map_err(|_| GeometryError::EmptyRegion)?;
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for (x, y) in region.iter() {
        let (dx, dy) = (f64::from(x) - cx, f64::from(y) - cy);
        a += dx * dx;
        b += dx * dy;
        c += dy * dy;
    }
    let n = region.len() as f64;
    Ok(((cx, cy), [a / n, b / n, c / n]))
}

pub fn principal_axis(region: &PixelSet) -> Result<PrincipalAxis, GeometryError> {
    let (centroid, [a, b, c]) = inertia(region)?;
    let mean = (a + c) / 2.0;
    let r = ((a - c) / 2.0).hypot(b);
    let (l1, l2) = (mean + r, (mean - r).max(0.0));
    let phi = 0.5 * (2.0 * b).atan2(a - c);
    Ok(PrincipalAxis {
        direction: (phi.cos(), phi.sin()),
        moment: l1,
        minor_moment: l2,
        centroid,
        degenerate: l1 <= 0.0 || (l1 - l2) < DEGENERATE_EIGEN_GAP * l1,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub transform: SimilarityTransform,
    /// Set when either region has no dominant axis; the angle is then 0.
    pub degenerate: bool,
    /// Overlap between the warped first region and the second one.
    pub iou: f64,
}

/// Estimates the transform mapping `p1` onto `p2`.
///
/// The angle is the difference of the principal-axis orientations. Each
/// candidate angle gets scales from the ratio of bounding-box extents after
/// rotating `p1` about its centroid and a translation aligning the centroids;
/// the candidate whose warped `p1` mask overlaps `p2` best wins. Besides the
/// two orientations of the principal axis, the axis-aligned angles 0° and
/// 180° are always tried, since anisotropic scaling alone can swap the
/// principal axes of a region.
pub fn estimate_from_masks(p1: &PixelSet, p2: &PixelSet) -> Result<Estimate, GeometryError> {
    for p in [p1, p2] {
        if p.is_empty() {
            return Err(GeometryError::EmptyRegion);
        }
        if p.len() < MIN_REGION_PIXELS {
            return Err(GeometryError::RegionTooSmall(p.len()));
        }
    }
    let (a1, a2) = (principal_axis(p1)?, principal_axis(p2)?);
    let degenerate = a1.degenerate || a2.degenerate;
    let mut candidates = vec![0.0, 180.0];
    if !degenerate {
        let alpha = a2.angle_deg() - a1.angle_deg();
        candidates.push(normalize_degrees(alpha));
        candidates.push(normalize_degrees(alpha + 180.0));
    } else {
        candidates.truncate(1);
    }

    let scorer = OverlapScorer::new(p1, p2)?;
    let mut best: Option<(SimilarityTransform, f64)> = None;
    for alpha in candidates {
        let Some(t) = fit_for_angle(p1, p2, alpha) else { continue };
        let iou = scorer.iou(&t);
        if best.map_or(true, |(_, b)| iou > b) {
            best = Some((t, iou));
        }
    }
    let (transform, iou) = best.ok_or(GeometryError::NotSimilarity)?;
    Ok(Estimate { transform, degenerate, iou })
}

/// Scales and translation for a fixed angle.
fn fit_for_angle(p1: &PixelSet, p2: &PixelSet, alpha_deg: f64) -> Option<SimilarityTransform> {
    let (s, c) = alpha_deg.to_radians().sin_cos();
    let (mut xmin, mut xmax, mut ymin, mut ymax) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in p1.iter() {
        let (x, y) = (f64::from(x), f64::from(y));
        let (u, v) = (c * x - s * y, s * x + c * y);
        xmin = xmin.min(u);
        xmax = xmax.max(u);
        ymin = ymin.min(v);
        ymax = ymax.max(v);
    }
    let b2 = p2.bounding_box().ok()?;
    let fx = b2.width as f64 / (xmax - xmin + 1.0);
    let fy = b2.height as f64 / (ymax - ymin + 1.0);

    // t = mean(p2) - A mean(p1), written so that integer sums stay exact.
    let (sx1, sy1) = p1.coordinate_sums();
    let (sx2, sy2) = p2.coordinate_sums();
    let (n1, n2) = (p1.len() as f64, p2.len() as f64);
    let (sx1, sy1, sx2, sy2) = (sx1 as f64, sy1 as f64, sx2 as f64, sy2 as f64);
    let ax = fx * (c * sx1 - s * sy1);
    let ay = fy * (s * sx1 + c * sy1);
    let tx = (n1 * sx2 - n2 * ax) / (n1 * n2);
    let ty = (n1 * sy2 - n2 * ay) / (n1 * n2);
    SimilarityTransform::new(alpha_deg, fx, fy, tx, ty).ok()
}

struct OverlapScorer {
    source: BinaryMask,
    origin: (i32, i32),
    target: PixelSet,
    target_box: BoundingBox,
}

impl OverlapScorer {
    fn new(p1: &PixelSet, p2: &PixelSet) -> Result<Self, GeometryError> {
        // One pixel of empty margin so edges interpolate against background.
        let b1 = p1.bounding_box().map_err(|_| GeometryError::EmptyRegion)?.expanded(1);
        let mut source = BinaryMask::new(b1.width, b1.height);
        for (x, y) in p1.iter() {
            source.set((x - b1.x0) as usize, (y - b1.y0) as usize, true);
        }
        let target_box = p2.bounding_box().map_err(|_| GeometryError::EmptyRegion)?;
        Ok(Self { source, origin: (b1.x0, b1.y0), target: p2.clone(), target_box })
    }

    fn iou(&self, t: &SimilarityTransform) -> f64 {
        let (w, h) = (self.source.width() as f64, self.source.height() as f64);
        let (ox, oy) = (f64::from(self.origin.0), f64::from(self.origin.1));
        let corners: Vec<(f64, f64)> = [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)]
            .iter()
            .map(|&(x, y)| t.apply(ox + x, oy + y))
            .collect();
        let Some(warped_box) = BoundingBox::enclosing(&corners) else { return 0.0 };
        let out_box = warped_box.union(&self.target_box);
        let warped = warp_mask_from(&self.source, self.origin, t, out_box);
        let warped_count = warped.count();
        let mut inter = 0usize;
        for (x, y) in self.target.iter() {
            if warped.get((x - out_box.x0) as usize, (y - out_box.y0) as usize) {
                inter += 1;
            }
        }
        let uni = warped_count + self.target.len() - inter;
        if uni == 0 {
            0.0
        } else {
            inter as f64 / uni as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::warp::warp_points;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ellipse(cx: f64, cy: f64, a: f64, b: f64, theta_deg: f64) -> PixelSet {
        let (s, c) = theta_deg.to_radians().sin_cos();
        let r = a.max(b).ceil() as i32 + 1;
        let mut pts = Vec::new();
        for y in (cy as i32 - r)..=(cy as i32 + r) {
            for x in (cx as i32 - r)..=(cx as i32 + r) {
                let (dx, dy) = (f64::from(x) - cx, f64::from(y) - cy);
                let (u, v) = (c * dx + s * dy, -s * dx + c * dy);
                if (u / a).powi(2) + (v / b).powi(2) <= 1.0 {
                    pts.push((x, y));
                }
            }
        }
        PixelSet::from_points(pts)
    }

    fn axis_diff_deg(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(180.0);
        d.min(180.0 - d)
    }

    #[test]
    fn horizontal_segment_axis() {
        let seg: PixelSet = (0..20).map(|x| (x, 5)).collect();
        let ax = principal_axis(&seg).unwrap();
        assert!((ax.direction.0.abs() - 1.0).abs() < 1e-12);
        assert!(ax.direction.1.abs() < 1e-12);
        assert!(!ax.degenerate);
    }

    #[test]
    fn disk_is_degenerate() {
        let disk = ellipse(50.0, 50.0, 20.0, 20.0, 0.0);
        assert!(principal_axis(&disk).unwrap().degenerate);
        assert!(matches!(principal_axis(&PixelSet::new()), Err(GeometryError::EmptyRegion)));
    }

    #[test]
    fn random_blobs_match_eigenvector_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let pts: Vec<(i32, i32)> =
                (0..300).map(|_| (rng.gen_range(0..40), rng.gen_range(0..15) + rng.gen_range(0..30) / 3)).collect();
            let set = PixelSet::from_points(pts);
            let ax = principal_axis(&set).unwrap();
            // Oracle: eigenvector of [[a, b], [b, c]] for the larger eigenvalue
            // from the characteristic polynomial.
            let n = set.len() as f64;
            let (mx, my) = (
                set.iter().map(|p| p.0 as f64).sum::<f64>() / n,
                set.iter().map(|p| p.1 as f64).sum::<f64>() / n,
            );
            let a = set.iter().map(|p| (p.0 as f64 - mx).powi(2)).sum::<f64>() / n;
            let b = set.iter().map(|p| (p.0 as f64 - mx) * (p.1 as f64 - my)).sum::<f64>() / n;
            let c = set.iter().map(|p| (p.1 as f64 - my).powi(2)).sum::<f64>() / n;
            let tr = a + c;
            let det = a * c - b * b;
            let l1 = tr / 2.0 + (tr * tr / 4.0 - det).sqrt();
            let v = if b.abs() > 1e-12 { (l1 - c, b) } else if a >= c { (1.0, 0.0) } else { (0.0, 1.0) };
            let oracle = v.1.atan2(v.0).to_degrees();
            let got = ax.direction.1.atan2(ax.direction.0).to_degrees();
            assert!(axis_diff_deg(oracle, got).to_radians() <= 1e-6);
            assert!((ax.moment - l1).abs() <= 1e-9 * l1.max(1.0));
            let u = ax.direction;
            assert!((u.0.hypot(u.1) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pure_translation_is_exact() {
        let p1 = ellipse(60.0, 40.0, 30.0, 12.0, 25.0);
        let p2 = p1.translated(10, 20);
        let e = estimate_from_masks(&p1, &p2).unwrap();
        assert_eq!(e.transform.alpha_deg, 0.0);
        assert_eq!((e.transform.fx, e.transform.fy), (1.0, 1.0));
        assert_eq!((e.transform.tx, e.transform.ty), (10.0, 20.0));
    }

    #[test]
    fn rotation_and_scale_recovery() {
        let p1 = ellipse(100.0, 100.0, 50.0, 20.0, 10.0);
        let rot = SimilarityTransform::new(30.0, 1.0, 1.0, 0.0, 0.0).unwrap();
        // Rotate about the centroid, then shift.
        let c = p1.centroid().unwrap();
        let (rx, ry) = rot.apply(c.0, c.1);
        let t = SimilarityTransform { tx: c.0 - rx + 300.0, ty: c.1 - ry, ..rot };
        let p2 = crate::warp::warp_points(&p1, &t);
        let e = estimate_from_masks(&p1, &p2).unwrap();
        assert!((e.transform.alpha_deg - 30.0).abs() <= 2.0, "{:?}", e);

        let s = SimilarityTransform::new(0.0, 1.5, 0.8, 400.0, 50.0).unwrap();
        let p1 = ellipse(100.0, 100.0, 40.0, 30.0, 0.0);
        let p2 = dense_image_of(&p1, &s);
        let e = estimate_from_masks(&p1, &p2).unwrap();
        assert!((1.45..=1.55).contains(&e.transform.fx), "{:?}", e);
        assert!((0.77..=0.83).contains(&e.transform.fy), "{:?}", e);
    }

    // Image of a region under a transform, filled by inverse mapping so that
    // upscaling leaves no holes.
    fn dense_image_of(p: &PixelSet, t: &SimilarityTransform) -> PixelSet {
        let b = p.bounding_box().unwrap().expanded(1);
        let mut m = BinaryMask::new(b.width, b.height);
        for (x, y) in p.iter() {
            m.set((x - b.x0) as usize, (y - b.y0) as usize, true);
        }
        let pts = warp_points(p, t);
        let out = pts.bounding_box().unwrap().expanded(4);
        let w = warp_mask_from(&m, (b.x0, b.y0), t, out);
        w.pixels().translated(out.x0, out.y0)
    }

    #[test]
    fn swapped_estimate_is_near_inverse() {
        let p1 = ellipse(100.0, 100.0, 50.0, 18.0, -20.0);
        let t = SimilarityTransform::new(40.0, 1.0, 1.0, 250.0, 30.0).unwrap();
        let p2 = dense_image_of(&p1, &t);
        let fwd = estimate_from_masks(&p1, &p2).unwrap().transform;
        let bwd = estimate_from_masks(&p2, &p1).unwrap().transform;
        let prod = super::super::mat_mul(&fwd.matrix(), &bwd.matrix());
        let id = super::super::IDENTITY3;
        for i in 0..2 {
            for j in 0..2 {
                assert!((prod[i][j] - id[i][j]).abs() <= 0.05, "{prod:?}");
            }
        }
    }

    #[test]
    fn too_small_regions_are_rejected() {
        let tiny: PixelSet = (0..3).map(|x| (x, 0)).collect();
        let ok = ellipse(50.0, 50.0, 10.0, 5.0, 0.0);
        assert!(matches!(estimate_from_masks(&tiny, &ok), Err(GeometryError::RegionTooSmall(3))));
        assert!(matches!(estimate_from_masks(&PixelSet::new(), &ok), Err(GeometryError::EmptyRegion)));
    }
}
