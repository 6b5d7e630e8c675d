//! Bilinear resampling under a similarity transform, by inverse mapping.

use crate::geometry::{affine_inverse, SimilarityTransform};
use crate::imaging::{BinaryMask, BoundingBox, PixelSet, RasterImage};

/// A resampled patch and the pixels whose source position lies inside the
/// input support. Invalid pixels hold 0.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpedPatch {
    pub image: RasterImage,
    pub validity: BinaryMask,
}

impl WarpedPatch {
    pub fn valid_fraction(&self) -> f64 {
        self.validity.count() as f64 / (self.validity.width() * self.validity.height()) as f64
    }

    /// Crops both the image and the validity mask. `b` is in patch coordinates.
    pub fn crop(&self, b: BoundingBox) -> Option<WarpedPatch> {
        Some(WarpedPatch { image: self.image.crop(b).ok()?, validity: self.validity.crop(b).ok()? })
    }
}

/// Source-frame coordinates for every output pixel in `out_box`, row-major.
/// `origin` is the position of the source's top-left pixel in the frame the
/// transform is expressed in.
fn inverse_coords(
    t: &SimilarityTransform,
    origin: (i32, i32),
    out_box: BoundingBox,
) -> impl Iterator<Item = (usize, usize, f64, f64)> {
    let inv = affine_inverse(&t.matrix()).expect("similarity transforms are invertible");
    let (ox, oy) = (f64::from(origin.0), f64::from(origin.1));
    (0..out_box.height).flat_map(move |j| {
        (0..out_box.width).map(move |i| {
            let gx = f64::from(out_box.x0) + i as f64;
            let gy = f64::from(out_box.y0) + j as f64;
            let sx = inv[0][0] * gx + inv[0][1] * gy + inv[0][2] - ox;
            let sy = inv[1][0] * gx + inv[1][1] * gy + inv[1][2] - oy;
            (i, j, sx, sy)
        })
    })
}

/// Bilinear interpolation weights and neighbour indices, or `None` when the
/// position falls outside `[0, w-1] × [0, h-1]`. Neighbours with zero weight
/// on the last row/column are clamped onto the edge.
#[inline]
fn bilinear_taps(sx: f64, sy: f64, w: usize, h: usize) -> Option<([usize; 4], [f64; 4])> {
    if !(sx >= 0.0 && sy >= 0.0 && sx <= (w - 1) as f64 && sy <= (h - 1) as f64) {
        return None;
    }
    let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
    let (ax, ay) = (sx - x0 as f64, sy - y0 as f64);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    Some((
        [y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1],
        [(1.0 - ax) * (1.0 - ay), ax * (1.0 - ay), (1.0 - ax) * ay, ax * ay],
    ))
}

/// Bilinear sample of `img` at a continuous position.
pub fn bilinear_sample(img: &RasterImage, x: f64, y: f64) -> Option<[f64; 3]> {
    let (w, h) = img.dimensions();
    let (idx, wt) = bilinear_taps(x, y, w, h)?;
    let d = img.data();
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        *o = (0..4).map(|k| wt[k] * d[idx[k] * 3 + c]).sum();
    }
    Some(out)
}

pub fn warp_image(src: &RasterImage, t: &SimilarityTransform, out_box: BoundingBox) -> WarpedPatch {
    warp_image_from(src, (0, 0), t, out_box)
}

/// Warps a source whose top-left pixel sits at `origin`.
pub fn warp_image_from(
    src: &RasterImage,
    origin: (i32, i32),
    t: &SimilarityTransform,
    out_box: BoundingBox,
) -> WarpedPatch {
    let (w, h) = src.dimensions();
    let mut data = vec![0.0; out_box.width * out_box.height * 3];
    let mut valid = vec![false; out_box.width * out_box.height];
    let s = src.data();
    for (i, j, sx, sy) in inverse_coords(t, origin, out_box) {
        if let Some((idx, wt)) = bilinear_taps(sx, sy, w, h) {
            let o = j * out_box.width + i;
            valid[o] = true;
            for c in 0..3 {
                data[o * 3 + c] = wt[0] * s[idx[0] * 3 + c]
                    + wt[1] * s[idx[1] * 3 + c]
                    + wt[2] * s[idx[2] * 3 + c]
                    + wt[3] * s[idx[3] * 3 + c];
            }
        }
    }
    // Convex weights keep samples inside [0, 1].
    let data = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    WarpedPatch {
        image: RasterImage::from_raw(out_box.width, out_box.height, data)
            .expect("warp output box is non-empty"),
        validity: BinaryMask::from_fn(out_box.width, out_box.height, |x, y| {
            valid[y * out_box.width + x]
        }),
    }
}

pub fn warp_mask(src: &BinaryMask, t: &SimilarityTransform, out_box: BoundingBox) -> BinaryMask {
    warp_mask_from(src, (0, 0), t, out_box)
}

/// Bilinear warp of the 0/1 field, thresholded at 0.5 (inclusive).
pub fn warp_mask_from(
    src: &BinaryMask,
    origin: (i32, i32),
    t: &SimilarityTransform,
    out_box: BoundingBox,
) -> BinaryMask {
    let (w, h) = src.dimensions();
    let s = src.data();
    let mut out = BinaryMask::new(out_box.width, out_box.height);
    for (i, j, sx, sy) in inverse_coords(t, origin, out_box) {
        if let Some((idx, wt)) = bilinear_taps(sx, sy, w, h) {
            let v: f64 = (0..4).filter(|&k| s[idx[k]]).map(|k| wt[k]).sum();
            if v >= 0.5 {
                out.set(i, j, true);
            }
        }
    }
    out
}

/// Forward-maps each point, rounds to the nearest grid point and deduplicates.
pub fn warp_points(points: &PixelSet, t: &SimilarityTransform) -> PixelSet {
    let m = t.matrix();
    points
        .iter()
        .map(|(x, y)| {
            let (x, y) = (f64::from(x), f64::from(y));
            let u = m[0][0] * x + m[0][1] * y + m[0][2];
            let v = m[1][0] * x + m[1][1] * y + m[1][2];
            (u.round() as i32, v.round() as i32)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(w: usize, h: usize, seed: u64) -> RasterImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RasterImage::from_fn(w, h, |_, _| [rng.gen(), rng.gen(), rng.gen()]).unwrap()
    }

    fn full(img: &RasterImage) -> BoundingBox {
        BoundingBox::new(0, 0, img.width(), img.height())
    }

    #[test]
    fn identity_warp_is_exact() {
        let img = noise(31, 17, 1);
        let out = warp_image(&img, &SimilarityTransform::identity(), full(&img));
        assert_eq!(out.image, img);
        assert_eq!(out.validity.count(), 31 * 17);
    }

    #[test]
    fn integer_translation_is_exact_on_valid_region() {
        let img = noise(20, 20, 2);
        let t = SimilarityTransform::translation(3.0, -2.0);
        let out = warp_image(&img, &t, full(&img));
        for y in 0..20 {
            for x in 0..20 {
                let (sx, sy) = (x as i64 - 3, y as i64 + 2);
                let inside = (0..20).contains(&sx) && (0..20).contains(&sy);
                assert_eq!(out.validity.get(x, y), inside);
                if inside {
                    assert_eq!(out.image.pixel(x, y), img.pixel(sx as usize, sy as usize));
                } else {
                    assert_eq!(out.image.pixel(x, y), [0.0; 3]);
                }
            }
        }
    }

    #[test]
    fn small_rotation_matches_closed_form_ramp() {
        // For a ramp v = a + b x + c y bilinear interpolation is exact, so the
        // warped value equals the ramp evaluated at the inverse-mapped point.
        let (a, b, c) = (0.1, 0.01, 0.015);
        let img = RasterImage::from_fn(40, 30, |x, y| {
            let v = a + b * x as f64 + c * y as f64;
            [v, v * 0.5, 1.0 - v]
        })
        .unwrap();
        let t = SimilarityTransform::new(0.5, 1.0, 1.0, 0.0, 0.0).unwrap();
        let out = warp_image(&img, &t, full(&img));
        let inv = t.invert();
        let mut checked = 0;
        for y in 0..30 {
            for x in 0..40 {
                let (sx, sy) = inv.apply(x as f64, y as f64);
                if !out.validity.get(x, y) {
                    continue;
                }
                let v = a + b * sx + c * sy;
                let px = out.image.pixel(x, y);
                assert!((px[0] - v).abs() < 1e-9);
                assert!((px[1] - v * 0.5).abs() < 1e-9);
                assert!((px[2] - (1.0 - v)).abs() < 1e-9);
                checked += 1;
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn warp_is_linear() {
        let (x, y) = (noise(25, 25, 3), noise(25, 25, 4));
        let (ca, cb) = (0.3, 0.6);
        let mix = RasterImage::from_raw(
            25,
            25,
            x.data().iter().zip(y.data()).map(|(p, q)| ca * p + cb * q).collect(),
        )
        .unwrap();
        let t = SimilarityTransform::new(17.0, 1.3, 0.7, 2.5, -1.5).unwrap();
        let b = full(&x);
        let (wx, wy, wm) = (warp_image(&x, &t, b), warp_image(&y, &t, b), warp_image(&mix, &t, b));
        for i in 0..wm.image.data().len() {
            let expect = ca * wx.image.data()[i] + cb * wy.image.data()[i];
            assert!((wm.image.data()[i] - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn mask_quarter_turn_swaps_sides() {
        let (w, h) = (100, 100);
        let rect = BinaryMask::from_fn(w, h, |x, y| (30..70).contains(&x) && (40..60).contains(&y));
        let (cx, cy) = (49.5, 49.5);
        // Rotation about the rectangle center.
        let t = SimilarityTransform::new(90.0, 1.0, 1.0, cx + cy, cy - cx).unwrap();
        let out = warp_mask(&rect, &t, BoundingBox::new(0, 0, w, h));
        let area = out.count() as f64;
        assert!((area - 800.0).abs() / 800.0 <= 0.02);
        let b = out.pixels().bounding_box().unwrap();
        assert_eq!((b.width, b.height), (20, 40));
        assert!(warp_mask(&BinaryMask::new(w, h), &t, BoundingBox::new(0, 0, w, h)).is_empty());
        assert_eq!(warp_mask(&rect, &SimilarityTransform::identity(), BoundingBox::new(0, 0, w, h)), rect);
    }

    #[test]
    fn warp_points_examples() {
        let p = PixelSet::from_points(vec![(0, 0)]);
        let out = warp_points(&p, &SimilarityTransform::translation(5.0, 5.0));
        assert_eq!(out.points(), &[(5, 5)]);
        let axis = PixelSet::from_points(vec![(3, 0), (0, 2)]);
        let rot = SimilarityTransform::new(90.0, 1.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(warp_points(&axis, &rot), PixelSet::from_points(vec![(0, 3), (-2, 0)]));

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = SimilarityTransform::new(33.0, 1.2, 0.9, 4.0, -7.0).unwrap();
        let pts: Vec<(i32, i32)> =
            (0..200).map(|_| (rng.gen_range(-40..40), rng.gen_range(-40..40))).collect();
        let m = t.matrix();
        let oracle: PixelSet = pts
            .iter()
            .map(|&(x, y)| {
                let v = [x as f64, y as f64, 1.0];
                let r: Vec<f64> = (0..2).map(|i| (0..3).map(|k| m[i][k] * v[k]).sum()).collect();
                (r[0].round() as i32, r[1].round() as i32)
            })
            .collect();
        assert_eq!(warp_points(&PixelSet::from_points(pts), &t), oracle);
    }

    #[test]
    fn origin_offset_matches_full_frame_warp() {
        let img = noise(60, 50, 7);
        let b = BoundingBox::new(10, 12, 30, 25);
        let patch = img.crop(b).unwrap();
        let t = SimilarityTransform::new(12.0, 1.1, 0.95, 3.0, 2.0).unwrap();
        let out_box = BoundingBox::new(5, 5, 40, 40);
        let from_patch = warp_image_from(&patch, (b.x0, b.y0), &t, out_box);
        let from_full = warp_image(&img, &t, out_box);
        for y in 0..40 {
            for x in 0..40 {
                if from_patch.validity.get(x, y) {
                    assert!(from_full.validity.get(x, y));
                    let (p, q) = (from_patch.image.pixel(x, y), from_full.image.pixel(x, y));
                    for c in 0..3 {
                        assert!((p[c] - q[c]).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
