use rand::Rng;

use super::SynthError;
use crate::foa::PATCH_SIZE;
use crate::imaging::PixelSet;

/// Retries before giving up on drawing a usable polygon.
const MAX_ATTEMPTS: usize = 1000;

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull by the monotone chain, counter-clockwise in `(x, y)` axes,
/// with collinear points dropped.
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

pub fn polygon_area(hull: &[(f64, f64)]) -> f64 {
    let n = hull.len();
    (0..n)
        .map(|i| {
            let (a, b) = (hull[i], hull[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<f64>()
        .abs()
        / 2.0
}

/// Point-in-convex-polygon test for a counter-clockwise hull, edges included.
pub fn hull_contains(hull: &[(f64, f64)], p: (f64, f64)) -> bool {
    let n = hull.len();
    n >= 3 && (0..n).all(|i| cross(hull[i], hull[(i + 1) % n], p) >= -1e-9)
}

/// Integer pixels whose centers lie inside the hull.
pub fn rasterize_convex(hull: &[(f64, f64)]) -> PixelSet {
    if hull.len() < 3 {
        return PixelSet::new();
    }
    let ymin = hull.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).ceil() as i32;
    let ymax = hull.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).floor() as i32;
    let xmin = hull.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).ceil() as i32;
    let xmax = hull.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).floor() as i32;
    let mut pts = Vec::new();
    for y in ymin..=ymax {
        for x in xmin..=xmax {
            if hull_contains(hull, (f64::from(x), f64::from(y))) {
                pts.push((x, y));
            }
        }
    }
    PixelSet::from_points(pts)
}

/// A convex region in box-local coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Polygon {
    /// All drawn vertices, including those inside the hull.
    pub vertices: Vec<(f64, f64)>,
    pub hull: Vec<(f64, f64)>,
    pub pixels: PixelSet,
}

/// Rasterized convex hull of `vertex_count` uniform random vertices inside a
/// `box_size`×`box_size` box. Collinear hulls and hulls whose pixel bounding
/// box is smaller than the minimum patch size are redrawn.
pub fn sample_convex_polygon<R: Rng + ?Sized>(
    box_size: usize,
    vertex_count: usize,
    rng: &mut R,
) -> Result<Polygon, SynthError> {
    if box_size < PATCH_SIZE {
        return Err(SynthError::Config(format!("polygon box {box_size} is below {PATCH_SIZE}")));
    }
    let side = (box_size - 1) as f64;
    for _ in 0..MAX_ATTEMPTS {
        let verts: Vec<(f64, f64)> =
            (0..vertex_count).map(|_| (rng.gen_range(0.0..=side), rng.gen_range(0.0..=side))).collect();
        let hull = convex_hull(&verts);
        if hull.len() < 3 || polygon_area(&hull) < 1.0 {
            continue;
        }
        let pixels = rasterize_convex(&hull);
        match pixels.bounding_box() {
            Ok(b) if b.min_side() >= PATCH_SIZE => return Ok(Polygon { vertices: verts, hull, pixels }),
            _ => continue,
        }
    }
    Err(SynthError::Config(format!(
        "could not draw a polygon with a {PATCH_SIZE}-pixel bounding box inside a {box_size} box"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn square_vertices_give_square_hull() {
        let pts = [(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0), (5.0, 5.0), (3.0, 7.0), (5.0, 0.0)];
        let hull = convex_hull(&pts);
        assert_eq!(hull.len(), 4);
        for c in [(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)] {
            assert!(hull.contains(&c));
        }
        assert_eq!(rasterize_convex(&hull).len(), 121);
        assert_eq!(polygon_area(&hull), 100.0);
    }

    #[test]
    fn collinear_points_have_no_area() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 2.0 * i as f64)).collect();
        assert!(convex_hull(&pts).len() < 3);
    }

    // Brute-force membership: a point is in the convex hull of a vertex set
    // iff it is inside some triangle of three vertices.
    fn in_some_triangle(verts: &[(f64, f64)], p: (f64, f64)) -> bool {
        let n = verts.len();
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let (a, b, c) = (verts[i], verts[j], verts[k]);
                    let d1 = cross(a, b, p);
                    let d2 = cross(b, c, p);
                    let d3 = cross(c, a, p);
                    let neg = d1 < -1e-9 || d2 < -1e-9 || d3 < -1e-9;
                    let pos = d1 > 1e-9 || d2 > 1e-9 || d3 > 1e-9;
                    if !(neg && pos) {
                        return true;
                    }
                }
            }
        }
        false
    }

    #[test]
    fn sampled_polygons_match_brute_force_hull() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..1000 {
            let poly = sample_convex_polygon(74, 20, &mut rng).unwrap();
            let b = poly.pixels.bounding_box().unwrap();
            assert!(b.min_side() >= 64 && b.x0 >= 0 && b.x1() <= 74);
            // Spot-check a sparse lattice against the triangle oracle.
            for y in (0..74).step_by(7) {
                for x in (0..74).step_by(7) {
                    let p = (x as f64, y as f64);
                    assert_eq!(poly.pixels.contains(x, y), in_some_triangle(&poly.vertices, p));
                }
            }
        }
    }

    #[test]
    fn undersized_box_is_a_config_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(sample_convex_polygon(63, 20, &mut rng), Err(SynthError::Config(_))));
    }
}
