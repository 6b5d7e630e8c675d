use super::{BinaryMask, PixelSet};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub id: usize,
    pub pixels: PixelSet,
    pub area: usize,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// 8-connected components, sorted by area (largest first) with ties broken
/// by the raster position of each component's first pixel. Ids follow the
/// sorted order.
pub fn connected_components(mask: &BinaryMask) -> Vec<Component> {
    let (w, h) = mask.dimensions();
    let mut parent: Vec<usize> = (0..w * h).collect();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let i = y * w + x;
            // Already-visited neighbours: W, NW, N, NE.
            let mut neighbours = [None; 4];
            if x > 0 && mask.get(x - 1, y) {
                neighbours[0] = Some(i - 1);
            }
            if y > 0 {
                if x > 0 && mask.get(x - 1, y - 1) {
                    neighbours[1] = Some(i - w - 1);
                }
                if mask.get(x, y - 1) {
                    neighbours[2] = Some(i - w);
                }
                if x + 1 < w && mask.get(x + 1, y - 1) {
                    neighbours[3] = Some(i - w + 1);
                }
            }
            for n in neighbours.into_iter().flatten() {
                let (a, b) = (find(&mut parent, i), find(&mut parent, n));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }

    let mut groups: Vec<Vec<(i32, i32)>> = Vec::new();
    let mut slot = vec![usize::MAX; w * h];
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let root = find(&mut parent, y * w + x);
            if slot[root] == usize::MAX {
                slot[root] = groups.len();
                groups.push(Vec::new());
            }
            groups[slot[root]].push((x as i32, y as i32));
        }
    }
    // Groups are created in raster order of their first pixel; a stable sort
    // keeps that order among equal areas.
    groups.sort_by_key(|g| std::cmp::Reverse(g.len()));
    groups
        .into_iter()
        .enumerate()
        .map(|(id, pts)| Component { id, area: pts.len(), pixels: PixelSet::from_points(pts) })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn flood_fill_partition(mask: &BinaryMask) -> BTreeSet<Vec<(i32, i32)>> {
        let (w, h) = mask.dimensions();
        let mut seen = vec![false; w * h];
        let mut parts = BTreeSet::new();
        for y in 0..h {
            for x in 0..w {
                if !mask.get(x, y) || seen[y * w + x] {
                    continue;
                }
                let mut stack = vec![(x, y)];
                seen[y * w + x] = true;
                let mut part = Vec::new();
                while let Some((cx, cy)) = stack.pop() {
                    part.push((cx as i32, cy as i32));
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
                            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                                continue;
                            }
                            let (nx, ny) = (nx as usize, ny as usize);
                            if mask.get(nx, ny) && !seen[ny * w + nx] {
                                seen[ny * w + nx] = true;
                                stack.push((nx, ny));
                            }
                        }
                    }
                }
                part.sort_by_key(|&(px, py)| (py, px));
                parts.insert(part);
            }
        }
        parts
    }

    #[test]
    fn two_squares() {
        let m = BinaryMask::from_fn(20, 20, |x, y| {
            (x < 5 && y < 5) || ((10..15).contains(&x) && (10..15).contains(&y))
        });
        let cc = connected_components(&m);
        assert_eq!(cc.len(), 2);
        assert!(cc.iter().all(|c| c.area == 25));
        assert_eq!(cc[0].pixels.points()[0], (0, 0));
    }

    #[test]
    fn empty_mask() {
        assert!(connected_components(&BinaryMask::new(8, 8)).is_empty());
    }

    #[test]
    fn diagonal_touch_is_connected() {
        let mut m = BinaryMask::new(4, 4);
        m.set(0, 0, true);
        m.set(1, 1, true);
        m.set(3, 0, true);
        m.set(2, 1, true);
        let cc = connected_components(&m);
        assert_eq!(cc.len(), 1);
        assert_eq!(cc[0].area, 4);
    }

    #[test]
    fn random_masks_match_flood_fill() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for density in [0.2, 0.4, 0.5, 0.6] {
            let m = BinaryMask::from_fn(64, 64, |_, _| rng.gen_bool(density));
            let cc = connected_components(&m);
            let got: BTreeSet<Vec<(i32, i32)>> =
                cc.iter().map(|c| c.pixels.points().to_vec()).collect();
            assert_eq!(got, flood_fill_partition(&m));
            assert_eq!(cc.iter().map(|c| c.area).sum::<usize>(), m.count());
            assert!(cc.windows(2).all(|p| p[0].area >= p[1].area));
        }
    }
}
