//! Binary morphology. Pixels outside the frame are neutral: they never
//! remove a pixel during erosion and never add one during dilation.

use super::BinaryMask;

/// Offsets of the 2×2 square structuring element, anchored at its top-left.
const SQUARE2: [(i64, i64); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

fn erode_with(mask: &BinaryMask, se: &[(i64, i64)]) -> BinaryMask {
    let (w, h) = mask.dimensions();
    BinaryMask::from_fn(w, h, |x, y| {
        se.iter().all(|&(dx, dy)| {
            let (xx, yy) = (x as i64 + dx, y as i64 + dy);
            let inside = xx >= 0 && yy >= 0 && (xx as usize) < w && (yy as usize) < h;
            !inside || mask.get(xx as usize, yy as usize)
        })
    })
}

fn dilate_with(mask: &BinaryMask, se: &[(i64, i64)]) -> BinaryMask {
    let (w, h) = mask.dimensions();
    BinaryMask::from_fn(w, h, |x, y| {
        se.iter().any(|&(dx, dy)| mask.get_signed(x as i64 - dx, y as i64 - dy))
    })
}

/// Opening (erosion then dilation) with a 2×2 square. Removes every
/// foreground pixel not covered by some fully-foreground 2×2 block.
pub fn morphological_open(mask: &BinaryMask) -> BinaryMask {
    dilate_with(&erode_with(mask, &SQUARE2), &SQUARE2)
}

/// One step of 3×3 dilation, done separably.
fn dilate3(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = mask.dimensions();
    let horiz = BinaryMask::from_fn(w, h, |x, y| {
        mask.get(x, y) || (x > 0 && mask.get(x - 1, y)) || (x + 1 < w && mask.get(x + 1, y))
    });
    BinaryMask::from_fn(w, h, |x, y| {
        horiz.get(x, y) || (y > 0 && horiz.get(x, y - 1)) || (y + 1 < h && horiz.get(x, y + 1))
    })
}

fn erode3(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = mask.dimensions();
    let horiz = BinaryMask::from_fn(w, h, |x, y| {
        mask.get(x, y) && (x == 0 || mask.get(x - 1, y)) && (x + 1 == w || mask.get(x + 1, y))
    });
    BinaryMask::from_fn(w, h, |x, y| {
        horiz.get(x, y) && (y == 0 || horiz.get(x, y - 1)) && (y + 1 == h || horiz.get(x, y + 1))
    })
}

/// Repeated dilation with a 3×3 square. `iterations = 0` is the identity.
pub fn binary_dilate(mask: &BinaryMask, iterations: usize) -> BinaryMask {
    (0..iterations).fold(mask.clone(), |m, _| dilate3(&m))
}

/// Repeated erosion with a 3×3 square. `iterations = 0` is the identity.
pub fn binary_erode(mask: &BinaryMask, iterations: usize) -> BinaryMask {
    (0..iterations).fold(mask.clone(), |m, _| erode3(&m))
}
