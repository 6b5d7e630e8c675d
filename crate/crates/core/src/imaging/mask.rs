use image::{GrayImage, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::ImagingError;

/// Axis-aligned box. The origin may be negative when the box describes a
/// region of a transformed frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "[i64; 4]", try_from = "[i64; 4]")]
pub struct BoundingBox {
    pub x0: i32,
    pub y0: i32,
    pub width: usize,
    pub height: usize,
}

impl From<BoundingBox> for [i64; 4] {
    fn from(b: BoundingBox) -> Self {
        [i64::from(b.x0), i64::from(b.y0), b.width as i64, b.height as i64]
    }
}

impl TryFrom<[i64; 4]> for BoundingBox {
    type Error = String;

    fn try_from(v: [i64; 4]) -> Result<Self, Self::Error> {
        let x0 = i32::try_from(v[0]).map_err(|e| e.to_string())?;
        let y0 = i32::try_from(v[1]).map_err(|e| e.to_string())?;
        if v[2] < 1 || v[3] < 1 {
            return Err(format!("box size must be positive, got {}x{}", v[2], v[3]));
        }
        Ok(Self { x0, y0, width: v[2] as usize, height: v[3] as usize })
    }
}

impl BoundingBox {
    pub fn new(x0: i32, y0: i32, width: usize, height: usize) -> Self {
        Self { x0, y0, width, height }
    }

    pub fn x1(&self) -> i32 {
        self.x0 + self.width as i32
    }

    pub fn y1(&self) -> i32 {
        self.y0 + self.height as i32
    }

    pub fn min_side(&self) -> usize {
        self.width.min(self.height)
    }

    /// Continuous center of the pixel centers covered by the box.
    pub fn center(&self) -> (f64, f64) {
        (
            f64::from(self.x0) + (self.width as f64 - 1.0) / 2.0,
            f64::from(self.y0) + (self.height as f64 - 1.0) / 2.0,
        )
    }

    pub fn is_inside(&self, width: usize, height: usize) -> bool {
        self.x0 >= 0
            && self.y0 >= 0
            && self.width >= 1
            && self.height >= 1
            && self.x1() as usize <= width
            && self.y1() as usize <= height
    }

    pub fn contains(&self, x: i32, y: i32) -> bool {
        x >= self.x0 && y >= self.y0 && x < self.x1() && y < self.y1()
    }

    pub fn union(&self, other: &Self) -> Self {
        let x0 = self.x0.min(other.x0);
        let y0 = self.y0.min(other.y0);
        let x1 = self.x1().max(other.x1());
        let y1 = self.y1().max(other.y1());
        Self::new(x0, y0, (x1 - x0) as usize, (y1 - y0) as usize)
    }

    /// Grows the box by `margin` pixels on every side.
    pub fn expanded(&self, margin: usize) -> Self {
        let m = margin as i32;
        Self::new(self.x0 - m, self.y0 - m, self.width + 2 * margin, self.height + 2 * margin)
    }

    /// Smallest box containing all the given continuous points, widened to
    /// whole pixels.
    pub fn enclosing(points: &[(f64, f64)]) -> Option<Self> {
        if points.is_empty() {
            return None;
        }
        let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
        let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(x, y) in points {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        let (ix0, iy0) = (x0.floor() as i32, y0.floor() as i32);
        let (ix1, iy1) = (x1.ceil() as i32, y1.ceil() as i32);
        Some(Self::new(ix0, iy0, (ix1 - ix0 + 1) as usize, (iy1 - iy0 + 1) as usize))
    }

    /// A `size`×`size` crop centered in this box. Offsets are floor-divided.
    pub fn central(&self, size: usize) -> Option<Self> {
        if self.width < size || self.height < size {
            return None;
        }
        Some(Self::new(
            self.x0 + ((self.width - size) / 2) as i32,
            self.y0 + ((self.height - size) / 2) as i32,
            size,
            size,
        ))
    }
}

/// A set of integer pixel coordinates `(x, y)`, kept sorted in raster order
/// (by `y`, then `x`) and free of duplicates.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct PixelSet {
    points: Vec<(i32, i32)>,
}

impl PixelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_points(mut points: Vec<(i32, i32)>) -> Self {
        points.sort_unstable_by_key(|&(x, y)| (y, x));
        points.dedup();
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[(i32, i32)] {
        &self.points
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, i32)> + '_ {
        self.points.iter().copied()
    }

    pub fn contains(&self, x: i32, y: i32) -> bool {
        self.points.binary_search_by_key(&(y, x), |&(px, py)| (py, px)).is_ok()
    }

    /// Tightest axis-aligned box containing every pixel.
    pub fn bounding_box(&self) -> Result<BoundingBox, ImagingError> {
        let first = self.points.first().ok_or(ImagingError::EmptyPixelSet)?;
        let (mut x0, mut x1) = (first.0, first.0);
        let y0 = first.1;
        let y1 = self.points.last().map(|p| p.1).unwrap_or(y0);
        for &(x, _) in &self.points {
            x0 = x0.min(x);
            x1 = x1.max(x);
        }
        Ok(BoundingBox::new(x0, y0, (x1 - x0 + 1) as usize, (y1 - y0 + 1) as usize))
    }

    /// Sum of coordinates, exact in integer arithmetic.
    pub fn coordinate_sums(&self) -> (i64, i64) {
        self.points
            .iter()
            .fold((0i64, 0i64), |(sx, sy), &(x, y)| (sx + i64::from(x), sy + i64::from(y)))
    }

    pub fn centroid(&self) -> Result<(f64, f64), ImagingError> {
        if self.is_empty() {
            return Err(ImagingError::EmptyPixelSet);
        }
        let (sx, sy) = self.coordinate_sums();
        let n = self.len() as f64;
        Ok((sx as f64 / n, sy as f64 / n))
    }

    pub fn intersection_count(&self, other: &Self) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        let key = |p: &(i32, i32)| (p.1, p.0);
        while i < self.points.len() && j < other.points.len() {
            match key(&self.points[i]).cmp(&key(&other.points[j])) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    pub fn translated(&self, dx: i32, dy: i32) -> Self {
        Self { points: self.points.iter().map(|&(x, y)| (x + dx, y + dy)).collect() }
    }
}

impl FromIterator<(i32, i32)> for PixelSet {
    fn from_iter<T: IntoIterator<Item = (i32, i32)>>(iter: T) -> Self {
        Self::from_points(iter.into_iter().collect())
    }
}

/// Per-pixel boolean mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![false; width * height] }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![true; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    /// Rasterizes a pixel set; points outside the frame are dropped.
    pub fn from_pixels(width: usize, height: usize, pixels: &PixelSet) -> Self {
        let mut m = Self::new(width, height);
        for (x, y) in pixels.iter() {
            if x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height {
                m.set(x as usize, y as usize, true);
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Bounds-checked lookup; outside the frame reads as `false`.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.data[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }

    pub fn pixels(&self) -> PixelSet {
        // Raster scan already yields sorted order.
        let points = self
            .data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(|(i, _)| ((i % self.width) as i32, (i / self.width) as i32))
            .collect();
        PixelSet { points }
    }

    fn check_dims(&self, other: &Self) -> Result<(), ImagingError> {
        if self.dimensions() != other.dimensions() {
            return Err(ImagingError::DimensionMismatch {
                expected: self.dimensions(),
                found: other.dimensions(),
            });
        }
        Ok(())
    }

    pub fn union(&self, other: &Self) -> Result<Self, ImagingError> {
        self.check_dims(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| *a || *b).collect();
        Ok(Self { width: self.width, height: self.height, data })
    }

    pub fn intersection(&self, other: &Self) -> Result<Self, ImagingError> {
        self.check_dims(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect();
        Ok(Self { width: self.width, height: self.height, data })
    }

    pub fn difference(&self, other: &Self) -> Result<Self, ImagingError> {
        self.check_dims(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| *a && !*b).collect();
        Ok(Self { width: self.width, height: self.height, data })
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.dimensions() == other.dimensions()
            && self.data.iter().zip(&other.data).all(|(a, b)| !*a || *b)
    }

    /// Intersection over union; two empty masks give 1.
    pub fn iou(&self, other: &Self) -> Result<f64, ImagingError> {
        self.check_dims(other)?;
        let (mut inter, mut uni) = (0usize, 0usize);
        for (a, b) in self.data.iter().zip(&other.data) {
            inter += usize::from(*a && *b);
            uni += usize::from(*a || *b);
        }
        Ok(if uni == 0 { 1.0 } else { inter as f64 / uni as f64 })
    }

    pub fn crop(&self, b: BoundingBox) -> Result<Self, ImagingError> {
        if !b.is_inside(self.width, self.height) {
            return Err(ImagingError::BoxOutOfBounds(b));
        }
        Ok(Self::from_fn(b.width, b.height, |x, y| {
            self.get(x + b.x0 as usize, y + b.y0 as usize)
        }))
    }

    /// 0 for background, 255 for foreground.
    pub fn to_luma8(&self) -> GrayImage {
        let raw = self.data.iter().map(|&v| if v { 255 } else { 0 }).collect();
        GrayImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length matches dimensions")
    }

    /// Foreground is any value of at least 128.
    pub fn from_luma8(img: &GrayImage) -> Self {
        let (w, h) = img.dimensions();
        let data = img.as_raw().iter().map(|&v| v >= 128).collect();
        Self { width: w as usize, height: h as usize, data }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Background,
    Source,
    Target,
}

/// Source/target disambiguation map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    data: Vec<Label>,
}

pub const SOURCE_RGB: [u8; 3] = [0, 255, 0];
pub const TARGET_RGB: [u8; 3] = [255, 0, 0];
pub const BACKGROUND_RGB: [u8; 3] = [0, 0, 255];

impl LabelMap {
    /// Builds a map from disjoint source and target masks.
    pub fn from_masks(source: &BinaryMask, target: &BinaryMask) -> Result<Self, ImagingError> {
        source.check_dims(target)?;
        let mut data = Vec::with_capacity(source.data.len());
        for (&s, &t) in source.data.iter().zip(&target.data) {
            data.push(match (s, t) {
                (true, true) => return Err(ImagingError::OverlappingLabels),
                (true, false) => Label::Source,
                (false, true) => Label::Target,
                (false, false) => Label::Background,
            });
        }
        Ok(Self { width: source.width, height: source.height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> Label {
        self.data[y * self.width + x]
    }

    fn mask_of(&self, label: Label) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&l| l == label).collect(),
        }
    }

    pub fn source_mask(&self) -> BinaryMask {
        self.mask_of(Label::Source)
    }

    pub fn target_mask(&self) -> BinaryMask {
        self.mask_of(Label::Target)
    }

    pub fn localization_mask(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&l| l != Label::Background).collect(),
        }
    }

    /// Checks that the map agrees with a localization mask: source and
    /// target are disjoint by construction, their union must equal `mask`.
    pub fn check_against(&self, mask: &BinaryMask) -> Result<(), ImagingError> {
        if self.localization_mask() != *mask {
            return Err(ImagingError::LabelMaskMismatch);
        }
        Ok(())
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let mut img = RgbImage::new(self.width as u32, self.height as u32);
        for (i, p) in img.pixels_mut().enumerate() {
            *p = Rgb(match self.data[i] {
                Label::Source => SOURCE_RGB,
                Label::Target => TARGET_RGB,
                Label::Background => BACKGROUND_RGB,
            });
        }
        img
    }

    /// Decodes by dominant channel: green is source, red is target, anything
    /// else is background.
    pub fn from_rgb8(img: &RgbImage) -> Self {
        let (w, h) = img.dimensions();
        let data = img
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0;
                if g > r && g > b {
                    Label::Source
                } else if r > g && r > b {
                    Label::Target
                } else {
                    Label::Background
                }
            })
            .collect();
        Self { width: w as usize, height: h as usize, data }
    }
}
