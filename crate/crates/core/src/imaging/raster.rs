use image::RgbImage;

use super::{BoundingBox, ImagingError};

/// An RGB image with intensities stored as `f64` in `[0, 1]`.
///
/// Samples are interleaved (`r, g, b` per pixel) in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

pub const CHANNELS: usize = 3;

/// Converts an intensity in `[0, 1]` to 8 bits with round-half-up.
#[inline]
pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

#[inline]
pub fn from_u8(v: u8) -> f64 {
    f64::from(v) / 255.0
}

impl RasterImage {
    pub fn new(width: usize, height: usize) -> Result<Self, ImagingError> {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::EmptyImage);
        }
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for _ in 0..width * height {
            data.extend(rgb.iter().map(|v| v.clamp(0.0, 1.0)));
        }
        Ok(Self { width, height, data })
    }

    /// Builds an image from a per-pixel function. Values are clamped to `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::EmptyImage);
        }
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).iter().map(|v| v.clamp(0.0, 1.0)));
            }
        }
        Ok(Self { width, height, data })
    }

    /// Wraps raw interleaved samples. Fails when the length does not match or
    /// any sample lies outside `[0, 1]`.
    pub fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::EmptyImage);
        }
        if data.len() != width * height * CHANNELS {
            return Err(ImagingError::DimensionMismatch {
                expected: (width, height),
                found: (data.len() / CHANNELS, 1),
            });
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(ImagingError::OutOfRange);
        }
        Ok(Self { width, height, data })
    }

    pub fn from_rgb8(img: &RgbImage) -> Result<Self, ImagingError> {
        let (w, h) = img.dimensions();
        if w == 0 || h == 0 {
            return Err(ImagingError::EmptyImage);
        }
        let data = img.as_raw().iter().map(|&v| from_u8(v)).collect();
        Ok(Self { width: w as usize, height: h as usize, data })
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let raw = self.data.iter().map(|&v| to_u8(v)).collect();
        RgbImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length matches dimensions")
    }

    /// Round trip through 8-bit storage.
    pub fn quantized(&self) -> Self {
        let data = self.data.iter().map(|&v| from_u8(to_u8(v))).collect();
        Self { width: self.width, height: self.height, data }
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * CHANNELS + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * CHANNELS + c] = v.clamp(0.0, 1.0);
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * CHANNELS;
        for c in 0..CHANNELS {
            self.data[i + c] = rgb[c].clamp(0.0, 1.0);
        }
    }

    /// Applies `f` to every sample, clamping the result.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        let data = self.data.iter().map(|&v| f(v).clamp(0.0, 1.0)).collect();
        Self { width: self.width, height: self.height, data }
    }

    /// Copies out one channel as a dense plane.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(CHANNELS).copied().collect()
    }

    pub fn set_channel(&mut self, c: usize, plane: &[f64]) {
        assert_eq!(plane.len(), self.width * self.height);
        for (i, &v) in plane.iter().enumerate() {
            self.data[i * CHANNELS + c] = v.clamp(0.0, 1.0);
        }
    }

    /// Crops a box that must lie fully inside the image.
    pub fn crop(&self, b: BoundingBox) -> Result<Self, ImagingError> {
        if !b.is_inside(self.width, self.height) {
            return Err(ImagingError::BoxOutOfBounds(b));
        }
        let (x0, y0) = (b.x0 as usize, b.y0 as usize);
        let mut data = Vec::with_capacity(b.width * b.height * CHANNELS);
        for y in y0..y0 + b.height {
            let start = (y * self.width + x0) * CHANNELS;
            data.extend_from_slice(&self.data[start..start + b.width * CHANNELS]);
        }
        Ok(Self { width: b.width, height: b.height, data })
    }

    /// Mean squared error over all samples.
    pub fn mse(&self, other: &Self) -> Result<f64, ImagingError> {
        if self.dimensions() != other.dimensions() {
            return Err(ImagingError::DimensionMismatch {
                expected: self.dimensions(),
                found: other.dimensions(),
            });
        }
        let sum: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(sum / self.data.len() as f64)
    }

    /// Mean absolute difference over all samples.
    pub fn mean_abs_diff(&self, other: &Self) -> Result<f64, ImagingError> {
        if self.dimensions() != other.dimensions() {
            return Err(ImagingError::DimensionMismatch {
                expected: self.dimensions(),
                found: other.dimensions(),
            });
        }
        let sum: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).sum();
        Ok(sum / self.data.len() as f64)
    }
}
