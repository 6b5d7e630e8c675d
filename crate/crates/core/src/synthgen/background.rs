use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BackgroundSource, SynthError};
use crate::imaging::{load_image, RasterImage};

/// Cell sizes of the value-noise octaves and the exponent tying each
/// octave's amplitude to its cell size.
const OCTAVE_CELLS: [usize; 8] = [1, 2, 4, 8, 16, 32, 64, 128];
const AMPLITUDE_EXPONENT: f64 = 0.5;
const TARGET_STD: f64 = 0.16;

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// One octave of value noise: random lattice values every `cell` pixels,
/// interpolated with a smoothstep profile.
fn value_noise(width: usize, height: usize, cell: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if cell == 1 {
        return (0..width * height).map(|_| rng.gen_range(-1.0..1.0)).collect();
    }
    let (gw, gh) = (width / cell + 2, height / cell + 2);
    let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        let (gy, fy) = (y / cell, smoothstep((y % cell) as f64 / cell as f64));
        for x in 0..width {
            let (gx, fx) = (x / cell, smoothstep((x % cell) as f64 / cell as f64));
            let v00 = lattice[gy * gw + gx];
            let v10 = lattice[gy * gw + gx + 1];
            let v01 = lattice[(gy + 1) * gw + gx];
            let v11 = lattice[(gy + 1) * gw + gx + 1];
            out[y * width + x] =
                (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11);
        }
    }
    out
}

fn multi_octave(width: usize, height: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut field = vec![0.0; width * height];
    for cell in OCTAVE_CELLS {
        let amp = (cell as f64).powf(AMPLITUDE_EXPONENT);
        for (f, v) in field.iter_mut().zip(value_noise(width, height, cell, rng)) {
            *f += amp * v;
        }
    }
    let n = field.len() as f64;
    let mean = field.iter().sum::<f64>() / n;
    let std = (field.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    field.iter().map(|v| (v - mean) / std.max(1e-12)).collect()
}

/// A colored texture with a roughly power-law spectrum plus a smooth
/// illumination gradient, quantized to 8 bits. Identical `index` values give
/// identical textures.
pub fn procedural_texture(width: usize, height: usize, index: u64) -> RasterImage {
    let mut rng = ChaCha8Rng::seed_from_u64(index);
    let luma = multi_octave(width, height, &mut rng);
    let chroma_a = multi_octave(width, height, &mut rng);
    let chroma_b = multi_octave(width, height, &mut rng);
    let base: [f64; 3] = [rng.gen_range(0.3..0.7), rng.gen_range(0.3..0.7), rng.gen_range(0.3..0.7)];
    let tint: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    let contrast = TARGET_STD * rng.gen_range(0.7..1.3);
    let (gx, gy) = (rng.gen_range(-0.15..0.15), rng.gen_range(-0.15..0.15));
    let chroma = 0.25;
    RasterImage::from_fn(width, height, |x, y| {
        let i = y * width + x;
        let g = gx * (x as f64 / width as f64 - 0.5) + gy * (y as f64 / height as f64 - 0.5);
        let mut px = [0.0; 3];
        for c in 0..3 {
            let ch = if c == 1 { chroma_a[i] } else { chroma_b[i] * tint[c] };
            px[c] = base[c] + g + contrast * (luma[i] + chroma * ch);
        }
        px
    })
    .expect("texture size is positive")
    .quantized()
}

/// Supplies backgrounds for the generator. Procedural textures are built on
/// first use and shared afterwards.
pub struct BackgroundPool {
    source: BackgroundSource,
    size: usize,
    files: Vec<PathBuf>,
    cache: Mutex<HashMap<usize, Arc<RasterImage>>>,
}

/// A background ready for use and a text reference to where it came from.
pub struct Background {
    pub image: Arc<RasterImage>,
    pub reference: String,
}

fn is_image_file(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

impl BackgroundPool {
    pub fn new(source: &BackgroundSource, image_size: usize) -> Result<Self, SynthError> {
        let mut files = Vec::new();
        if let BackgroundSource::Directory { path } = source {
            let entries = std::fs::read_dir(path)
                .map_err(|e| SynthError::Io { path: path.clone(), source: e })?;
            for e in entries {
                let p = e.map_err(|e| SynthError::Io { path: path.clone(), source: e })?.path();
                if p.is_file() && is_image_file(&p) {
                    files.push(p);
                }
            }
            files.sort();
            if files.is_empty() {
                return Err(SynthError::Config(format!("no images in {}", path.display())));
            }
        }
        Ok(Self { source: source.clone(), size: image_size, files, cache: Mutex::new(HashMap::new()) })
    }

    /// Draws a background index from `rng` and returns the full image.
    /// Directory images smaller than the frame are skipped.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Background, SynthError> {
        match &self.source {
            BackgroundSource::Procedural { pool_size } => {
                let idx = rng.gen_range(0..*pool_size);
                let image = {
                    let cached = self.cache.lock().expect("cache lock").get(&idx).cloned();
                    match cached {
                        Some(img) => img,
                        None => {
                            let img = Arc::new(procedural_texture(self.size, self.size, idx as u64));
                            self.cache.lock().expect("cache lock").insert(idx, img.clone());
                            img
                        }
                    }
                };
                Ok(Background { image, reference: format!("procedural:{idx}") })
            }
            BackgroundSource::Directory { .. } => {
                // A fixed number of draws keeps the stream consumption bounded.
                for _ in 0..self.files.len().max(1) * 4 {
                    let path = &self.files[rng.gen_range(0..self.files.len())];
                    let img = load_image(path)?;
                    if img.width().min(img.height()) < self.size {
                        log::debug!("skipping small background {}", path.display());
                        continue;
                    }
                    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                    return Ok(Background { image: Arc::new(img), reference: name });
                }
                Err(SynthError::BackgroundTooSmall { needed: self.size })
            }
        }
    }
}
