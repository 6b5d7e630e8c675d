use std::fs::File;
use std::io::{BufWriter, Cursor};
use std::path::Path;

use image::codecs::jpeg::JpegEncoder;
use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder, ImageFormat, ImageReader};
use serde::{Deserialize, Serialize};

use super::{BinaryMask, ImagingError, LabelMap, RasterImage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "codec", rename_all = "snake_case")]
pub enum Codec {
    Lossless,
    Jpeg { quality: u8 },
}

impl Codec {
    pub fn validate(&self) -> Result<(), ImagingError> {
        match *self {
            Codec::Jpeg { quality } if !(1..=100).contains(&quality) => {
                Err(ImagingError::InvalidParameter(format!("jpeg quality {quality} not in 1..=100")))
            }
            _ => Ok(()),
        }
    }
}

fn decode(bytes: &[u8]) -> Result<image::DynamicImage, ImagingError> {
    if bytes.is_empty() {
        return Err(ImagingError::Decode("empty input".into()));
    }
    ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| ImagingError::Decode(e.to_string()))?
        .decode()
        .map_err(|e| ImagingError::Decode(e.to_string()))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, ImagingError> {
    std::fs::read(path).map_err(|e| ImagingError::Io { path: path.to_path_buf(), source: e })
}

pub fn load_image(path: &Path) -> Result<RasterImage, ImagingError> {
    let img = decode(&read_bytes(path)?)?;
    RasterImage::from_rgb8(&img.to_rgb8())
}

pub fn save_image(img: &RasterImage, path: &Path, codec: Codec) -> Result<(), ImagingError> {
    codec.validate()?;
    let bytes = encode(img, codec)?;
    std::fs::write(path, bytes).map_err(|e| ImagingError::Io { path: path.to_path_buf(), source: e })
}

/// Encodes an image to bytes in memory.
pub fn encode(img: &RasterImage, codec: Codec) -> Result<Vec<u8>, ImagingError> {
    codec.validate()?;
    let rgb = img.to_rgb8();
    let mut out = Vec::new();
    let (w, h) = rgb.dimensions();
    let res = match codec {
        Codec::Lossless => {
            PngEncoder::new(&mut out).write_image(rgb.as_raw(), w, h, ExtendedColorType::Rgb8)
        }
        Codec::Jpeg { quality } => JpegEncoder::new_with_quality(&mut out, quality)
            .write_image(rgb.as_raw(), w, h, ExtendedColorType::Rgb8),
    };
    res.map_err(|e| ImagingError::Encode(e.to_string()))?;
    Ok(out)
}

/// JPEG compression followed by decompression, in memory.
pub fn jpeg_round_trip(img: &RasterImage, quality: u8) -> Result<RasterImage, ImagingError> {
    let bytes = encode(img, Codec::Jpeg { quality })?;
    let decoded = image::load_from_memory_with_format(&bytes, ImageFormat::Jpeg)
        .map_err(|e| ImagingError::Decode(e.to_string()))?;
    RasterImage::from_rgb8(&decoded.to_rgb8())
}

fn create(path: &Path) -> Result<BufWriter<File>, ImagingError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| ImagingError::Io { path: path.to_path_buf(), source: e })
}

pub fn save_mask(mask: &BinaryMask, path: &Path) -> Result<(), ImagingError> {
    let luma = mask.to_luma8();
    let (w, h) = luma.dimensions();
    PngEncoder::new(create(path)?)
        .write_image(luma.as_raw(), w, h, ExtendedColorType::L8)
        .map_err(|e| ImagingError::Encode(e.to_string()))
}

pub fn load_mask(path: &Path) -> Result<BinaryMask, ImagingError> {
    let img = decode(&read_bytes(path)?)?;
    Ok(BinaryMask::from_luma8(&img.to_luma8()))
}

pub fn save_label_map(map: &LabelMap, path: &Path) -> Result<(), ImagingError> {
    let rgb = map.to_rgb8();
    let (w, h) = rgb.dimensions();
    PngEncoder::new(create(path)?)
        .write_image(rgb.as_raw(), w, h, ExtendedColorType::Rgb8)
        .map_err(|e| ImagingError::Encode(e.to_string()))
}

pub fn load_label_map(path: &Path) -> Result<LabelMap, ImagingError> {
    let img = decode(&read_bytes(path)?)?;
    Ok(LabelMap::from_rgb8(&img.to_rgb8()))
}
