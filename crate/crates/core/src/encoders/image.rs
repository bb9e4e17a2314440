//! Image decoding (tolerant of truncated files) and encoder input preparation.

use std::io::Cursor;
use std::path::Path;

use image::imageops::FilterType;
use image::{DynamicImage, ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channel-first `3 × height × width` float image.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbTensor {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl RgbTensor {
    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }
}

/// Spatial size and per-channel affine normalization `(x / 255 - mean) / std`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputConvention {
    pub size: u32,
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl InputConvention {
    /// ImageNet statistics used by the torchvision-format CNN weights.
    pub const IMAGENET: InputConvention = InputConvention {
        size: 224,
        mean: [0.485, 0.456, 0.406],
        std: [0.229, 0.224, 0.225],
    };

    /// Plain `[0, 1]` scaling.
    pub const UNIT: InputConvention = InputConvention {
        size: 224,
        mean: [0.0; 3],
        std: [1.0; 3],
    };
}

fn image_err(path: &Path, reason: impl ToString) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

/// Decodes a non-interlaced PNG row by row; rows missing from a truncated file are left black.
fn decode_png_tolerant(bytes: &[u8], path: &Path) -> Result<RgbImage> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| image_err(path, e))?;
    let info = reader.info();
    let (width, height) = (info.width, info.height);
    if info.interlaced {
        return Err(image_err(path, "truncated interlaced PNG"));
    }
    let (color, _) = reader.output_color_type();
    let channels = match color {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(image_err(path, "unexpanded palette")),
    };
    let mut img = RgbImage::new(width, height);
    let mut y = 0u32;
    while y < height {
        match reader.next_row() {
            Ok(Some(row)) => {
                for (x, px) in row.data().chunks(channels).take(width as usize).enumerate() {
                    let rgb = match channels {
                        1 | 2 => [px[0]; 3],
                        _ => [px[0], px[1], px[2]],
                    };
                    img.put_pixel(x as u32, y, image::Rgb(rgb));
                }
                y += 1;
            }
            Ok(None) | Err(_) => break,
        }
    }
    if y == 0 {
        return Err(image_err(path, "no decodable pixel rows"));
    }
    if y < height {
        log::warn!("{}: truncated PNG, padded {} missing rows", path.display(), height - y);
    }
    Ok(img)
}

/// Decodes any supported format to 8-bit RGB. Truncated files are accepted with the missing
/// region padded; files that cannot be decoded at all are an error.
pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = image::guess_format(&bytes).map_err(|e| image_err(path, e))?;
    match image::load_from_memory_with_format(&bytes, format) {
        Ok(img) => Ok(img.to_rgb8()),
        Err(e) if format == ImageFormat::Png => {
            log::debug!("{}: strict PNG decode failed ({e}), retrying row-wise", path.display());
            decode_png_tolerant(&bytes, path)
        }
        Err(e) => Err(image_err(path, e)),
    }
}

/// Resizes to `convention.size` square and normalizes into a channel-first tensor.
/// Grayscale inputs have already been replicated to three channels by [`load_rgb`].
pub fn to_tensor(img: &RgbImage, convention: &InputConvention) -> RgbTensor {
    let size = convention.size;
    let resized = if img.dimensions() == (size, size) {
        img.clone()
    } else {
        DynamicImage::ImageRgb8(img.clone())
            .resize_exact(size, size, FilterType::Triangle)
            .to_rgb8()
    };
    let n = (size * size) as usize;
    let mut data = vec![0f32; 3 * n];
    for (i, px) in resized.pixels().enumerate() {
        for c in 0..3 {
            data[c * n + i] = (px[c] as f32 / 255.0 - convention.mean[c]) / convention.std[c];
        }
    }
    RgbTensor {
        height: size as usize,
        width: size as usize,
        data,
    }
}

pub fn preprocess_image(path: &Path, convention: &InputConvention) -> Result<RgbTensor> {
    Ok(to_tensor(&load_rgb(path)?, convention))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| image::Rgb([(x % 256) as u8, (y % 256) as u8, 128]))
    }

    #[test]
    fn truncated_png_decodes_to_target_size() {
        let dir = tempfile::tempdir().unwrap();
        let full = dir.path().join("full.png");
        gradient(120, 90).save(&full).unwrap();
        let bytes = std::fs::read(&full).unwrap();
        let cut = dir.path().join("cut.png");
        std::fs::write(&cut, &bytes[..bytes.len() * 2 / 3]).unwrap();
        assert!(image::open(&cut).is_err(), "strict decoder should refuse the truncated file");

        let img = load_rgb(&cut).unwrap();
        assert_eq!(img.dimensions(), (120, 90));
        assert_eq!(img.get_pixel(5, 3), gradient(120, 90).get_pixel(5, 3));
        let t = preprocess_image(&cut, &InputConvention::IMAGENET).unwrap();
        assert_eq!((t.height, t.width, t.data.len()), (224, 224, 3 * 224 * 224));
    }

    #[test]
    fn truncated_jpeg_decodes() {
        let dir = tempfile::tempdir().unwrap();
        let full = dir.path().join("full.jpg");
        gradient(320, 240).save(&full).unwrap();
        let bytes = std::fs::read(&full).unwrap();
        let cut = dir.path().join("cut.jpg");
        std::fs::write(&cut, &bytes[..bytes.len() * 2 / 3]).unwrap();
        assert_eq!(load_rgb(&cut).unwrap().dimensions(), (320, 240));
    }

    #[test]
    fn garbage_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("junk.jpg");
        std::fs::write(&p, b"definitely not an image").unwrap();
        assert!(matches!(load_rgb(&p), Err(Error::Image { .. })));
    }

    #[test]
    fn grayscale_is_replicated() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.png");
        image::GrayImage::from_pixel(10, 10, image::Luma([77])).save(&p).unwrap();
        let t = preprocess_image(&p, &InputConvention::UNIT).unwrap();
        for c in 0..3 {
            assert!(t.channel(c).iter().all(|&v| (v - 77.0 / 255.0).abs() < 1e-6));
        }
    }

    #[test]
    fn wide_image_is_resized_exactly() {
        let t = to_tensor(&gradient(1000, 400), &InputConvention::IMAGENET);
        assert_eq!((t.height, t.width), (224, 224));
    }
}
