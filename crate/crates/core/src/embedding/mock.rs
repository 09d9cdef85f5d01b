//! Deterministic in-process encoders for tests, demos and offline runs.

use std::io::Cursor;

use image::{imageops::FilterType, ImageFormat, RgbImage};

use super::{MultimodalEncoder, TextEncoder};
use crate::error::{Error, Result};
use crate::eval::tokenize;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Signed feature hashing of lowercase tokens.
///
/// Texts sharing many tokens land close together, which is enough to
/// exercise retrieval and the cosine text metric without a real model.
#[derive(Debug, Clone, Copy)]
pub struct HashingTextEncoder {
    dim: usize,
}

impl HashingTextEncoder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dim must be positive");
        Self { dim }
    }

    pub fn encode(&self, text: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        let tokens = tokenize(text);
        let mut add = |key: &[u8]| {
            let h = fnv1a(key);
            let slot = (h % self.dim as u64) as usize;
            let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
            out[slot] += sign;
        };
        if tokens.is_empty() {
            add(text.as_bytes());
        } else {
            for t in &tokens {
                add(t.as_bytes());
            }
        }
        out
    }
}

impl TextEncoder for HashingTextEncoder {
    fn encode_text(&self, text: &str) -> Result<Vec<f64>> {
        Ok(self.encode(text))
    }
}

/// Signed random projection of an 8×8 RGB thumbnail into `dim` slots.
#[derive(Debug, Clone, Copy)]
pub struct PixelImageEncoder {
    dim: usize,
}

impl PixelImageEncoder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dim must be positive");
        Self { dim }
    }

    pub fn encode(&self, image: &[u8]) -> Result<Vec<f64>> {
        let img = image::load_from_memory(image)
            .map_err(|e| Error::Precondition(format!("image not decodable: {e}")))?
            .to_rgb8();
        let thumb = image::imageops::resize(&img, 8, 8, FilterType::Nearest);
        let mut out = vec![0.0; self.dim];
        for (k, v) in thumb.as_raw().iter().enumerate() {
            let h = fnv1a(&(k as u64).to_le_bytes());
            let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
            out[(h % self.dim as u64) as usize] += sign * (f64::from(*v) / 255.0 - 0.5);
        }
        if out.iter().all(|v| *v == 0.0) {
            out[0] = 1.0;
        }
        Ok(out)
    }
}

/// Image segments from [`PixelImageEncoder`], text segments from [`HashingTextEncoder`].
#[derive(Debug, Clone, Copy)]
pub struct MockMultimodalEncoder {
    image: PixelImageEncoder,
    text: HashingTextEncoder,
}

impl MockMultimodalEncoder {
    pub fn new(dim: usize) -> Self {
        Self {
            image: PixelImageEncoder::new(dim),
            text: HashingTextEncoder::new(dim),
        }
    }
}

impl MultimodalEncoder for MockMultimodalEncoder {
    fn encode_pair(&self, image: &[u8], text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((self.image.encode(image)?, self.text.encode(text)))
    }

    fn encode_image(&self, image: &[u8]) -> Result<Vec<f64>> {
        self.image.encode(image)
    }
}

/// PNG bytes of a solid-color image.
pub fn png_bytes(width: u32, height: u32, rgb: [u8; 3]) -> Vec<u8> {
    encode_png(&RgbImage::from_pixel(width, height, image::Rgb(rgb)))
}

pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .expect("PNG encoding to memory cannot fail");
    out.into_inner()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_hashing_is_stable_and_order_free() {
        let enc = HashingTextEncoder::new(32);
        assert_eq!(enc.encode("a wet road"), enc.encode("A WET ROAD!"));
        assert_eq!(enc.encode("road wet a"), enc.encode("a wet road"));
        assert_ne!(enc.encode("a wet road"), enc.encode("a dry road"));
    }

    #[test]
    fn pixel_encoder_distinguishes_colors() {
        let enc = PixelImageEncoder::new(16);
        let red = enc.encode(&png_bytes(10, 10, [255, 0, 0])).unwrap();
        let blue = enc.encode(&png_bytes(10, 10, [0, 0, 255])).unwrap();
        assert_ne!(red, blue);
        assert_eq!(red, enc.encode(&png_bytes(20, 20, [255, 0, 0])).unwrap());
    }
}
