use std::io::Cursor;

use image::{imageops, imageops::FilterType, ImageFormat, Rgb, RgbImage};

use crate::error::{Error, Result};

pub const SEPARATOR_WIDTH: u32 = 10;
pub const SEPARATOR_COLOR: Rgb<u8> = Rgb([255, 0, 0]);

/// New case on the left, retrieved case on the right, a red band between.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeImage {
    pub pixels: RgbImage,
    pub seam_x: u32,
    pub separator_width: u32,
}

impl CompositeImage {
    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        encode_png(&self.pixels)
    }
}

pub fn decode_rgb(bytes: &[u8]) -> Result<RgbImage> {
    let img = image::load_from_memory(bytes)
        .map_err(|e| Error::Precondition(format!("image not decodable: {e}")))?
        .to_rgb8();
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::DegenerateInput("image has zero area".into()));
    }
    Ok(img)
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::Data(format!("PNG encoding failed: {e}")))?;
    Ok(out.into_inner())
}

fn fit_height(img: &RgbImage, height: u32) -> RgbImage {
    if img.height() == height {
        return img.clone();
    }
    let scaled_w = (f64::from(img.width()) * f64::from(height) / f64::from(img.height()))
        .round()
        .max(1.0) as u32;
    imageops::resize(img, scaled_w, height, FilterType::Nearest)
}

/// Places both images side by side at the shorter of the two heights,
/// downscaling the taller one with nearest-neighbor sampling.
pub fn concatenate(new_image: &RgbImage, retrieved: &RgbImage) -> Result<CompositeImage> {
    for (img, which) in [(new_image, "new"), (retrieved, "retrieved")] {
        if img.width() == 0 || img.height() == 0 {
            return Err(Error::DegenerateInput(format!("{which} image has zero area")));
        }
    }
    let height = new_image.height().min(retrieved.height());
    let left = fit_height(new_image, height);
    let right = fit_height(retrieved, height);
    let seam_x = left.width();
    let width = seam_x + SEPARATOR_WIDTH + right.width();

    let mut pixels = RgbImage::from_pixel(width, height, SEPARATOR_COLOR);
    imageops::replace(&mut pixels, &left, 0, 0);
    imageops::replace(&mut pixels, &right, i64::from(seam_x + SEPARATOR_WIDTH), 0);
    Ok(CompositeImage {
        pixels,
        seam_x,
        separator_width: SEPARATOR_WIDTH,
    })
}
