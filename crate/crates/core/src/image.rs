//! RGB float images and PNG import/export.
//!
//! Pixels are stored row-major, three interleaved channels per pixel, as `f64`
//! values nominally in `[0, 1]`. Pixel centers sit at integer + 0.5. Values are
//! clamped to the unit range only when written to disk.

use std::path::Path;

use ::image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

/// Bit depth used when writing PNG files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, color: [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&color);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} RGB image needs {} values, got {}",
                width,
                height,
                width * height * 3,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, c: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&c);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Bilinear lookup with clamp-to-edge addressing, in pixel coordinates.
    pub fn sample(&self, x: f64, y: f64) -> [f64; 3] {
        crate::geometry::bilinear_sample(self, x, y)
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let img = ::image::open(path.as_ref())?;
        Ok(Self::from_dynamic(img))
    }

    pub fn from_dynamic(img: DynamicImage) -> Self {
        let (width, height) = (img.width() as usize, img.height() as usize);
        let data: Vec<f64> = match img {
            DynamicImage::ImageLuma8(_)
            | DynamicImage::ImageLumaA8(_)
            | DynamicImage::ImageRgb8(_)
            | DynamicImage::ImageRgba8(_) => img
                .into_rgb8()
                .into_raw()
                .into_iter()
                .map(|v| v as f64 / 255.0)
                .collect(),
            _ => img
                .into_rgb16()
                .into_raw()
                .into_iter()
                .map(|v| v as f64 / 65535.0)
                .collect(),
        };
        Self {
            width,
            height,
            data,
        }
    }

    pub fn save_png(&self, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
        let (w, h) = (self.width as u32, self.height as u32);
        match depth {
            BitDepth::Eight => {
                let raw: Vec<u8> = self.data.iter().map(|&v| quantize(v, 255.0) as u8).collect();
                let buf: ImageBuffer<Rgb<u8>, _> = ImageBuffer::from_raw(w, h, raw)
                    .ok_or_else(|| Error::ShapeMismatch("image buffer".into()))?;
                buf.save(path.as_ref())?;
            }
            BitDepth::Sixteen => {
                let raw: Vec<u16> = self
                    .data
                    .iter()
                    .map(|&v| quantize(v, 65535.0) as u16)
                    .collect();
                let buf: ImageBuffer<Rgb<u16>, _> = ImageBuffer::from_raw(w, h, raw)
                    .ok_or_else(|| Error::ShapeMismatch("image buffer".into()))?;
                buf.save(path.as_ref())?;
            }
        }
        Ok(())
    }
}

fn quantize(v: f64, max: f64) -> f64 {
    if v.is_nan() {
        return 0.0;
    }
    (v.clamp(0.0, 1.0) * max).round()
}

/// Writes a single-channel mask as 8-bit grayscale (255 = 1.0).
pub fn save_mask_png(path: impl AsRef<Path>, width: usize, height: usize, mask: &[f64]) -> Result<()> {
    if mask.len() != width * height {
        return Err(Error::ShapeMismatch("mask size".into()));
    }
    let raw: Vec<u8> = mask.iter().map(|&v| quantize(v, 255.0) as u8).collect();
    let buf: ImageBuffer<Luma<u8>, _> = ImageBuffer::from_raw(width as u32, height as u32, raw)
        .ok_or_else(|| Error::ShapeMismatch("mask buffer".into()))?;
    buf.save(path.as_ref())?;
    Ok(())
}

/// Reads a grayscale mask; any color PNG is reduced to its first channel.
pub fn load_mask_png(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f64>)> {
    let img = ::image::open(path.as_ref())?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
        other => other
            .into_luma8()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 255.0)
            .collect(),
    };
    Ok((w, h, data))
}
