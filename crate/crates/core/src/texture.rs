//! Square RGB texture maps with a per-texel validity mask.
//!
//! Texel `(i, j)` (column, row) has its center at UV `((i + 0.5)/S, (j + 0.5)/S)`:
//! texture rows follow the `v` coordinate directly, with no vertical flip.

use std::path::{Path, PathBuf};

use crate::image::{load_mask_png, save_mask_png, BitDepth};
use crate::{Error, Image, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TextureMap {
    pub side: usize,
    /// Row-major interleaved RGB, `side * side * 3` values.
    pub data: Vec<f64>,
    /// Per-texel validity in `[0, 1]`; 1 means observed.
    pub mask: Vec<f64>,
}

/// Texels whose centers fall inside some triangle's UV footprint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChartMask {
    pub side: usize,
    pub covered: Vec<bool>,
}

impl ChartMask {
    pub fn full(side: usize) -> Self {
        Self {
            side,
            covered: vec![true; side * side],
        }
    }

    pub fn count(&self) -> usize {
        self.covered.iter().filter(|&&c| c).count()
    }

    pub fn as_weights(&self) -> Vec<f64> {
        self.covered.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect()
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        save_mask_png(path, self.side, self.side, &self.as_weights())
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let (w, h, m) = load_mask_png(path)?;
        if w != h {
            return Err(Error::ShapeMismatch(format!("chart mask is {w}x{h}, expected square")));
        }
        Ok(Self {
            side: w,
            covered: m.into_iter().map(|v| v >= 0.5).collect(),
        })
    }
}

impl TextureMap {
    pub fn new(side: usize) -> Self {
        Self {
            side,
            data: vec![0.0; side * side * 3],
            mask: vec![0.0; side * side],
        }
    }

    pub fn filled(side: usize, color: [f64; 3]) -> Self {
        let img = Image::filled(side, side, color);
        Self {
            side,
            data: img.data,
            mask: vec![1.0; side * side],
        }
    }

    pub fn from_parts(side: usize, data: Vec<f64>, mask: Vec<f64>) -> Result<Self> {
        if data.len() != side * side * 3 || mask.len() != side * side {
            return Err(Error::ShapeMismatch(format!(
                "texture of side {side} needs {} values and {} mask entries, got {} and {}",
                side * side * 3,
                side * side,
                data.len(),
                mask.len()
            )));
        }
        Ok(Self { side, data, mask })
    }

    pub fn texel_count(&self) -> usize {
        self.side * self.side
    }

    #[inline]
    pub fn is_valid(&self, i: usize) -> bool {
        self.mask[i] >= 0.5
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m >= 0.5).count()
    }

    #[inline]
    pub fn texel(&self, i: usize) -> [f64; 3] {
        [self.data[3 * i], self.data[3 * i + 1], self.data[3 * i + 2]]
    }

    #[inline]
    pub fn set_texel(&mut self, i: usize, c: [f64; 3]) {
        self.data[3 * i..3 * i + 3].copy_from_slice(&c);
    }

    pub fn check_same_side(&self, other: &TextureMap) -> Result<()> {
        if self.side != other.side {
            return Err(Error::ShapeMismatch(format!(
                "texture sides differ: {} vs {}",
                self.side, other.side
            )));
        }
        Ok(())
    }

    pub fn to_image(&self) -> Image {
        Image {
            width: self.side,
            height: self.side,
            data: self.data.clone(),
        }
    }

    /// Wraps a square image as a texture with the given mask.
    pub fn from_image(image: Image, mask: Vec<f64>) -> Result<Self> {
        if image.width != image.height {
            return Err(Error::ShapeMismatch(format!(
                "texture image must be square, got {}x{}",
                image.width, image.height
            )));
        }
        Self::from_parts(image.width, image.data, mask)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Path of the mask companion file: `name.png` → `name.mask.png`.
    pub fn mask_path(rgb_path: &Path) -> PathBuf {
        let stem = rgb_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        rgb_path.with_file_name(format!("{stem}.mask.png"))
    }

    /// Writes `<name>.png` (16-bit RGB, clamped to `[0, 1]`) and
    /// `<name>.mask.png` (8-bit gray, 255 = valid).
    pub fn save(&self, rgb_path: impl AsRef<Path>) -> Result<()> {
        let rgb_path = rgb_path.as_ref();
        self.to_image().save_png(rgb_path, BitDepth::Sixteen)?;
        save_mask_png(Self::mask_path(rgb_path), self.side, self.side, &self.mask)
    }

    /// Reads a texture pair; a missing mask file means fully valid.
    pub fn load(rgb_path: impl AsRef<Path>) -> Result<Self> {
        let rgb_path = rgb_path.as_ref();
        let img = Image::load_png(rgb_path)?;
        let mpath = Self::mask_path(rgb_path);
        let mask = if mpath.exists() {
            let (w, h, m) = load_mask_png(&mpath)?;
            if (w, h) != (img.width, img.height) {
                return Err(Error::ShapeMismatch(format!(
                    "mask {}x{} does not match texture {}x{}",
                    w, h, img.width, img.height
                )));
            }
            m
        } else {
            vec![1.0; img.width * img.height]
        };
        Self::from_image(img, mask)
    }
}
