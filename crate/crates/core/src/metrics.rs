//! PSNR and SSIM for unit-range RGB data.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{par, Error, Image, Result, TextureMap};

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// PSNR in dB over pixels with `mask ≥ 0.5` (all pixels when `None`), with a
/// peak value of 1. Returns `+inf` for identical inputs, and the number of
/// pixels evaluated.
pub fn psnr_values(a: &[f64], b: &[f64], mask: Option<&[f64]>) -> Result<(f64, usize)> {
    if a.len() != b.len() || !a.len().is_multiple_of(3) {
        return Err(Error::ShapeMismatch(format!("inputs have {} and {} values", a.len(), b.len())));
    }
    let pixels = a.len() / 3;
    if let Some(m) = mask {
        if m.len() != pixels {
            return Err(Error::ShapeMismatch(format!("mask has {} entries for {pixels} pixels", m.len())));
        }
    }
    let inside = |p: usize| mask.is_none_or(|m| m[p] >= 0.5);
    let count = (0..pixels).filter(|&p| inside(p)).count();
    if count == 0 {
        return Err(Error::InvalidArgument("PSNR mask selects no pixels".into()));
    }
    let se = par::sum(pixels, |p| {
        if inside(p) {
            (0..3).map(|c| (a[3 * p + c] - b[3 * p + c]).powi(2)).sum()
        } else {
            0.0
        }
    });
    let mse = se / (3 * count) as f64;
    let db = if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() };
    Ok((db, count))
}

pub fn psnr(a: &Image, b: &Image, mask: Option<&[f64]>) -> Result<f64> {
    check_dims((a.width, a.height), (b.width, b.height))?;
    Ok(psnr_values(&a.data, &b.data, mask)?.0)
}

pub fn psnr_texture(a: &TextureMap, b: &TextureMap, mask: Option<&[f64]>) -> Result<f64> {
    a.check_same_side(b)?;
    Ok(psnr_values(&a.data, &b.data, mask)?.0)
}

fn check_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(format!("{}x{} vs {}x{}", a.0, a.1, b.0, b.1)));
    }
    Ok(())
}

fn window() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

// Separable "valid" filtering: output is (w − 10) × (h − 10).
fn filter_valid(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    let k = window();
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let rows: Vec<f64> = par::map(h * ow, |i| {
        let (y, x) = (i / ow, i % ow);
        k.iter().enumerate().map(|(j, kv)| kv * src[y * w + x + j]).sum()
    });
    par::map(oh * ow, |i| {
        let (y, x) = (i / ow, i % ow);
        k.iter().enumerate().map(|(j, kv)| kv * rows[(y + j) * ow + x]).sum()
    })
}

/// Mean local SSIM (11×11 Gaussian window, σ = 1.5, unit dynamic range)
/// per channel, averaged over channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_dims((a.width, a.height), (b.width, b.height))?;
    let (w, h) = (a.width, a.height);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "SSIM needs both sides at least {SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let (c1, c2) = (K1 * K1, K2 * K2);
    let mut total = 0.0;
    for c in 0..3 {
        let x: Vec<f64> = a.data.iter().skip(c).step_by(3).copied().collect();
        let y: Vec<f64> = b.data.iter().skip(c).step_by(3).copied().collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let (mx, my) = (filter_valid(&x, w, h), filter_valid(&y, w, h));
        let (sxx, syy, sxy) = (filter_valid(&xx, w, h), filter_valid(&yy, w, h), filter_valid(&xy, w, h));
        let n = mx.len();
        let sum = par::sum(n, |i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        });
        total += sum / n as f64;
    }
    Ok(total / 3.0)
}

pub fn ssim_texture(a: &TextureMap, b: &TextureMap) -> Result<f64> {
    a.check_same_side(b)?;
    ssim(&a.to_image(), &b.to_image())
}

fn ser_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_db<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Db {
        Num(f64),
        Text(String),
    }
    match Db::deserialize(d)? {
        Db::Num(v) => Ok(v),
        Db::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Db::Text(t) => Err(serde::de::Error::custom(format!("invalid PSNR value `{t}`"))),
    }
}

/// One evaluated comparison. PSNR `+inf` is serialized as the string `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub label: String,
    #[serde(serialize_with = "ser_db", deserialize_with = "de_db")]
    pub psnr: f64,
    /// Absent when the inputs are too small for the SSIM window.
    pub ssim: Option<f64>,
    /// Pixels PSNR was evaluated over.
    pub pixels: usize,
    /// Which pixels PSNR used, e.g. `"all"` or `"visible texels"`. SSIM
    /// always uses the full grid.
    pub mask: String,
}

impl MetricReport {
    /// Compares two flat RGB buffers of a `width`×`height` grid.
    pub fn compare(
        label: &str,
        width: usize,
        height: usize,
        a: &[f64],
        b: &[f64],
        mask: Option<(&str, &[f64])>,
    ) -> Result<Self> {
        let (psnr, pixels) = psnr_values(a, b, mask.map(|m| m.1))?;
        let ia = Image::from_data(width, height, a.to_vec())?;
        let ib = Image::from_data(width, height, b.to_vec())?;
        let ssim = if width >= SSIM_WINDOW && height >= SSIM_WINDOW {
            Some(ssim(&ia, &ib)?)
        } else {
            None
        };
        Ok(Self {
            label: label.to_string(),
            psnr,
            ssim,
            pixels,
            mask: mask.map_or("all".to_string(), |m| m.0.to_string()),
        })
    }

    pub fn summary(&self) -> String {
        let psnr = if self.psnr.is_infinite() {
            "+inf".to_string()
        } else {
            format!("{:.2}", self.psnr)
        };
        let ssim = self.ssim.map_or("n/a".to_string(), |s| format!("{s:.4}"));
        format!(
            "{}: PSNR {psnr} dB, SSIM {ssim} ({} pixels, mask: {})",
            self.label, self.pixels, self.mask
        )
    }
}
