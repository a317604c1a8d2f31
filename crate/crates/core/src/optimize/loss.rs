//! Compound image loss: pixel term, feature (perceptual) term and latent
//! regularizer, with analytic gradients.

use serde::{Deserialize, Serialize};

use super::features::{features, features_vjp};
use crate::{Error, Image, Result};

/// Smoothing of the regularizer norm at the origin.
pub const REG_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelNorm {
    SquaredL2,
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegNorm {
    L2,
    SquaredL2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub l1: f64,
    pub perc: f64,
    pub reg: f64,
    /// Norm of the pixel and feature terms.
    pub pixel_norm: PixelNorm,
    pub reg_norm: RegNorm,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            l1: 1.0,
            perc: 0.1,
            reg: 0.05,
            pixel_norm: PixelNorm::SquaredL2,
            reg_norm: RegNorm::L2,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.l1, self.perc, self.reg];
        if !w.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::InvalidArgument(format!("loss weights must be finite and non-negative, got {w:?}")));
        }
        if w.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidArgument("at least one loss weight must be positive".into()));
        }
        Ok(())
    }
}

/// Weighted contributions; `total` is their sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub l1: f64,
    pub perc: f64,
    pub reg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub terms: LossTerms,
    /// Gradient with respect to the rendered image data.
    pub grad_image: Vec<f64>,
    /// Gradient of the regularizer with respect to the latent.
    pub grad_latent: Vec<f64>,
}

fn norm_value(norm: PixelNorm, v: &[f64]) -> (f64, Vec<f64>) {
    match norm {
        PixelNorm::SquaredL2 => (v.iter().map(|x| x * x).sum(), v.iter().map(|x| 2.0 * x).collect()),
        PixelNorm::L1 => (v.iter().map(|x| x.abs()).sum(), v.iter().map(|&x| sign(x)).collect()),
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Evaluates the loss of `rendered` against `target` over foreground pixels
/// (`mask ≥ 0.5`), normalized by the foreground pixel count.
pub fn total_loss(
    rendered: &Image,
    mask: &[f64],
    target: &Image,
    latent: &[f64],
    latent_init: &[f64],
    weights: &LossWeights,
) -> Result<LossEval> {
    let (w, h) = (rendered.width, rendered.height);
    if (target.width, target.height) != (w, h) || mask.len() != w * h {
        return Err(Error::ShapeMismatch(format!(
            "rendered {}x{}, target {}x{}, mask of {} pixels",
            w,
            h,
            target.width,
            target.height,
            mask.len()
        )));
    }
    if latent.len() != latent_init.len() {
        return Err(Error::ShapeMismatch(format!(
            "latent has {} entries, reference has {}",
            latent.len(),
            latent_init.len()
        )));
    }
    let fg: Vec<bool> = mask.iter().map(|&m| m >= 0.5).collect();
    let count = fg.iter().filter(|&&f| f).count();
    if count == 0 {
        return Err(Error::InvalidArgument("empty foreground mask".into()));
    }
    let n = count as f64;
    let diff: Vec<f64> = (0..w * h * 3)
        .map(|i| if fg[i / 3] { rendered.data[i] - target.data[i] } else { 0.0 })
        .collect();

    let mut grad_image = vec![0.0; w * h * 3];
    let mut terms = LossTerms::default();
    if weights.l1 > 0.0 {
        let (v, g) = norm_value(weights.pixel_norm, &diff);
        terms.l1 = weights.l1 * v / n;
        grad_image.iter_mut().zip(&g).for_each(|(a, b)| *a += weights.l1 * b / n);
    }
    if weights.perc > 0.0 {
        let f = features(&Image::from_data(w, h, diff)?);
        let (v, g) = norm_value(weights.pixel_norm, &f);
        terms.perc = weights.perc * v / n;
        let back = features_vjp(w, h, &g)?;
        for (i, (a, b)) in grad_image.iter_mut().zip(&back.data).enumerate() {
            if fg[i / 3] {
                *a += weights.perc * b / n;
            }
        }
    }
    let delta: Vec<f64> = latent.iter().zip(latent_init).map(|(a, b)| a - b).collect();
    let sq: f64 = delta.iter().map(|d| d * d).sum();
    let grad_latent = match weights.reg_norm {
        RegNorm::L2 => {
            let r = (sq + REG_EPS * REG_EPS).sqrt();
            terms.reg = weights.reg * r;
            delta.iter().map(|d| weights.reg * d / r).collect()
        }
        RegNorm::SquaredL2 => {
            terms.reg = weights.reg * sq;
            delta.iter().map(|d| 2.0 * weights.reg * d).collect()
        }
    };
    terms.total = terms.l1 + terms.perc + terms.reg;
    Ok(LossEval {
        terms,
        grad_image,
        grad_latent,
    })
}
