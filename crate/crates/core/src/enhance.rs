//! Diffusion schedule and SDEdit-style repainting in texel space with a
//! pluggable denoiser.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::external::{self, ExternalCommand};
use crate::generator::GeneratorModel;
use crate::optimize::LatentSpace;
use crate::{par, Error, Image, Result, TextureMap};

/// Linear variance schedule with cumulative products.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    /// `betas[t - 1]` is β_t for `t in 1..=T`.
    pub betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

pub fn make_schedule(steps: usize, beta_min: f64, beta_max: f64) -> Result<DiffusionSchedule> {
    if steps == 0 {
        return Err(Error::InvalidArgument("diffusion needs at least one step".into()));
    }
    if !(0.0 < beta_min && beta_min <= beta_max && beta_max < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < beta_min <= beta_max < 1, got {beta_min} and {beta_max}"
        )));
    }
    let betas: Vec<f64> = (0..steps)
        .map(|i| {
            if steps == 1 {
                beta_min
            } else {
                beta_min + (beta_max - beta_min) * i as f64 / (steps - 1) as f64
            }
        })
        .collect();
    let mut alpha_bars = Vec::with_capacity(steps);
    let mut acc = 1.0;
    for (i, b) in betas.iter().enumerate() {
        let next = acc * (1.0 - b);
        // Rounding or underflow would break strict monotonicity.
        if !(next < acc && next >= f64::MIN_POSITIVE) {
            return Err(Error::InvalidArgument(format!(
                "cumulative product is not representable at step {} (beta {b})",
                i + 1
            )));
        }
        acc = next;
        alpha_bars.push(acc);
    }
    Ok(DiffusionSchedule { betas, alpha_bars })
}

impl DiffusionSchedule {
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// ᾱ_t, with ᾱ_0 = 1.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    /// Start step for a given strength: `round(strength · T)`, at least 1.
    pub fn start_step(&self, strength: f64) -> usize {
        ((strength * self.steps() as f64).round() as usize).clamp(1, self.steps())
    }
}

/// `x_t = √ᾱ_t · x0 + √(1 − ᾱ_t) · ε`.
pub fn forward_diffuse(x0: &[f64], t: usize, eps: &[f64], schedule: &DiffusionSchedule) -> Result<Vec<f64>> {
    if t == 0 || t > schedule.steps() {
        return Err(Error::InvalidArgument(format!("step {t} outside 1..={}", schedule.steps())));
    }
    if eps.len() != x0.len() {
        return Err(Error::ShapeMismatch(format!("noise has {} values, input {}", eps.len(), x0.len())));
    }
    let ab = schedule.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect())
}

/// One deterministic reverse step from `x_t` given the clean estimate.
pub fn ddim_step(x_t: &[f64], x0_hat: &[f64], t: usize, schedule: &DiffusionSchedule) -> Vec<f64> {
    let (ab, ab_prev) = (schedule.alpha_bar(t), schedule.alpha_bar(t - 1));
    let (c, d) = (ab.sqrt(), (1.0 - ab).sqrt());
    let (a, b) = (ab_prev.sqrt(), (1.0 - ab_prev).sqrt());
    x_t.iter()
        .zip(x0_hat)
        .map(|(x, x0)| {
            let eps = (x - c * x0) / d;
            a * x0 + b * eps
        })
        .collect()
}

/// Predicts the clean texture from a noisy one at step `t`.
pub trait Denoiser {
    fn denoise(&self, x_t: &[f64], t: usize, schedule: &DiffusionSchedule) -> Result<Vec<f64>>;
}

/// `x̂0 = μ + P(x_t / √ᾱ_t − μ)` with `P` the projection onto the generator
/// basis.
pub struct ProjectionDenoiser<'a> {
    pub model: &'a GeneratorModel,
}

impl Denoiser for ProjectionDenoiser<'_> {
    fn denoise(&self, x_t: &[f64], t: usize, schedule: &DiffusionSchedule) -> Result<Vec<f64>> {
        if x_t.len() != self.model.dim() {
            return Err(Error::ShapeMismatch(format!(
                "noisy texture has {} values, model expects {}",
                x_t.len(),
                self.model.dim()
            )));
        }
        let s = 1.0 / schedule.alpha_bar(t).sqrt();
        let scaled: Vec<f64> = x_t.iter().map(|x| x * s).collect();
        Ok(self.model.project(&scaled))
    }
}

/// Denoiser backed by an external process; `{t}` expands to the step.
pub struct ExternalDenoiser<'a> {
    pub command: &'a ExternalCommand,
    pub side: usize,
    pub mask: &'a [f64],
}

impl Denoiser for ExternalDenoiser<'_> {
    fn denoise(&self, x_t: &[f64], t: usize, _schedule: &DiffusionSchedule) -> Result<Vec<f64>> {
        let image = Image::from_data(self.side, self.side, x_t.to_vec())?;
        let out = external::run(self.command, &format!("denoiser at step {t}"), &image, self.mask, Some(t))?;
        Ok(out.data)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DenoiserSpec {
    Projection,
    External(ExternalCommand),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnhanceOptions {
    pub strength: f64,
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    /// Use zero noise instead of seeded Gaussian noise.
    pub deterministic_noise: bool,
    /// Stochastic ancestral sampling instead of deterministic reverse steps.
    pub ancestral: bool,
    pub seed: u64,
    pub denoiser: DenoiserSpec,
    /// Adds `gamma · highpass(T_init)` on visible texels after repainting.
    /// Not part of the repainting itself; off by default.
    pub detail_transfer: bool,
    pub detail_gamma: f64,
}

impl Default for EnhanceOptions {
    fn default() -> Self {
        Self {
            strength: 0.3,
            steps: 1000,
            beta_min: 1e-4,
            beta_max: 0.02,
            deterministic_noise: false,
            ancestral: false,
            seed: 0,
            denoiser: DenoiserSpec::Projection,
            detail_transfer: false,
            detail_gamma: 0.5,
        }
    }
}

impl EnhanceOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.strength > 0.0 && self.strength <= 1.0) {
            return Err(Error::InvalidArgument(format!("strength must lie in (0, 1], got {}", self.strength)));
        }
        if !self.detail_gamma.is_finite() {
            return Err(Error::InvalidArgument("detail gamma must be finite".into()));
        }
        if let DenoiserSpec::External(cmd) = &self.denoiser {
            cmd.validate()?;
        }
        make_schedule(self.steps, self.beta_min, self.beta_max).map(|_| ())
    }

    pub fn schedule(&self) -> Result<DiffusionSchedule> {
        make_schedule(self.steps, self.beta_min, self.beta_max)
    }
}

fn gaussian_noise(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Partially re-noises `texture` to step `round(strength · T)` and runs the
/// reverse process back to step 0. The validity mask is kept.
pub fn sdedit(texture: &TextureMap, opts: &EnhanceOptions, denoiser: &dyn Denoiser) -> Result<TextureMap> {
    opts.validate()?;
    let schedule = opts.schedule()?;
    let t_star = schedule.start_step(opts.strength);
    let n = texture.data.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let eps = if opts.deterministic_noise {
        vec![0.0; n]
    } else {
        gaussian_noise(n, &mut rng)
    };
    let mut x = forward_diffuse(&texture.data, t_star, &eps, &schedule)?;
    for t in (1..=t_star).rev() {
        let x0 = denoiser.denoise(&x, t, &schedule)?;
        if x0.len() != n {
            return Err(Error::Denoiser {
                step: t,
                message: format!("returned {} values, expected {n}", x0.len()),
            });
        }
        if let Some(i) = x0.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step: t,
                what: format!("denoiser output at value {i}"),
            });
        }
        x = if opts.ancestral {
            ancestral_step(&x, &x0, t, &schedule, &mut rng)
        } else {
            ddim_step(&x, &x0, t, &schedule)
        };
    }
    TextureMap::from_parts(texture.side, x, texture.mask.clone())
}

// Reverse step with the posterior variance of the forward process.
fn ancestral_step(x_t: &[f64], x0_hat: &[f64], t: usize, schedule: &DiffusionSchedule, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (ab, ab_prev) = (schedule.alpha_bar(t), schedule.alpha_bar(t - 1));
    let var = schedule.betas[t - 1] * (1.0 - ab_prev) / (1.0 - ab);
    let (c, d) = (ab.sqrt(), (1.0 - ab).sqrt());
    let dir = (1.0 - ab_prev - var).max(0.0).sqrt();
    let sd = var.sqrt();
    let z = gaussian_noise(x_t.len(), rng);
    x_t.iter()
        .zip(x0_hat)
        .zip(&z)
        .map(|((x, x0), z)| ab_prev.sqrt() * x0 + dir * (x - c * x0) / d + sd * z)
        .collect()
}

/// Detail layer of `texture` on its valid texels: the texture minus its
/// Gaussian blur (σ = 1 texel), where the blur only averages valid texels.
pub fn highpass(texture: &TextureMap) -> Vec<f64> {
    const RADIUS: isize = 3;
    let s = texture.side;
    let k: Vec<f64> = (-RADIUS..=RADIUS).map(|d| (-(d * d) as f64 / 2.0).exp()).collect();
    let out: Vec<[f64; 3]> = par::map(s * s, |i| {
        if !texture.is_valid(i) {
            return [0.0; 3];
        }
        let (x, y) = ((i % s) as isize, (i / s) as isize);
        let (mut acc, mut norm) = ([0.0; 3], 0.0);
        for dy in -RADIUS..=RADIUS {
            for dx in -RADIUS..=RADIUS {
                let (qx, qy) = (x + dx, y + dy);
                if qx < 0 || qy < 0 || qx >= s as isize || qy >= s as isize {
                    continue;
                }
                let j = qy as usize * s + qx as usize;
                if !texture.is_valid(j) {
                    continue;
                }
                let w = k[(dx + RADIUS) as usize] * k[(dy + RADIUS) as usize];
                let c = texture.texel(j);
                for ch in 0..3 {
                    acc[ch] += w * c[ch];
                }
                norm += w;
            }
        }
        let c = texture.texel(i);
        [c[0] - acc[0] / norm, c[1] - acc[1] / norm, c[2] - acc[2] / norm]
    });
    out.into_iter().flatten().collect()
}

/// Adds `gamma · highpass(source)` to `target` on the valid texels of
/// `source`.
pub fn detail_transfer(target: &TextureMap, source: &TextureMap, gamma: f64) -> Result<TextureMap> {
    target.check_same_side(source)?;
    let hp = highpass(source);
    let mut out = target.clone();
    for i in 0..source.texel_count() {
        if source.is_valid(i) {
            for c in 0..3 {
                out.data[3 * i + c] += gamma * hp[3 * i + c];
            }
        }
    }
    Ok(out)
}

/// Full enhancement stage: repaint with the configured denoiser, then the
/// optional detail transfer from `visible` (typically the fused texture
/// restricted to observed texels).
pub fn enhance(
    texture: &TextureMap,
    model: &GeneratorModel,
    visible: Option<&TextureMap>,
    opts: &EnhanceOptions,
) -> Result<TextureMap> {
    let out = match &opts.denoiser {
        DenoiserSpec::Projection => {
            if model.side != texture.side {
                return Err(Error::ShapeMismatch(format!(
                    "texture side {} but model side {}",
                    texture.side, model.side
                )));
            }
            sdedit(texture, opts, &ProjectionDenoiser { model })?
        }
        DenoiserSpec::External(command) => sdedit(
            texture,
            opts,
            &ExternalDenoiser {
                command,
                side: texture.side,
                mask: &texture.mask,
            },
        )?,
    };
    match (opts.detail_transfer, visible) {
        (true, Some(v)) => detail_transfer(&out, v, opts.detail_gamma),
        _ => Ok(out),
    }
}

/// The repainting process as a search space: the latent is the injected
/// noise `ε`, the texture is the deterministic reverse-process output from
/// `x_{t*} = √ᾱ·base + √(1 − ᾱ)·ε` under the projection denoiser.
///
/// With that denoiser every reverse step keeps the off-basis component at
/// `(I − P)μ` and scales the on-basis component by `√ᾱ_{t−1}/√ᾱ_t`, so the
/// whole chain collapses to one denoiser evaluation at `t*`, which is what is
/// computed here.
pub struct NoisePrior<'a> {
    pub model: &'a GeneratorModel,
    pub base: Vec<f64>,
    pub schedule: DiffusionSchedule,
    pub t_star: usize,
}

impl NoisePrior<'_> {
    fn noise_gain(&self) -> f64 {
        let ab = self.schedule.alpha_bar(self.t_star);
        ((1.0 - ab) / ab).sqrt()
    }
}

impl LatentSpace for NoisePrior<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn side(&self) -> usize {
        self.model.side
    }

    fn texture(&self, latent: &[f64]) -> Result<Vec<f64>> {
        if latent.len() != self.dim() {
            return Err(Error::ShapeMismatch(format!("noise has {} values, expected {}", latent.len(), self.dim())));
        }
        let g = self.noise_gain();
        let scaled: Vec<f64> = self.base.iter().zip(latent).map(|(b, e)| b + g * e).collect();
        Ok(self.model.project(&scaled))
    }

    fn texture_vjp(&self, _latent: &[f64], cotangent: &[f64]) -> Result<Vec<f64>> {
        let g = self.noise_gain();
        Ok(self.model.project_centered(cotangent).into_iter().map(|v| g * v).collect())
    }
}
