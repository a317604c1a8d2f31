//! Latent inversion and render-based latent correction.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::loss::{total_loss, LossTerms, LossWeights};
use super::render::RenderMap;
use crate::generator::GeneratorModel;
use crate::{Error, Image, Result, TextureMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimSchedule {
    /// Inversion steps in the pre-mapper space.
    pub z_steps: usize,
    /// Inversion steps in the latent space, after the `z` phase.
    pub w_steps: usize,
    /// Render-based correction steps.
    pub correct_steps: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Record the latent every this many steps; 0 disables snapshots.
    pub snapshot_every: usize,
}

impl Default for OptimSchedule {
    fn default() -> Self {
        Self {
            z_steps: 100,
            w_steps: 500,
            correct_steps: 100,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            snapshot_every: 0,
        }
    }
}

impl OptimSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::InvalidArgument("moment decay rates must lie in [0, 1)".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidArgument("moment epsilon must be positive".into()));
        }
        Ok(())
    }

    fn adam(&self, dim: usize) -> Adam {
        Adam::new(dim, self.lr, self.beta1, self.beta2, self.eps)
    }
}

/// Adaptive-moment gradient descent.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(dim: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn step(&mut self, x: &mut [f64], g: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..x.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g[i] * g[i];
            x[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    #[serde(flatten)]
    pub terms: LossTerms,
}

/// Per-step losses and optional latent snapshots.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTrace {
    pub rows: Vec<TraceRow>,
    pub snapshots: Vec<(usize, Vec<f64>)>,
}

impl LossTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,total,l1,perc,reg\n");
        for r in &self.rows {
            let t = &r.terms;
            writeln!(s, "{},{:e},{:e},{:e},{:e}", r.step, t.total, t.l1, t.perc, t.reg).unwrap();
        }
        s
    }

    pub fn totals(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.terms.total).collect()
    }

    fn record(&mut self, step: usize, terms: LossTerms, latent: &[f64], every: usize) -> Result<()> {
        if !terms.total.is_finite() {
            return Err(Error::NonFinite {
                step,
                what: format!("loss {:?}", terms),
            });
        }
        self.rows.push(TraceRow { step, terms });
        if every > 0 && step.is_multiple_of(every) {
            self.snapshots.push((step, latent.to_vec()));
        }
        Ok(())
    }
}

/// A differentiable map from a latent vector to interleaved texture values.
pub trait LatentSpace {
    fn dim(&self) -> usize;
    fn side(&self) -> usize;
    fn texture(&self, latent: &[f64]) -> Result<Vec<f64>>;
    /// Cotangent of the latent given a texture cotangent at `latent`.
    fn texture_vjp(&self, latent: &[f64], cotangent: &[f64]) -> Result<Vec<f64>>;
}

impl LatentSpace for GeneratorModel {
    fn dim(&self) -> usize {
        self.d_w()
    }

    fn side(&self) -> usize {
        self.side
    }

    fn texture(&self, latent: &[f64]) -> Result<Vec<f64>> {
        Ok(self.gen_texture(latent)?.data)
    }

    fn texture_vjp(&self, _latent: &[f64], cotangent: &[f64]) -> Result<Vec<f64>> {
        self.gen_vjp(cotangent)
    }
}

/// Outcome of an optimization: the lowest-loss iterate and the full trace.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentResult {
    pub latent: Vec<f64>,
    pub texture: TextureMap,
    pub trace: LossTrace,
    /// Step at which `latent` was evaluated.
    pub best_step: usize,
}

/// Lowest-loss iterate seen so far; ties keep the earlier step.
struct Best {
    step: usize,
    loss: f64,
    latent: Vec<f64>,
}

impl Best {
    fn new(latent: &[f64]) -> Self {
        Self {
            step: 0,
            loss: f64::INFINITY,
            latent: latent.to_vec(),
        }
    }

    fn offer(&mut self, step: usize, loss: f64, latent: &[f64]) {
        if loss < self.loss {
            self.step = step;
            self.loss = loss;
            self.latent.clear();
            self.latent.extend_from_slice(latent);
        }
    }
}

/// Mean absolute difference over the masked texel channels, with its
/// gradient.
fn masked_l1(x: &[f64], target: &[f64], mask: &[bool], count: usize) -> (f64, Vec<f64>) {
    let n = (3 * count) as f64;
    let mut loss = 0.0;
    let grad = x
        .iter()
        .zip(target)
        .enumerate()
        .map(|(i, (a, b))| {
            if !mask[i / 3] {
                return 0.0;
            }
            let d = a - b;
            loss += d.abs();
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    (loss / n, grad)
}

fn l1_terms(v: f64) -> LossTerms {
    LossTerms {
        total: v,
        l1: v,
        perc: 0.0,
        reg: 0.0,
    }
}

/// Finds the latent whose texture best matches `target` in masked L1 over the
/// target's valid texels inside the model chart: first by descent on `z`
/// from zero through the mapper, then directly on `w`.
pub fn invert_latent(model: &GeneratorModel, target: &TextureMap, schedule: &OptimSchedule) -> Result<LatentResult> {
    schedule.validate()?;
    if target.side != model.side {
        return Err(Error::ShapeMismatch(format!(
            "target side {} but model side {}",
            target.side, model.side
        )));
    }
    let mask: Vec<bool> = (0..target.texel_count())
        .map(|i| target.is_valid(i) && model.chart.covered[i])
        .collect();
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::InvalidArgument("inversion target has no valid texels".into()));
    }
    let every = schedule.snapshot_every;
    let mut trace = LossTrace::default();

    let mut z = vec![0.0; model.d_z()];
    let mut adam = schedule.adam(z.len());
    let mut best = Best::new(&model.map_z_to_w(&z)?);
    for step in 0..schedule.z_steps {
        let w = model.map_z_to_w(&z)?;
        let x = model.gen_texture(&w)?;
        let (loss, gx) = masked_l1(&x.data, &target.data, &mask, count);
        trace.record(step, l1_terms(loss), &w, every)?;
        best.offer(step, loss, &w);
        let gz = model.map_vjp(&z, &model.gen_vjp(&gx)?);
        adam.step(&mut z, &gz);
    }

    let mut w = model.map_z_to_w(&z)?;
    let mut adam = schedule.adam(w.len());
    let end = schedule.z_steps + schedule.w_steps;
    for step in schedule.z_steps..end {
        let x = model.gen_texture(&w)?;
        let (loss, gx) = masked_l1(&x.data, &target.data, &mask, count);
        trace.record(step, l1_terms(loss), &w, every)?;
        best.offer(step, loss, &w);
        adam.step(&mut w, &model.gen_vjp(&gx)?);
    }
    let (loss, _) = masked_l1(&model.gen_texture(&w)?.data, &target.data, &mask, count);
    trace.record(end, l1_terms(loss), &w, every)?;
    best.offer(end, loss, &w);
    Ok(LatentResult {
        texture: model.gen_texture(&best.latent)?,
        latent: best.latent,
        trace,
        best_step: best.step,
    })
}

/// Loss of the rendered latent texture against `image` and its gradient with
/// respect to the latent.
pub fn render_loss<S: LatentSpace + ?Sized>(
    space: &S,
    latent: &[f64],
    latent_init: &[f64],
    map: &RenderMap,
    image: &Image,
    weights: &LossWeights,
) -> Result<(LossTerms, Vec<f64>)> {
    let x = space.texture(latent)?;
    let rendered = map.render_values(&x)?;
    let eval = total_loss(&rendered, &map.mask(), image, latent, latent_init, weights)?;
    let gx = map.render_vjp(&eval.grad_image)?;
    let mut g = space.texture_vjp(latent, &gx)?;
    g.iter_mut().zip(&eval.grad_latent).for_each(|(a, b)| *a += b);
    Ok((eval.terms, g))
}

/// Descends the render loss in an arbitrary latent space, regularized toward
/// the starting latent. Returns the lowest-loss iterate, its step and the
/// trace.
pub fn correct_in<S: LatentSpace + ?Sized>(
    space: &S,
    latent_init: &[f64],
    map: &RenderMap,
    image: &Image,
    weights: &LossWeights,
    schedule: &OptimSchedule,
) -> Result<(Vec<f64>, usize, LossTrace)> {
    schedule.validate()?;
    weights.validate()?;
    if latent_init.len() != space.dim() {
        return Err(Error::ShapeMismatch(format!(
            "initial latent has {} entries, space has {}",
            latent_init.len(),
            space.dim()
        )));
    }
    if space.side() != map.side {
        return Err(Error::ShapeMismatch(format!(
            "latent space side {} but render map side {}",
            space.side(),
            map.side
        )));
    }
    if (image.width, image.height) != (map.width, map.height) {
        return Err(Error::ShapeMismatch(format!(
            "image is {}x{} but the render map is {}x{}",
            image.width, image.height, map.width, map.height
        )));
    }
    let mut latent = latent_init.to_vec();
    let mut adam = schedule.adam(latent.len());
    let mut trace = LossTrace::default();
    let every = schedule.snapshot_every;
    let mut best = Best::new(latent_init);
    for step in 0..schedule.correct_steps {
        let (terms, g) = render_loss(space, &latent, latent_init, map, image, weights)?;
        trace.record(step, terms, &latent, every)?;
        best.offer(step, terms.total, &latent);
        adam.step(&mut latent, &g);
    }
    let (terms, _) = render_loss(space, &latent, latent_init, map, image, weights)?;
    trace.record(schedule.correct_steps, terms, &latent, every)?;
    best.offer(schedule.correct_steps, terms.total, &latent);
    Ok((best.latent, best.step, trace))
}

/// Render-based correction of a generator latent.
pub fn correct_latent(
    model: &GeneratorModel,
    w_init: &[f64],
    map: &RenderMap,
    image: &Image,
    weights: &LossWeights,
    schedule: &OptimSchedule,
) -> Result<LatentResult> {
    let (w, best_step, trace) = correct_in(model, w_init, map, image, weights, schedule)?;
    Ok(LatentResult {
        texture: model.gen_texture(&w)?,
        latent: w,
        trace,
        best_step,
    })
}
