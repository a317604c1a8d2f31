//! Completion of partial textures.

use serde::{Deserialize, Serialize};

use crate::external::{self, ExternalCommand};
use crate::fusion::{poisson_solve, PoissonOptions, PoissonProblem};
use crate::{ChartMask, Error, Result, TextureMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InpainterSpec {
    /// Membrane interpolation of the valid texels.
    Harmonic,
    /// Mirror across the vertical line `u = axis`, then harmonic.
    Symmetric { axis: f64 },
    External(ExternalCommand),
}

impl Default for InpainterSpec {
    fn default() -> Self {
        InpainterSpec::Symmetric { axis: 0.5 }
    }
}

impl InpainterSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            InpainterSpec::Harmonic => Ok(()),
            InpainterSpec::Symmetric { axis } => {
                if *axis > 0.0 && *axis < 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(format!("symmetry axis must lie in (0, 1), got {axis}")))
                }
            }
            InpainterSpec::External(cmd) => cmd.validate(),
        }
    }
}

/// Completes `partial` on every charted texel. Valid input texels are kept
/// exactly; the output mask is the chart coverage plus the valid input.
pub fn inpaint(
    partial: &TextureMap,
    chart: &ChartMask,
    spec: &InpainterSpec,
    poisson: &PoissonOptions,
) -> Result<TextureMap> {
    spec.validate()?;
    if chart.side != partial.side {
        return Err(Error::ShapeMismatch(format!(
            "chart mask side {} differs from texture side {}",
            chart.side, partial.side
        )));
    }
    match spec {
        InpainterSpec::Harmonic => harmonic_fill(partial, chart, poisson),
        InpainterSpec::Symmetric { axis } => harmonic_fill(&mirror_fill(partial, chart, *axis), chart, poisson),
        InpainterSpec::External(cmd) => external_fill(partial, chart, cmd),
    }
}

fn completed_mask(partial: &TextureMap, chart: &ChartMask) -> Vec<f64> {
    (0..partial.texel_count())
        .map(|i| if chart.covered[i] || partial.is_valid(i) { 1.0 } else { 0.0 })
        .collect()
}

/// Poisson fill with zero guidance. Components cut off from every valid
/// texel take the mean of all valid texels.
pub fn harmonic_fill(partial: &TextureMap, chart: &ChartMask, opts: &PoissonOptions) -> Result<TextureMap> {
    let n = partial.texel_count();
    let valid: Vec<usize> = (0..n).filter(|&i| partial.is_valid(i)).collect();
    if valid.is_empty() {
        return Err(Error::NoBoundaryData);
    }
    let s = partial.side;
    let region: Vec<bool> = (0..n).map(|i| chart.covered[i] && !partial.is_valid(i)).collect();
    let domain: Vec<bool> = (0..n).map(|i| chart.covered[i] || partial.is_valid(i)).collect();
    let mut out = partial.clone();
    if region.iter().any(|&r| r) {
        for c in 0..3 {
            let mean = valid.iter().map(|&i| partial.data[3 * i + c]).sum::<f64>() / valid.len() as f64;
            let boundary = (0..n).map(|i| partial.data[3 * i + c]).collect();
            let mut problem = PoissonProblem::harmonic(s, s, region.clone(), boundary);
            problem.domain = domain.clone();
            problem.source = Some(vec![mean; n]);
            let sol = poisson_solve(&problem, opts)?;
            for i in (0..n).filter(|&i| region[i]) {
                out.data[3 * i + c] = sol.values[i];
            }
        }
    }
    out.mask = completed_mask(partial, chart);
    Ok(out)
}

/// Copies each invalid charted texel from its mirror image across
/// `u = axis` when that texel is valid; the result marks copied texels valid.
pub fn mirror_fill(partial: &TextureMap, chart: &ChartMask, axis: f64) -> TextureMap {
    let s = partial.side;
    let mut out = partial.clone();
    for y in 0..s {
        for x in 0..s {
            let i = y * s + x;
            if partial.is_valid(i) || !chart.covered[i] {
                continue;
            }
            let u = 2.0 * axis - (x as f64 + 0.5) / s as f64;
            if !(0.0..1.0).contains(&u) {
                continue;
            }
            let src = y * s + ((u * s as f64).floor() as usize).min(s - 1);
            if partial.is_valid(src) {
                out.set_texel(i, partial.texel(src));
                out.mask[i] = 1.0;
            }
        }
    }
    out
}

fn external_fill(partial: &TextureMap, chart: &ChartMask, cmd: &ExternalCommand) -> Result<TextureMap> {
    let produced = external::run(cmd, "inpaint", &partial.to_image(), &partial.mask, None)?;
    let mut out = TextureMap::from_image(produced, completed_mask(partial, chart))?;
    // Observed texels are re-composited so they survive PNG quantization.
    for i in (0..partial.texel_count()).filter(|&i| partial.is_valid(i)) {
        out.set_texel(i, partial.texel(i));
    }
    Ok(out)
}
