//! Poisson blending on the texel grid.

use serde::{Deserialize, Serialize};

use crate::solver::{conjugate_gradient, CgError, CgOptions, LinearOperator};
use crate::{par, ChartMask, Error, Result, TextureMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoissonOptions {
    /// Relative residual at which CG stops.
    pub tolerance: f64,
    /// Iteration cap per component; `None` means ten times the component size.
    pub max_iterations: Option<usize>,
    pub jacobi: bool,
}

impl Default for PoissonOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: None,
            jacobi: false,
        }
    }
}

impl PoissonOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "poisson tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == Some(0) {
            return Err(Error::InvalidArgument("poisson max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Single-channel Poisson problem on a `width × height` grid.
///
/// Texel `p`'s neighbours are its 4-neighbours inside the grid and inside
/// `domain`; links leaving the domain are dropped. The equation at `p ∈ Ω` is
/// `Σ_q (f_p − f_q) = Σ_q v_pq` where `v_pq` comes from the forward
/// differences `guidance_x`, `guidance_y` and `f_q` outside Ω is read from
/// `boundary`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonProblem {
    pub width: usize,
    pub height: usize,
    pub region: Vec<bool>,
    pub domain: Vec<bool>,
    /// Values used for neighbours outside Ω.
    pub boundary: Vec<f64>,
    /// `g(x+1, y) − g(x, y)` at texel `(x, y)`.
    pub guidance_x: Vec<f64>,
    /// `g(x, y+1) − g(x, y)` at texel `(x, y)`.
    pub guidance_y: Vec<f64>,
    /// Guidance source `g`, used to fill components without boundary.
    pub source: Option<Vec<f64>>,
}

impl PoissonProblem {
    /// Problem with zero guidance and every texel in the domain.
    pub fn harmonic(width: usize, height: usize, region: Vec<bool>, boundary: Vec<f64>) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            region,
            domain: vec![true; n],
            boundary,
            guidance_x: vec![0.0; n],
            guidance_y: vec![0.0; n],
            source: None,
        }
    }

    /// Guidance taken from the forward differences of `source`.
    pub fn guided(
        width: usize,
        height: usize,
        region: Vec<bool>,
        domain: Vec<bool>,
        boundary: Vec<f64>,
        source: Vec<f64>,
    ) -> Self {
        let (gx, gy) = forward_differences(width, height, &source);
        Self {
            width,
            height,
            region,
            domain,
            boundary,
            guidance_x: gx,
            guidance_y: gy,
            source: Some(source),
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.width * self.height;
        let lens = [
            self.region.len(),
            self.domain.len(),
            self.boundary.len(),
            self.guidance_x.len(),
            self.guidance_y.len(),
        ];
        if lens.iter().any(|&l| l != n) || self.source.as_ref().is_some_and(|s| s.len() != n) {
            return Err(Error::ShapeMismatch(format!(
                "poisson problem on a {}x{} grid has inconsistent field lengths",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// Domain neighbours of texel `p`.
    fn neighbours(&self, p: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (x, y) = (p % self.width, p / self.width);
        let w = self.width;
        // (neighbour, v_pq)
        let cand = [
            (x + 1 < w).then(|| (p + 1, -self.guidance_x[p])),
            (x > 0).then(|| (p - 1, self.guidance_x[p - 1])),
            (y + 1 < self.height).then(|| (p + w, -self.guidance_y[p])),
            (y > 0).then(|| (p - w, self.guidance_y[p - w])),
        ];
        cand.into_iter().flatten().filter(move |&(q, _)| self.domain[q])
    }
}

/// Forward differences of a row-major grid; zero on the last column/row.
pub fn forward_differences(width: usize, height: usize, g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = width * height;
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    for y in 0..height {
        for x in 0..width {
            let p = y * width + x;
            if x + 1 < width {
                gx[p] = g[p + 1] - g[p];
            }
            if y + 1 < height {
                gy[p] = g[p + width] - g[p];
            }
        }
    }
    (gx, gy)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSolution {
    /// Full grid: solved values on Ω, `boundary` elsewhere.
    pub values: Vec<f64>,
    /// Components of Ω with no boundary neighbour, as sorted texel lists.
    pub islands: Vec<Vec<usize>>,
    pub iterations: usize,
    pub max_relative_residual: f64,
}

/// Connected components of Ω under the domain-restricted 4-neighbourhood,
/// each sorted, ordered by smallest texel.
fn components(problem: &PoissonProblem) -> Vec<Vec<usize>> {
    let n = problem.width * problem.height;
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if !problem.region[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut head = 0;
        while head < comp.len() {
            let p = comp[head];
            head += 1;
            for (q, _) in problem.neighbours(p) {
                if problem.region[q] && !seen[q] {
                    seen[q] = true;
                    comp.push(q);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

struct ComponentOperator {
    degree: Vec<f64>,
    /// Interior neighbours by local index.
    links: Vec<Vec<usize>>,
}

impl LinearOperator for ComponentOperator {
    fn dim(&self) -> usize {
        self.degree.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        par::for_each_chunk(y, 1024, |c, out| {
            for (k, v) in out.iter_mut().enumerate() {
                let i = c * 1024 + k;
                *v = self.degree[i] * x[i] - self.links[i].iter().map(|&j| x[j]).sum::<f64>();
            }
        });
    }

    fn diagonal(&self) -> Vec<f64> {
        self.degree.clone()
    }
}

struct Outcome {
    values: Vec<f64>,
    island: bool,
    iterations: usize,
    residual: f64,
}

fn solve_component(problem: &PoissonProblem, comp: &[usize], opts: &PoissonOptions) -> Result<Outcome> {
    let local = |p: usize| comp.binary_search(&p).ok();
    let mut degree = Vec::with_capacity(comp.len());
    let mut links = Vec::with_capacity(comp.len());
    let mut rhs = Vec::with_capacity(comp.len());
    let mut anchored = false;
    for &p in comp {
        let mut d = 0.0;
        let mut l = Vec::new();
        let mut b = 0.0;
        for (q, v) in problem.neighbours(p) {
            d += 1.0;
            b += v;
            match local(q) {
                Some(j) => l.push(j),
                None => {
                    anchored = true;
                    b += problem.boundary[q];
                }
            }
        }
        degree.push(d);
        links.push(l);
        rhs.push(b);
    }
    if !anchored {
        let Some(source) = &problem.source else {
            return Err(Error::InvalidArgument(format!(
                "region component at texel {} has no boundary and no guidance source",
                comp[0]
            )));
        };
        let mean = comp.iter().map(|&p| source[p]).sum::<f64>() / comp.len() as f64;
        return Ok(Outcome {
            values: vec![mean; comp.len()],
            island: true,
            iterations: 0,
            residual: 0.0,
        });
    }
    let op = ComponentOperator { degree, links };
    let cg = CgOptions {
        tolerance: opts.tolerance,
        max_iterations: opts.max_iterations.unwrap_or(10 * comp.len()),
        jacobi: opts.jacobi,
    };
    let mut x = vec![0.0; comp.len()];
    match conjugate_gradient(&op, &rhs, &mut x, &cg) {
        Ok(r) => Ok(Outcome {
            values: x,
            island: false,
            iterations: r.iterations,
            residual: r.relative_residual,
        }),
        Err(CgError::NotConverged { iterations, residual }) => Err(Error::NotConverged { iterations, residual }),
        Err(CgError::Breakdown { iteration }) => Err(Error::NotConverged {
            iterations: iteration,
            residual: f64::NAN,
        }),
    }
}

/// Solves every connected component of Ω. Components without any boundary
/// neighbour are islands and take the mean of the guidance source over the
/// component.
pub fn poisson_solve(problem: &PoissonProblem, opts: &PoissonOptions) -> Result<PoissonSolution> {
    opts.validate()?;
    problem.validate()?;
    let comps = components(problem);
    let outcomes = par::map(comps.len(), |c| solve_component(problem, &comps[c], opts));
    let mut values = problem.boundary.clone();
    let mut islands = Vec::new();
    let mut iterations = 0;
    let mut max_relative_residual: f64 = 0.0;
    for (comp, outcome) in comps.into_iter().zip(outcomes) {
        let o = outcome?;
        for (&p, v) in comp.iter().zip(&o.values) {
            values[p] = *v;
        }
        iterations = iterations.max(o.iterations);
        max_relative_residual = max_relative_residual.max(o.residual);
        if o.island {
            islands.push(comp);
        }
    }
    Ok(PoissonSolution {
        values,
        islands,
        iterations,
        max_relative_residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuseReport {
    /// Number of texels in Ω.
    pub region_size: usize,
    pub island_count: usize,
    pub island_texels: usize,
    pub iterations: usize,
}

/// Fills the invalid charted texels of `observed` by solving a Poisson
/// problem guided by the gradients of `complete` with the valid observed
/// texels as boundary. Valid texels are copied unchanged; islands take
/// `complete` verbatim. The output mask is the chart coverage.
pub fn fuse(
    observed: &TextureMap,
    complete: &TextureMap,
    chart: &ChartMask,
    opts: &PoissonOptions,
) -> Result<(TextureMap, FuseReport)> {
    observed.check_same_side(complete)?;
    if chart.side != observed.side {
        return Err(Error::ShapeMismatch(format!(
            "chart mask side {} differs from texture side {}",
            chart.side, observed.side
        )));
    }
    opts.validate()?;
    let s = observed.side;
    let n = s * s;
    let region: Vec<bool> = (0..n).map(|i| chart.covered[i] && !observed.is_valid(i)).collect();
    let domain: Vec<bool> = (0..n).map(|i| chart.covered[i] || observed.is_valid(i)).collect();
    let channel = |t: &TextureMap, c: usize| (0..n).map(|i| t.data[3 * i + c]).collect::<Vec<f64>>();

    let mut out = observed.clone();
    let mut report = FuseReport {
        region_size: region.iter().filter(|&&r| r).count(),
        island_count: 0,
        island_texels: 0,
        iterations: 0,
    };
    if report.region_size > 0 {
        let solved = par::map(3, |c| {
            let problem = PoissonProblem::guided(
                s,
                s,
                region.clone(),
                domain.clone(),
                channel(observed, c),
                channel(complete, c),
            );
            poisson_solve(&problem, opts)
        });
        for (c, sol) in solved.into_iter().enumerate() {
            let sol = sol?;
            for i in (0..n).filter(|&i| region[i]) {
                out.data[3 * i + c] = sol.values[i];
            }
            for &i in sol.islands.iter().flatten() {
                out.data[3 * i + c] = complete.data[3 * i + c];
            }
            report.iterations = report.iterations.max(sol.iterations);
            if c == 0 {
                report.island_count = sol.islands.len();
                report.island_texels = sol.islands.iter().map(Vec::len).sum();
            }
        }
    }
    for i in 0..n {
        if !observed.is_valid(i) {
            out.mask[i] = if chart.covered[i] { 1.0 } else { 0.0 };
        }
    }
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn components_respect_the_domain() {
        // 4x1 strip, Ω = {0, 2}, texel 1 outside the domain.
        let mut p = PoissonProblem::harmonic(4, 1, vec![true, false, true, false], vec![0.0; 4]);
        p.domain[1] = false;
        assert_eq!(components(&p), vec![vec![0], vec![2]]);
    }

    #[test]
    fn island_without_source_is_rejected() {
        let p = PoissonProblem::harmonic(2, 2, vec![true; 4], vec![0.0; 4]);
        assert!(poisson_solve(&p, &PoissonOptions::default()).is_err());
    }
}
