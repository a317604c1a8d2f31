//! Non-rigid ICP with per-vertex affine transforms and a stiffness schedule.
//!
//! Each template vertex `v_i` carries a 4×3 affine `X_i` so that its deformed
//! position is `[v_i, 1]·X_i`. For every stiffness level `α` the solver
//! alternates closest-point correspondence search with the linear least-squares
//! problem
//!
//! ```text
//! Σ_i w_i ‖ṽ_i X_i − u_i‖² + α Σ_(i,j) ‖G (X_i − X_j)‖² + λ Σ_k ‖ṽ_k X_k − l_k‖²
//! ```
//!
//! whose normal equations are solved by conjugate gradient (one solve per
//! output coordinate, warm-started from the previous iterate). The alternation
//! is a fixed-point iteration that stalls on tangential sliding, so it is
//! accelerated by Anderson mixing; a mixed iterate is kept only when it lowers
//! the objective evaluated with its own correspondences.

use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use super::closest::TriangleBvh;
use crate::solver::{conjugate_gradient_with, CgError, CgOptions, LinearOperator};
use crate::{par, Error, Mesh, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub vertex: usize,
    pub target: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NicpParams {
    /// Strictly decreasing, positive stiffness weights.
    pub stiffness: Vec<f64>,
    pub max_inner_iterations: usize,
    /// Stop a level when the mean vertex displacement falls below this
    /// fraction of the target bounding-box diagonal.
    pub inner_threshold: f64,
    /// Correspondences farther than this fraction of the target diagonal are
    /// pruned.
    pub distance_cutoff: f64,
    /// Correspondences whose normals differ by more than this angle are pruned.
    pub normal_cutoff_deg: f64,
    /// Weight of the translation row in the stiffness term.
    pub gamma: f64,
    /// Landmark weight at the first level; halved at every following level.
    pub landmark_weight: f64,
    pub landmarks: Vec<Landmark>,
    pub cg_tolerance: f64,
    /// History length of the safeguarded Anderson mixing applied to the inner
    /// fixed-point iteration; 0 gives plain alternation.
    pub anderson_depth: usize,
    /// Iterations of global similarity ICP run after the bounding-box
    /// alignment and before the first stiffness level; 0 disables it.
    pub prealign_iterations: usize,
}

impl Default for NicpParams {
    fn default() -> Self {
        Self {
            stiffness: vec![100.0, 50.0, 20.0, 10.0, 5.0, 2.0, 1.0],
            max_inner_iterations: 10,
            inner_threshold: 1e-4,
            distance_cutoff: 0.05,
            normal_cutoff_deg: 60.0,
            gamma: 1.0,
            landmark_weight: 10.0,
            landmarks: Vec::new(),
            cg_tolerance: 1e-10,
            anderson_depth: 5,
            prealign_iterations: 200,
        }
    }
}

impl NicpParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("NICP parameters: {m}")));
        if self.stiffness.is_empty() || self.stiffness.iter().any(|&a| !(a > 0.0)) {
            return bad("stiffness schedule must be non-empty and positive");
        }
        if self.stiffness.windows(2).any(|w| w[1] >= w[0]) {
            return bad("stiffness schedule must be strictly decreasing");
        }
        if self.max_inner_iterations == 0 {
            return bad("max inner iterations must be at least 1");
        }
        if !(self.inner_threshold > 0.0 && self.distance_cutoff > 0.0 && self.normal_cutoff_deg > 0.0) {
            return bad("threshold and cutoffs must be positive");
        }
        if !(self.gamma > 0.0) || !(self.landmark_weight >= 0.0) || !(self.cg_tolerance > 0.0) {
            return bad("gamma, landmark weight and CG tolerance must be positive");
        }
        Ok(())
    }
}

/// Per-level convergence record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelReport {
    pub stiffness: f64,
    /// Objective value at each solved inner iterate.
    pub objectives: Vec<f64>,
    pub mean_displacements: Vec<f64>,
    pub active_correspondences: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NicpReport {
    pub levels: Vec<LevelReport>,
}

/// Reads `template_vertex_index x y z` lines (blank lines and `#` comments
/// ignored).
pub fn load_landmarks(path: impl AsRef<Path>) -> Result<Vec<Landmark>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let parse_err = |m: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: m,
        };
        if f.len() != 4 {
            return Err(parse_err(format!("expected 4 fields, got {}", f.len())));
        }
        let vertex = f[0].parse().map_err(|e| parse_err(format!("vertex index: {e}")))?;
        let mut target = [0.0; 3];
        for k in 0..3 {
            target[k] = f[k + 1].parse().map_err(|e| parse_err(format!("coordinate: {e}")))?;
        }
        out.push(Landmark { vertex, target });
    }
    Ok(out)
}

pub fn nicp_register(template: &Mesh, target: &Mesh, params: &NicpParams) -> Result<Mesh> {
    nicp_register_with_report(template, target, params).map(|(m, _)| m)
}

/// Block-sparse symmetric matrix with 4×4 blocks on the vertex adjacency graph.
struct BlockSystem {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    blocks: Vec<Matrix4<f64>>,
    diag_pos: Vec<usize>,
}

impl BlockSystem {
    fn pattern(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut nbrs: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for &(i, j) in edges {
            nbrs[i].push(j);
            nbrs[j].push(i);
        }
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut diag_pos = Vec::with_capacity(n);
        for (i, mut row) in nbrs.into_iter().enumerate() {
            row.sort_unstable();
            row.dedup();
            diag_pos.push(cols.len() + row.iter().position(|&c| c == i).unwrap());
            cols.extend(row);
            row_ptr.push(cols.len());
        }
        let blocks = vec![Matrix4::zeros(); cols.len()];
        Self {
            row_ptr,
            cols,
            blocks,
            diag_pos,
        }
    }

    fn position(&self, i: usize, j: usize) -> usize {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        self.row_ptr[i] + row.binary_search(&j).expect("block outside sparsity pattern")
    }
}

impl LinearOperator for BlockSystem {
    fn dim(&self) -> usize {
        4 * (self.row_ptr.len() - 1)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        const VERTS_PER_CHUNK: usize = 64;
        par::for_each_chunk(y, 4 * VERTS_PER_CHUNK, |chunk, out| {
            for (local, y4) in out.chunks_mut(4).enumerate() {
                let i = chunk * VERTS_PER_CHUNK + local;
                let mut acc = Vector4::zeros();
                for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                    let c = self.cols[k];
                    acc += self.blocks[k] * Vector4::from_column_slice(&x[4 * c..4 * c + 4]);
                }
                y4.copy_from_slice(acc.as_slice());
            }
        });
    }

    fn diagonal(&self) -> Vec<f64> {
        self.diag_pos
            .iter()
            .flat_map(|&p| (0..4).map(move |k| self.blocks[p][(k, k)]))
            .collect()
    }
}

fn check_connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    }
    let root = find(&mut parent, 0);
    (0..n).all(|i| find(&mut parent, i) == root)
}

fn homogeneous(v: &Vector3<f64>) -> Vector4<f64> {
    Vector4::new(v.x, v.y, v.z, 1.0)
}

/// Deformed positions `ṽ_i X_i` from the three coordinate columns of `X`.
fn deform(template: &Mesh, x: &[Vec<f64>; 3]) -> Vec<Vector3<f64>> {
    template
        .vertices
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let h = homogeneous(v);
            Vector3::new(
                h.dot(&Vector4::from_column_slice(&x[0][4 * i..4 * i + 4])),
                h.dot(&Vector4::from_column_slice(&x[1][4 * i..4 * i + 4])),
                h.dot(&Vector4::from_column_slice(&x[2][4 * i..4 * i + 4])),
            )
        })
        .collect()
}

/// Least-squares uniform scale plus translation mapping the template's
/// bounding-box corners onto the target's.
fn bbox_similarity(template: &Mesh, target: &Mesh) -> (f64, Vector3<f64>) {
    let (tlo, thi) = template.bbox();
    let (glo, ghi) = target.bbox();
    let (tc, gc) = ((tlo + thi) / 2.0, (glo + ghi) / 2.0);
    let (th, gh) = ((thi - tlo) / 2.0, (ghi - glo) / 2.0);
    // Centered corners are (±h.x, ±h.y, ±h.z); the 8-corner sums reduce to
    // per-axis products.
    let num = th.component_mul(&gh).sum();
    let den = th.norm_squared();
    let s = if den > 0.0 { num / den } else { 1.0 };
    (s, gc - tc * s)
}

/// Shared state for one registration run.
struct Problem<'a> {
    template: &'a Mesh,
    params: &'a NicpParams,
    bvh: TriangleBvh,
    edges: Vec<(usize, usize)>,
    hv: Vec<Vector4<f64>>,
    g2: Matrix4<f64>,
    diag: f64,
    cos_cutoff: f64,
}

type Correspondences = Vec<(Vector3<f64>, f64)>;

impl Problem<'_> {
    fn n(&self) -> usize {
        self.hv.len()
    }

    fn correspondences(&self, positions: &[Vector3<f64>]) -> (Correspondences, usize) {
        let mut work = self.template.clone();
        work.vertices = positions.to_vec();
        let normals = work.vertex_normals();
        let corr = par::map(positions.len(), |i| {
            let c = self.bvh.closest(&positions[i]);
            let dist_ok = c.distance_squared.sqrt() <= self.params.distance_cutoff * self.diag;
            let normal_ok = normals[i].dot(&c.normal) >= self.cos_cutoff;
            (c.point, if dist_ok && normal_ok { 1.0 } else { 0.0 })
        });
        let active = corr.iter().filter(|c| c.1 > 0.0).count();
        (corr, active)
    }

    fn energy(&self, x: &[Vec<f64>; 3], positions: &[Vector3<f64>], corr: &Correspondences, alpha: f64, lm: f64) -> f64 {
        let mut e = 0.0;
        for (p, (u, w)) in positions.iter().zip(corr) {
            e += w * (p - u).norm_squared();
        }
        for &(i, j) in &self.edges {
            for xc in x {
                let d = Vector4::from_column_slice(&xc[4 * i..4 * i + 4])
                    - Vector4::from_column_slice(&xc[4 * j..4 * j + 4]);
                e += alpha * d.dot(&(self.g2 * d));
            }
        }
        for l in &self.params.landmarks {
            e += lm * (positions[l.vertex] - Vector3::from(l.target)).norm_squared();
        }
        e
    }

    /// Minimizes the level objective for fixed correspondences, warm-starting
    /// from `x`.
    fn solve(
        &self,
        system: &mut BlockSystem,
        corr: &Correspondences,
        alpha: f64,
        lm: f64,
        x: &mut [Vec<f64>; 3],
    ) -> Result<()> {
        let n = self.n();
        let hv = &self.hv;
        system.blocks.iter_mut().for_each(|b| *b = Matrix4::zeros());
        let a = self.g2 * alpha;
        for &(i, j) in &self.edges {
            let (pii, pjj) = (system.diag_pos[i], system.diag_pos[j]);
            system.blocks[pii] += a;
            system.blocks[pjj] += a;
            let (pij, pji) = (system.position(i, j), system.position(j, i));
            system.blocks[pij] -= a;
            system.blocks[pji] -= a;
        }
        let mut rhs: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; 4 * n]);
        let mut add_point = |system: &mut BlockSystem, i: usize, w: f64, u: [f64; 3]| {
            system.blocks[system.diag_pos[i]] += hv[i] * hv[i].transpose() * w;
            for c in 0..3 {
                for k in 0..4 {
                    rhs[c][4 * i + k] += w * hv[i][k] * u[c];
                }
            }
        };
        for (i, (u, w)) in corr.iter().enumerate() {
            if *w > 0.0 {
                add_point(system, i, *w, (*u).into());
            }
        }
        for l in &self.params.landmarks {
            add_point(system, l.vertex, lm, l.target);
        }

        let inv_blocks: Vec<Matrix4<f64>> = system
            .diag_pos
            .iter()
            .map(|&p| system.blocks[p].try_inverse().unwrap_or_else(Matrix4::identity))
            .collect();
        let precondition = |r: &[f64], z: &mut [f64]| {
            for (i, inv) in inv_blocks.iter().enumerate() {
                let v = inv * Vector4::from_column_slice(&r[4 * i..4 * i + 4]);
                z[4 * i..4 * i + 4].copy_from_slice(v.as_slice());
            }
        };
        let opts = CgOptions {
            tolerance: self.params.cg_tolerance,
            max_iterations: 40 * n,
            jacobi: false,
        };
        for c in 0..3 {
            conjugate_gradient_with(&*system, &rhs[c], &mut x[c], &opts, Some(&precondition)).map_err(|e| match e {
                CgError::Breakdown { iteration } => Error::SingularSystem {
                    stiffness: alpha,
                    reason: format!("conjugate gradient breakdown at iteration {iteration}"),
                },
                CgError::NotConverged { iterations, residual } => Error::NotConverged { iterations, residual },
            })?;
        }
        Ok(())
    }
}

fn flatten(x: &[Vec<f64>; 3]) -> Vec<f64> {
    x.concat()
}

fn unflatten(v: &[f64]) -> [Vec<f64>; 3] {
    let m = v.len() / 3;
    std::array::from_fn(|c| v[c * m..(c + 1) * m].to_vec())
}

/// Type-II Anderson mixing over the last few fixed-point evaluations.
struct Anderson {
    depth: usize,
    prev: Option<(Vec<f64>, Vec<f64>)>,
    d_g: Vec<Vec<f64>>,
    d_f: Vec<Vec<f64>>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Self {
            depth,
            prev: None,
            d_g: Vec::new(),
            d_f: Vec::new(),
        }
    }

    fn reset(&mut self) {
        self.prev = None;
        self.d_g.clear();
        self.d_f.clear();
    }

    /// Records `g = G(s)` and returns the mixed iterate, if any history exists.
    fn mix(&mut self, s: &[f64], g: &[f64]) -> Option<Vec<f64>> {
        let f: Vec<f64> = g.iter().zip(s).map(|(a, b)| a - b).collect();
        if let Some((pg, pf)) = self.prev.take() {
            self.d_g.push(g.iter().zip(&pg).map(|(a, b)| a - b).collect());
            self.d_f.push(f.iter().zip(&pf).map(|(a, b)| a - b).collect());
            if self.d_g.len() > self.depth {
                self.d_g.remove(0);
                self.d_f.remove(0);
            }
        }
        self.prev = Some((g.to_vec(), f.clone()));
        let m = self.d_f.len();
        if m == 0 {
            return None;
        }
        let mut gram = nalgebra::DMatrix::<f64>::zeros(m, m);
        let mut rhs = nalgebra::DVector::<f64>::zeros(m);
        for a in 0..m {
            for b in a..m {
                let v = crate::solver::dot(&self.d_f[a], &self.d_f[b]);
                gram[(a, b)] = v;
                gram[(b, a)] = v;
            }
            rhs[a] = crate::solver::dot(&self.d_f[a], &f);
        }
        let scale = (0..m).map(|a| gram[(a, a)]).fold(0.0, f64::max);
        if !(scale > 0.0) {
            return None;
        }
        for a in 0..m {
            gram[(a, a)] += 1e-10 * scale;
        }
        let theta = gram.cholesky()?.solve(&rhs);
        let mut out = g.to_vec();
        for (a, dg) in self.d_g.iter().enumerate() {
            out.iter_mut().zip(dg).for_each(|(o, d)| *o -= theta[a] * d);
        }
        out.iter().all(|v| v.is_finite()).then_some(out)
    }
}

/// `p ↦ e^log_scale · exp(rotation) · p + translation`, with the rotation as a
/// scaled axis so that Anderson mixing stays on the group.
#[derive(Debug, Clone, Copy)]
struct Similarity {
    rotation: Vector3<f64>,
    log_scale: f64,
    translation: Vector3<f64>,
}

impl Similarity {
    fn matrix(&self) -> (Matrix3<f64>, Vector3<f64>) {
        let r = Rotation3::from_scaled_axis(self.rotation);
        (r.matrix() * self.log_scale.exp(), self.translation)
    }

    fn to_vec(self) -> Vec<f64> {
        let (r, t) = (self.rotation, self.translation);
        vec![r.x, r.y, r.z, self.log_scale, t.x, t.y, t.z]
    }

    fn from_slice(v: &[f64]) -> Self {
        Self {
            rotation: Vector3::new(v[0], v[1], v[2]),
            log_scale: v[3],
            translation: Vector3::new(v[4], v[5], v[6]),
        }
    }

    fn apply_all(&self, pts: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        let (a, t) = self.matrix();
        pts.iter().map(|p| a * p + t).collect()
    }
}

/// Least-squares similarity mapping `src` onto `dst` (Umeyama).
fn umeyama(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Option<Similarity> {
    let n = src.len() as f64;
    let ms = src.iter().sum::<Vector3<f64>>() / n;
    let md = dst.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut var = 0.0;
    for (p, q) in src.iter().zip(dst) {
        cov += (q - md) * (p - ms).transpose();
        var += (p - ms).norm_squared();
    }
    cov /= n;
    var /= n;
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u?, svd.v_t?);
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = u * d * vt;
    let scale = (svd.singular_values.component_mul(&d.diagonal())).sum() / var;
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r)).scaled_axis();
    Some(Similarity {
        rotation,
        log_scale: scale.ln(),
        translation: md - r * ms * scale,
    })
}

/// Global similarity ICP against the target surface, without pruning.
fn prealign(template: &Mesh, bvh: &TriangleBvh, init: Similarity, params: &NicpParams) -> Similarity {
    let energy_of = |sim: &Similarity| -> (f64, Vec<Vector3<f64>>) {
        let pts = sim.apply_all(&template.vertices);
        let closest = par::map(pts.len(), |i| bvh.closest(&pts[i]));
        let e = closest.iter().map(|c| c.distance_squared).sum::<f64>();
        (e, closest.into_iter().map(|c| c.point).collect())
    };
    let mut cur = init;
    let (mut energy, mut targets) = energy_of(&cur);
    let mut anderson = Anderson::new(params.anderson_depth);
    for _ in 0..params.prealign_iterations {
        let Some(step) = umeyama(&template.vertices, &targets) else {
            break;
        };
        let (step_energy, step_targets) = energy_of(&step);
        let mut next = (step, step_energy, step_targets);
        if params.anderson_depth > 0 {
            if let Some(mixed) = anderson.mix(&cur.to_vec(), &step.to_vec()) {
                let cand = Similarity::from_slice(&mixed);
                let (e, t) = energy_of(&cand);
                if e < next.1 {
                    next = (cand, e, t);
                } else {
                    anderson.reset();
                    anderson.mix(&cur.to_vec(), &step.to_vec());
                }
            }
        }
        let improvement = energy - next.1;
        if !(next.1 <= energy) {
            break;
        }
        (cur, energy, targets) = next;
        if improvement <= 1e-14 * energy.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    log::debug!("nicp prealign residual={energy:.6e}");
    cur
}

/// Registers `template` onto `target`, returning the deformed template and a
/// per-level convergence report. Triangles and UVs are copied unchanged.
pub fn nicp_register_with_report(
    template: &Mesh,
    target: &Mesh,
    params: &NicpParams,
) -> Result<(Mesh, NicpReport)> {
    params.validate()?;
    let n = template.vertices.len();
    if n < 4 {
        return Err(Error::InvalidMesh("template needs at least 4 vertices".into()));
    }
    if target.triangles.is_empty() || target.vertices.is_empty() {
        return Err(Error::InvalidMesh("target mesh is empty".into()));
    }
    for (name, m) in [("template", template), ("target", target)] {
        if m.vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh(format!("{name} has non-finite vertices")));
        }
    }
    let edges = template.edges();
    if !check_connected(n, &edges) {
        return Err(Error::InvalidMesh("template edge graph is not connected".into()));
    }
    for lm in &params.landmarks {
        if lm.vertex >= n {
            return Err(Error::InvalidArgument(format!(
                "landmark vertex {} out of range ({n} vertices)",
                lm.vertex
            )));
        }
    }

    let problem = Problem {
        template,
        params,
        bvh: TriangleBvh::build(target),
        hv: template.vertices.iter().map(homogeneous).collect(),
        g2: Matrix4::from_diagonal(&Vector4::new(1.0, 1.0, 1.0, params.gamma * params.gamma)),
        diag: target.bbox_diagonal(),
        cos_cutoff: params.normal_cutoff_deg.to_radians().cos(),
        edges,
    };
    let mut system = BlockSystem::pattern(n, &problem.edges);

    let (s, t) = bbox_similarity(template, target);
    let init = Similarity {
        rotation: Vector3::zeros(),
        log_scale: s.ln(),
        translation: t,
    };
    let (a, t) = prealign(template, &problem.bvh, init, params).matrix();
    let mut x: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; 4 * n]);
    for i in 0..n {
        for c in 0..3 {
            for k in 0..3 {
                x[c][4 * i + k] = a[(c, k)];
            }
            x[c][4 * i + 3] = t[c];
        }
    }
    let mut positions = deform(template, &x);
    let (mut corr, mut active) = problem.correspondences(&positions);
    let mut report = NicpReport { levels: Vec::new() };
    let mut anderson = Anderson::new(params.anderson_depth);

    for (level, &alpha) in params.stiffness.iter().enumerate() {
        let lm = if params.landmarks.is_empty() {
            0.0
        } else {
            params.landmark_weight / 2f64.powi(level as i32)
        };
        let mut lr = LevelReport {
            stiffness: alpha,
            objectives: Vec::new(),
            mean_displacements: Vec::new(),
            active_correspondences: Vec::new(),
        };
        anderson.reset();
        for _ in 0..params.max_inner_iterations {
            if active + params.landmarks.len() < 4 {
                return Err(Error::SingularSystem {
                    stiffness: alpha,
                    reason: format!("only {active} correspondences survive pruning"),
                });
            }
            let s_prev = flatten(&x);
            let mut g = x.clone();
            problem.solve(&mut system, &corr, alpha, lm, &mut g)?;
            let g_pos = deform(template, &g);
            let (g_corr, g_active) = problem.correspondences(&g_pos);
            let g_energy = problem.energy(&g, &g_pos, &g_corr, alpha, lm);

            let mut next = (g, g_pos, g_corr, g_active, g_energy);
            if params.anderson_depth > 0 {
                if let Some(mixed) = anderson.mix(&s_prev, &flatten(&next.0)) {
                    let xa = unflatten(&mixed);
                    let pa = deform(template, &xa);
                    let (ca, na) = problem.correspondences(&pa);
                    let ea = problem.energy(&xa, &pa, &ca, alpha, lm);
                    if ea < next.4 {
                        next = (xa, pa, ca, na, ea);
                    } else {
                        anderson.reset();
                        anderson.mix(&s_prev, &flatten(&next.0));
                    }
                }
            }
            let (nx, npos, ncorr, nactive, energy) = next;
            let disp = npos.iter().zip(&positions).map(|(a, b)| (a - b).norm()).sum::<f64>() / n as f64;
            x = nx;
            positions = npos;
            corr = ncorr;
            lr.objectives.push(energy);
            lr.mean_displacements.push(disp);
            lr.active_correspondences.push(active);
            active = nactive;
            log::debug!("nicp alpha={alpha} objective={energy:.6e} displacement={disp:.3e} active={active}");
            if disp < params.inner_threshold * problem.diag {
                break;
            }
        }
        report.levels.push(lr);
    }

    let mut out = template.clone();
    out.vertices = positions;
    if out.normals.is_some() {
        out.normals = Some(out.vertex_normals());
    }
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn umeyama_recovers_a_similarity() {
        let pts: Vec<Vector3<f64>> = (0..20)
            .map(|i| {
                let f = i as f64;
                Vector3::new((f * 0.7).sin(), (f * 1.3).cos(), (f * 0.37).sin() * 2.0)
            })
            .collect();
        let truth = Similarity {
            rotation: Vector3::new(0.4, -0.3, 0.2),
            log_scale: 0.3,
            translation: Vector3::new(1.0, -2.0, 0.5),
        };
        let dst = truth.apply_all(&pts);
        let est = umeyama(&pts, &dst).unwrap();
        assert!((est.rotation - truth.rotation).norm() < 1e-12);
        assert!((est.log_scale - truth.log_scale).abs() < 1e-12);
        assert!((est.translation - truth.translation).norm() < 1e-12);
    }
}
