//! Linear eigen-texture generator and its latent mapper.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::corpus::{synth_texture, Layout, StyleParams};
use crate::{par, ChartMask, Error, Result, TextureMap};

/// Random-access texture collection for fitting.
pub trait Corpus: Sync {
    fn len(&self) -> usize;
    fn side(&self) -> usize;
    fn texture(&self, index: usize) -> Result<TextureMap>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Corpus for [TextureMap] {
    fn len(&self) -> usize {
        <[TextureMap]>::len(self)
    }

    fn side(&self) -> usize {
        self.first().map_or(0, |t| t.side)
    }

    fn texture(&self, index: usize) -> Result<TextureMap> {
        Ok(self[index].clone())
    }
}

/// Procedural corpus generated on demand.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub layout: Layout,
    pub style: StyleParams,
    pub side: usize,
    pub count: usize,
}

impl Corpus for SyntheticCorpus {
    fn len(&self) -> usize {
        self.count
    }

    fn side(&self) -> usize {
        self.side
    }

    fn texture(&self, index: usize) -> Result<TextureMap> {
        Ok(synth_texture(&self.layout, &self.style, self.side, index))
    }
}

/// Corpus of texture PNG files.
#[derive(Debug, Clone)]
pub struct FileCorpus {
    pub paths: Vec<std::path::PathBuf>,
    pub side: usize,
}

impl FileCorpus {
    pub fn new(paths: Vec<std::path::PathBuf>) -> Result<Self> {
        let first = paths
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty corpus".into()))?;
        let side = TextureMap::load(first)?.side;
        Ok(Self { paths, side })
    }
}

impl Corpus for FileCorpus {
    fn len(&self) -> usize {
        self.paths.len()
    }

    fn side(&self) -> usize {
        self.side
    }

    fn texture(&self, index: usize) -> Result<TextureMap> {
        TextureMap::load(&self.paths[index])
    }
}

/// `w = A2 · tanh(A1 · z) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mapper {
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub seed: u64,
}

/// Matrix with orthonormal columns (or rows, when wide) from a seeded
/// Gaussian draw.
fn orthogonal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let tall = rows >= cols;
    let (r, c) = if tall { (rows, cols) } else { (cols, rows) };
    let g = DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let rd = qr.r();
    for j in 0..c {
        if rd[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if tall {
        q
    } else {
        q.transpose()
    }
}

impl Mapper {
    pub fn new(d_z: usize, d_w: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a1 = orthogonal(d_z, d_z, &mut rng);
        let a2 = orthogonal(d_w, d_z, &mut rng);
        Self {
            a1,
            a2,
            bias: DVector::zeros(d_w),
            seed,
        }
    }

    pub fn d_z(&self) -> usize {
        self.a1.ncols()
    }

    pub fn d_w(&self) -> usize {
        self.a2.nrows()
    }

    pub fn map(&self, z: &[f64]) -> Vec<f64> {
        let h = (&self.a1 * DVector::from_column_slice(z)).map(f64::tanh);
        (&self.a2 * h + &self.bias).as_slice().to_vec()
    }

    /// `(∂w/∂z)ᵀ · gw` at `z`.
    pub fn vjp(&self, z: &[f64], gw: &[f64]) -> Vec<f64> {
        let h = (&self.a1 * DVector::from_column_slice(z)).map(f64::tanh);
        let gh = self.a2.tr_mul(&DVector::from_column_slice(gw));
        let pre = gh.zip_map(&h, |g, t| g * (1.0 - t * t));
        self.a1.tr_mul(&pre).as_slice().to_vec()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorModel {
    pub side: usize,
    /// Flattened interleaved RGB mean texture.
    pub mean: Vec<f64>,
    /// Orthonormal basis, one contiguous `S·S·3` vector per latent dimension.
    pub basis: Vec<f64>,
    /// Per-dimension scales, positive and non-increasing.
    pub sigma: Vec<f64>,
    pub mapper: Mapper,
    /// Validity mask given to generated textures.
    pub chart: ChartMask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitParams {
    pub d_w: usize,
    pub d_z: usize,
    pub mapper_seed: u64,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            d_w: 64,
            d_z: 64,
            mapper_seed: 42,
        }
    }
}

/// Memory budget for one block of corpus textures during fitting.
const BLOCK_BYTES: usize = 256 << 20;

fn blocks(n: usize, dim: usize) -> Vec<std::ops::Range<usize>> {
    let b = (BLOCK_BYTES / (8 * dim.max(1))).clamp(1, n.max(1));
    (0..n.div_ceil(b)).map(|k| k * b..((k + 1) * b).min(n)).collect()
}

fn load_block<C: Corpus + ?Sized>(corpus: &C, range: std::ops::Range<usize>, side: usize) -> Result<Vec<Vec<f64>>> {
    let start = range.start;
    par::map(range.len(), |k| corpus.texture(start + k))
        .into_iter()
        .map(|t| {
            let t = t?;
            if t.side != side {
                return Err(Error::ShapeMismatch(format!(
                    "corpus texture of side {} in a corpus of side {side}",
                    t.side
                )));
            }
            Ok(t.data)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Principal-component model of a corpus via the snapshot Gram matrix.
pub fn fit_pca<C: Corpus + ?Sized>(corpus: &C, params: &FitParams) -> Result<GeneratorModel> {
    let n = corpus.len();
    let side = corpus.side();
    if params.d_w == 0 || params.d_z == 0 {
        return Err(Error::InvalidArgument("latent dimensions must be positive".into()));
    }
    if n < 2 || side == 0 {
        return Err(Error::InvalidArgument(format!("corpus of {n} textures cannot be fitted")));
    }
    let dim = side * side * 3;
    let ranges = blocks(n, dim);

    let mut mean = vec![0.0; dim];
    for r in &ranges {
        for x in load_block(corpus, r.clone(), side)? {
            mean.iter_mut().zip(&x).for_each(|(m, v)| *m += v);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = |r: &std::ops::Range<usize>| -> Result<Vec<Vec<f64>>> {
        let mut b = load_block(corpus, r.clone(), side)?;
        for x in &mut b {
            x.iter_mut().zip(&mean).for_each(|(v, m)| *v -= m);
        }
        Ok(b)
    };

    let mut gram = DMatrix::<f64>::zeros(n, n);
    for (bi, ri) in ranges.iter().enumerate() {
        let xi = centered(ri)?;
        for rj in &ranges[bi..] {
            let xj_owned;
            let xj = if rj == ri {
                &xi
            } else {
                xj_owned = centered(rj)?;
                &xj_owned
            };
            let pairs = ri.len() * rj.len();
            let vals = par::map(pairs, |p| dot(&xi[p / rj.len()], &xj[p % rj.len()]));
            for (p, v) in vals.into_iter().enumerate() {
                let (i, j) = (ri.start + p / rj.len(), rj.start + p % rj.len());
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
        }
    }

    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let achievable = order
        .iter()
        .filter(|&&k| top > 0.0 && eig.eigenvalues[k] > 1e-12 * top)
        .count();
    if achievable < params.d_w {
        return Err(Error::RankDeficient {
            requested: params.d_w,
            achievable,
        });
    }
    let d = params.d_w;
    let singular: Vec<f64> = order[..d].iter().map(|&k| eig.eigenvalues[k].sqrt()).collect();

    // Basis vectors b_k = Xᵀ v_k / s_k, accumulated block by block.
    let mut basis = vec![0.0; d * dim];
    for r in &ranges {
        let x = centered(r)?;
        par::for_each_chunk(&mut basis, dim, |k, col| {
            let v = eig.eigenvectors.column(order[k]);
            for (i, xi) in r.clone().zip(&x) {
                let c = v[i] / singular[k];
                col.iter_mut().zip(xi).for_each(|(b, x)| *b += c * x);
            }
        });
    }
    orthonormalize(&mut basis, dim);
    for col in basis.chunks_mut(dim) {
        let (imax, _) = col
            .iter()
            .enumerate()
            .fold((0, 0.0), |(bi, bv), (i, &v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
        if col[imax] < 0.0 {
            col.iter_mut().for_each(|v| *v = -*v);
        }
    }

    let scale = 1.0 / ((n - 1) as f64).sqrt();
    Ok(GeneratorModel {
        side,
        mean,
        basis,
        sigma: singular.iter().map(|s| s * scale).collect(),
        mapper: Mapper::new(params.d_z, d, params.mapper_seed),
        chart: ChartMask::full(side),
    })
}

fn long_dot(a: &[f64], b: &[f64]) -> f64 {
    par::sum(a.len(), |i| a[i] * b[i])
}

/// Two passes of modified Gram–Schmidt over contiguous columns.
fn orthonormalize(basis: &mut [f64], dim: usize) {
    let d = basis.len() / dim;
    for _ in 0..2 {
        for k in 0..d {
            let (done, rest) = basis.split_at_mut(k * dim);
            let col = &mut rest[..dim];
            for prev in done.chunks(dim) {
                let c = long_dot(prev, col);
                col.iter_mut().zip(prev).for_each(|(v, p)| *v -= c * p);
            }
            let norm = long_dot(col, col).sqrt();
            col.iter_mut().for_each(|v| *v /= norm);
        }
    }
}

impl GeneratorModel {
    pub fn d_w(&self) -> usize {
        self.sigma.len()
    }

    pub fn d_z(&self) -> usize {
        self.mapper.d_z()
    }

    pub fn dim(&self) -> usize {
        self.side * self.side * 3
    }

    pub fn basis_vector(&self, k: usize) -> &[f64] {
        &self.basis[k * self.dim()..(k + 1) * self.dim()]
    }

    /// `μ + B · c` for a coefficient vector `c` in the basis.
    fn synthesize(&self, coeff: &[f64]) -> Vec<f64> {
        self.combine(self.mean.clone(), coeff)
    }

    /// `base + B · c`.
    fn combine(&self, base: Vec<f64>, coeff: &[f64]) -> Vec<f64> {
        let dim = self.dim();
        let mut out = base;
        par::for_each_chunk(&mut out, 4096, |c, chunk| {
            let lo = c * 4096;
            for (k, &a) in coeff.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let col = &self.basis[k * dim + lo..k * dim + lo + chunk.len()];
                chunk.iter_mut().zip(col).for_each(|(o, b)| *o += a * b);
            }
        });
        out
    }

    /// `Bᵀ · v`.
    fn analyze(&self, v: &[f64]) -> Vec<f64> {
        (0..self.d_w()).map(|k| long_dot(self.basis_vector(k), v)).collect()
    }

    fn check_w(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.d_w() {
            return Err(Error::ShapeMismatch(format!(
                "latent has {} entries, model expects {}",
                w.len(),
                self.d_w()
            )));
        }
        if !w.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite latent".into()));
        }
        Ok(())
    }

    /// `T = μ + B · diag(σ) · w`, unclamped, masked by the chart.
    pub fn gen_texture(&self, w: &[f64]) -> Result<TextureMap> {
        self.check_w(w)?;
        let coeff: Vec<f64> = w.iter().zip(&self.sigma).map(|(w, s)| w * s).collect();
        TextureMap::from_parts(self.side, self.synthesize(&coeff), self.chart.as_weights())
    }

    /// `diag(σ) · Bᵀ · cotangent`.
    pub fn gen_vjp(&self, cotangent: &[f64]) -> Result<Vec<f64>> {
        if cotangent.len() != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "cotangent has {} entries, model expects {}",
                cotangent.len(),
                self.dim()
            )));
        }
        Ok(self.analyze(cotangent).iter().zip(&self.sigma).map(|(g, s)| g * s).collect())
    }

    /// Least-squares latent of a texture: `diag(σ)⁻¹ · Bᵀ · (T − μ)`.
    pub fn encode(&self, texture: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = texture.iter().zip(&self.mean).map(|(t, m)| t - m).collect();
        self.analyze(&centered).iter().zip(&self.sigma).map(|(c, s)| c / s).collect()
    }

    /// Orthogonal projection onto the affine span `μ + range(B)`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(t, m)| t - m).collect();
        self.synthesize(&self.analyze(&centered))
    }

    /// Orthogonal projection `B · Bᵀ · v` onto the basis span.
    pub fn project_centered(&self, v: &[f64]) -> Vec<f64> {
        self.combine(vec![0.0; self.dim()], &self.analyze(v))
    }

    /// Standard normal pre-mapper latent drawn from `seed`.
    pub fn sample_z(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.d_z()).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    pub fn map_z_to_w(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.d_z() {
            return Err(Error::ShapeMismatch(format!(
                "z has {} entries, model expects {}",
                z.len(),
                self.d_z()
            )));
        }
        Ok(self.mapper.map(z))
    }

    pub fn map_vjp(&self, z: &[f64], gw: &[f64]) -> Vec<f64> {
        self.mapper.vjp(z, gw)
    }
}
