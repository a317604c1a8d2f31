//! Linear multi-scale feature extractor used by the perceptual loss term.
//!
//! Each pyramid level holds three planes (intensity, horizontal gradient,
//! vertical gradient). Level 0 is the input intensity; every further level is
//! the previous intensity blurred with a σ = 1 Gaussian and decimated by two.

use crate::{par, Error, Image, Result};

pub const LEVELS: usize = 3;
const SIGMA: f64 = 1.0;
const RADIUS: usize = 3;

fn kernel() -> [f64; 2 * RADIUS + 1] {
    let mut k = [0.0; 2 * RADIUS + 1];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - RADIUS as f64;
        *v = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    k
}

/// Sizes of the pyramid levels for a `width`×`height` input.
pub fn level_sizes(width: usize, height: usize) -> Vec<(usize, usize)> {
    let mut sizes = vec![(width, height)];
    for _ in 1..LEVELS {
        let (w, h) = *sizes.last().unwrap();
        sizes.push((w.div_ceil(2), h.div_ceil(2)));
    }
    sizes
}

/// Length of the flattened feature vector.
pub fn feature_len(width: usize, height: usize) -> usize {
    level_sizes(width, height).iter().map(|(w, h)| 3 * w * h).sum()
}

/// Offset of level `l` in the flattened feature vector. Each level stores its
/// intensity, x-gradient and y-gradient planes consecutively.
pub fn level_offset(width: usize, height: usize, level: usize) -> usize {
    level_sizes(width, height)[..level].iter().map(|(w, h)| 3 * w * h).sum()
}

// Blur along one axis with weights renormalized at the borders, so constants
// are preserved. `along_x` selects the axis.
fn blur_1d(src: &[f64], w: usize, h: usize, along_x: bool) -> Vec<f64> {
    let k = kernel();
    let n = if along_x { w } else { h };
    let mut out = vec![0.0; w * h];
    par::for_each_chunk(&mut out, w, |y, row| {
        for (x, o) in row.iter_mut().enumerate() {
            let pos = if along_x { x } else { y };
            let (mut acc, mut norm) = (0.0, 0.0);
            for (j, &kv) in k.iter().enumerate() {
                let q = pos as isize + j as isize - RADIUS as isize;
                if q < 0 || q >= n as isize {
                    continue;
                }
                let q = q as usize;
                let idx = if along_x { y * w + q } else { q * w + x };
                acc += kv * src[idx];
                norm += kv;
            }
            *o = acc / norm;
        }
    });
    out
}

// Transpose of `blur_1d`: every output gathers the inputs that read it.
fn blur_1d_adjoint(g: &[f64], w: usize, h: usize, along_x: bool) -> Vec<f64> {
    let k = kernel();
    let n = if along_x { w } else { h };
    let norm: Vec<f64> = (0..n)
        .map(|pos| {
            (0..k.len())
                .filter(|&j| {
                    let q = pos as isize + j as isize - RADIUS as isize;
                    q >= 0 && q < n as isize
                })
                .map(|j| k[j])
                .sum()
        })
        .collect();
    let mut out = vec![0.0; w * h];
    par::for_each_chunk(&mut out, w, |y, row| {
        for (x, o) in row.iter_mut().enumerate() {
            let q = if along_x { x } else { y };
            let mut acc = 0.0;
            for (j, &kv) in k.iter().enumerate() {
                // Output position `pos` read input `q` with tap j when q = pos + j − R.
                let pos = q as isize - j as isize + RADIUS as isize;
                if pos < 0 || pos >= n as isize {
                    continue;
                }
                let pos = pos as usize;
                let idx = if along_x { y * w + pos } else { pos * w + x };
                acc += kv / norm[pos] * g[idx];
            }
            *o = acc;
        }
    });
    out
}

fn decimate(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    let (w2, h2) = (w.div_ceil(2), h.div_ceil(2));
    let mut out = vec![0.0; w2 * h2];
    for y in 0..h2 {
        for x in 0..w2 {
            out[y * w2 + x] = src[2 * y * w + 2 * x];
        }
    }
    out
}

fn decimate_adjoint(g: &[f64], w: usize, h: usize) -> Vec<f64> {
    let (w2, h2) = (w.div_ceil(2), h.div_ceil(2));
    let mut out = vec![0.0; w * h];
    for y in 0..h2 {
        for x in 0..w2 {
            out[2 * y * w + 2 * x] = g[y * w2 + x];
        }
    }
    out
}

// Forward differences, zero on the last column (x) or row (y).
fn gradients(src: &[f64], w: usize, h: usize, out: &mut [f64]) {
    let (gx, gy) = out.split_at_mut(w * h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            gx[i] = if x + 1 < w { src[i + 1] - src[i] } else { 0.0 };
            gy[i] = if y + 1 < h { src[i + w] - src[i] } else { 0.0 };
        }
    }
}

fn gradients_adjoint(gx: &[f64], gy: &[f64], w: usize, h: usize, acc: &mut [f64]) {
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                acc[i + 1] += gx[i];
                acc[i] -= gx[i];
            }
            if y + 1 < h {
                acc[i + w] += gy[i];
                acc[i] -= gy[i];
            }
        }
    }
}

fn intensity(image: &Image) -> Vec<f64> {
    image.data.chunks_exact(3).map(|p| (p[0] + p[1] + p[2]) / 3.0).collect()
}

/// Flattened feature vector of `image`.
pub fn features(image: &Image) -> Vec<f64> {
    let sizes = level_sizes(image.width, image.height);
    let mut out = vec![0.0; feature_len(image.width, image.height)];
    let mut level = intensity(image);
    let mut offset = 0;
    for (l, &(w, h)) in sizes.iter().enumerate() {
        if l > 0 {
            let (pw, ph) = sizes[l - 1];
            let blurred = blur_1d(&blur_1d(&level, pw, ph, true), pw, ph, false);
            level = decimate(&blurred, pw, ph);
        }
        let n = w * h;
        out[offset..offset + n].copy_from_slice(&level);
        gradients(&level, w, h, &mut out[offset + n..offset + 3 * n]);
        offset += 3 * n;
    }
    out
}

/// Adjoint of [`features`]: image-shaped cotangent of a feature cotangent.
pub fn features_vjp(width: usize, height: usize, cotangent: &[f64]) -> Result<Image> {
    if cotangent.len() != feature_len(width, height) {
        return Err(Error::ShapeMismatch(format!(
            "feature cotangent has {} values, expected {}",
            cotangent.len(),
            feature_len(width, height)
        )));
    }
    let sizes = level_sizes(width, height);
    // Walk the pyramid coarse to fine, carrying the intensity cotangent.
    let mut carry: Vec<f64> = Vec::new();
    for l in (0..LEVELS).rev() {
        let (w, h) = sizes[l];
        let n = w * h;
        let off = level_offset(width, height, l);
        let mut g = cotangent[off..off + n].to_vec();
        gradients_adjoint(&cotangent[off + n..off + 2 * n], &cotangent[off + 2 * n..off + 3 * n], w, h, &mut g);
        if !carry.is_empty() {
            let (cw, ch) = sizes[l + 1];
            debug_assert_eq!(carry.len(), cw * ch);
            let up = decimate_adjoint(&carry, w, h);
            let up = blur_1d_adjoint(&blur_1d_adjoint(&up, w, h, false), w, h, true);
            g.iter_mut().zip(&up).for_each(|(a, b)| *a += b);
        }
        carry = g;
    }
    let data = carry.iter().flat_map(|&v| [v / 3.0; 3]).collect();
    Image::from_data(width, height, data)
}
