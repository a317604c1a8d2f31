//! Conjugate gradient for symmetric positive definite operators.

use crate::par;

/// A symmetric linear operator applied matrix-free.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// Operator diagonal, used by the Jacobi preconditioner.
    fn diagonal(&self) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    /// Stop when `‖b − Ax‖ ≤ tolerance · ‖b‖`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub jacobi: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CgError {
    NotConverged { iterations: usize, residual: f64 },
    /// `pᵀAp ≤ 0`: the operator is singular or indefinite on the Krylov space.
    Breakdown { iteration: usize },
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    if a.len() < 32_768 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    } else {
        par::sum(a.len(), |i| a[i] * b[i])
    }
}

/// Solves `A x = b` starting from the contents of `x` (warm start).
pub fn conjugate_gradient<A: LinearOperator + ?Sized>(
    op: &A,
    b: &[f64],
    x: &mut [f64],
    opts: &CgOptions,
) -> Result<CgReport, CgError> {
    conjugate_gradient_with(op, b, x, opts, None)
}

/// Preconditioner callback: writes `M⁻¹ r` into `z`.
pub type Preconditioner<'a> = &'a (dyn Fn(&[f64], &mut [f64]) + Sync);

/// [`conjugate_gradient`] with an explicit preconditioner, which takes
/// precedence over `opts.jacobi`.
pub fn conjugate_gradient_with<A: LinearOperator + ?Sized>(
    op: &A,
    b: &[f64],
    x: &mut [f64],
    opts: &CgOptions,
    custom: Option<Preconditioner<'_>>,
) -> Result<CgReport, CgError> {
    let n = op.dim();
    assert_eq!(b.len(), n);
    assert_eq!(x.len(), n);
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgReport {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let inv_diag: Option<Vec<f64>> = (opts.jacobi && custom.is_none()).then(|| {
        op.diagonal()
            .into_iter()
            .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
            .collect()
    });
    let precondition = |r: &[f64], z: &mut [f64]| match (custom, &inv_diag) {
        (Some(f), _) => f(r, z),
        (None, Some(d)) => z.iter_mut().zip(r.iter().zip(d)).for_each(|(z, (r, d))| *z = r * d),
        (None, None) => z.copy_from_slice(r),
    };

    let mut r = vec![0.0; n];
    op.apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut rel = dot(&r, &r).sqrt() / b_norm;
    if rel <= opts.tolerance {
        return Ok(CgReport {
            iterations: 0,
            relative_residual: rel,
        });
    }
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=opts.max_iterations {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(CgError::Breakdown { iteration: it });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = dot(&r, &r).sqrt() / b_norm;
        if rel <= opts.tolerance {
            return Ok(CgReport {
                iterations: it,
                relative_residual: rel,
            });
        }
        precondition(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(CgError::NotConverged {
        iterations: opts.max_iterations,
        residual: rel,
    })
}
