//! Matrix-free Krylov and small dense helpers.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    /// Final `‖b - Kx‖₂ / ‖b‖₂` (0 when `b = 0`).
    pub residual: f64,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned conjugate gradients for a symmetric positive
/// (semi-)definite operator. `x` holds the initial guess and the result.
///
/// Returns `Error::Precondition` if a direction of non-positive curvature
/// shows up, which callers use to detect indefinite shifted operators.
pub fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    inv_diag: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome {
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for k in 0..n {
        r[k] = b[k] - r[k];
    }
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut kp = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = norm2(&r) / bnorm;
    for it in 0..max_iter {
        if res <= tol {
            return Ok(CgOutcome {
                iterations: it,
                residual: res,
            });
        }
        apply(&p, &mut kp);
        let curv = dot(&p, &kp);
        if curv <= 0.0 {
            return Err(Error::Precondition(format!(
                "non-positive curvature {curv:e} in conjugate gradients"
            )));
        }
        let alpha = rz / curv;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * kp[k];
        }
        for k in 0..n {
            z[k] = r[k] * inv_diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
        res = norm2(&r) / bnorm;
    }
    if res <= tol {
        return Ok(CgOutcome {
            iterations: max_iter,
            residual: res,
        });
    }
    Err(Error::Solver {
        iterations: max_iter,
        residual: res,
    })
}

/// Number of eigenvalues of the symmetric tridiagonal matrix `(d, e)` that are
/// strictly less than `x` (Sturm count via the LDLᵀ pivots).
pub fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0f64;
    for k in 0..d.len() {
        let off = if k == 0 { 0.0 } else { e[k - 1] * e[k - 1] };
        q = d[k] - x - if k == 0 { 0.0 } else { off / q };
        if q == 0.0 {
            q = f64::EPSILON * (d[k].abs() + x.abs() + 1.0);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// The `k`-th smallest eigenvalue (0-based) of a symmetric tridiagonal matrix,
/// by bisection on the Sturm count to absolute tolerance `tol`.
pub fn tridiag_eigenvalue(d: &[f64], e: &[f64], k: usize, tol: f64) -> f64 {
    // Gershgorin bounds.
    let n = d.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if sturm_count(d, e, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}
