//! Preconditioned nonlinear conjugate gradients (Polak–Ribière-plus).

use serde::{Deserialize, Serialize};

use crate::linalg::dot;

pub trait Objective {
    fn dim(&self) -> usize;
    /// Value and gradient at `x`.
    fn value_grad(&self, x: &[f64], g: &mut [f64]) -> f64;
    /// Inverse of the diagonal metric used as preconditioner.
    fn inv_metric(&self) -> &[f64];
    /// Applies the preconditioner to `g`. It must be symmetric positive
    /// definite and may change only inside `hook`. Defaults to the diagonal
    /// metric.
    fn precondition(&self, g: &[f64], z: &mut [f64]) {
        for ((z, g), m) in z.iter_mut().zip(g).zip(self.inv_metric()) {
            *z = g * m;
        }
    }
    /// Scale dividing `sqrt(gᵀ M⁻¹ g)` in the stopping test.
    fn grad_scale(&self) -> f64 {
        1.0
    }
    /// Called every iteration before the line search. Returning `true` means
    /// `x` was moved by a value-preserving symmetry whose linear part has been
    /// applied to `tangent` (the search direction); the gradient is then
    /// recomputed and the conjugate recursion continues.
    fn hook(&mut self, _iteration: usize, _x: &mut [f64], _tangent: &mut [f64]) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NcgOptions {
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NcgStats {
    pub iterations: usize,
    pub converged: bool,
    /// `sqrt(gᵀ M⁻¹ g) / grad_scale` at the returned point.
    pub grad_norm: f64,
    pub value: f64,
    pub restarts: usize,
    /// True if the line search could make no further progress.
    pub stalled: bool,
}

const ARMIJO: f64 = 1e-4;
const WOLFE: f64 = 0.1;

fn axpy_into(out: &mut [f64], x: &[f64], a: f64, d: &[f64]) {
    for k in 0..out.len() {
        out[k] = x[k] + a * d[k];
    }
}

/// Minimises `obj` starting from `x` (overwritten with the result).
///
/// Energy decreases monotonically along accepted steps: every step satisfies
/// the Armijo condition, except that once rounding dominates the energy
/// difference a step that reduces the directional derivative without raising
/// the energy beyond `1e-14` relative is also accepted.
pub fn ncg<O: Objective>(obj: &mut O, x: &mut [f64], opts: &NcgOptions) -> NcgStats {
    let n = obj.dim();
    let mut g = vec![0.0; n];
    let mut f = obj.value_grad(x, &mut g);
    let minv = obj.inv_metric().to_vec();
    let scale = obj.grad_scale();
    let metric_norm = |g: &[f64]| g.iter().zip(&minv).map(|(a, m)| a * a * m).sum::<f64>();
    let mut z = vec![0.0; n];
    obj.precondition(&g, &mut z);
    let mut gz = dot(&g, &z);
    let mut gm = metric_norm(&g);
    let mut d: Vec<f64> = z.iter().map(|v| -v).collect();
    let mut xt = vec![0.0; n];
    let mut gt = vec![0.0; n];
    let mut alpha_prev = f64::NAN;
    let mut restarts = 0;
    let mut stalled = false;
    let mut steepest = true;
    let mut it = 0;
    let mut hooked = usize::MAX;

    loop {
        let gnorm = gm.sqrt() / scale;
        if gnorm <= opts.tol || it >= opts.max_iter || stalled {
            return NcgStats {
                iterations: it,
                converged: gnorm <= opts.tol,
                grad_norm: gnorm,
                value: f,
                restarts,
                stalled,
            };
        }
        if hooked != it && {
            hooked = it;
            obj.hook(it, x, &mut d)
        } {
            f = obj.value_grad(x, &mut g);
            obj.precondition(&g, &mut z);
            gz = dot(&g, &z);
            gm = metric_norm(&g);
            continue;
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            for k in 0..n {
                d[k] = -z[k];
            }
            slope = -gz;
            steepest = true;
            restarts += 1;
        }

        // Secant estimate of the minimiser along d from one trial gradient.
        let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let trial = if alpha_prev.is_finite() {
            alpha_prev
        } else {
            (0.1 / dmax.max(1e-300)).min(1.0)
        };
        axpy_into(&mut xt, x, trial, &d);
        let ft = obj.value_grad(&xt, &mut gt);
        let slope_t = dot(&gt, &d);
        let mut fnew = f64::NAN;
        let mut accepted = false;
        let mut alpha = trial;
        // A trial step that already meets Armijo and a strong Wolfe curvature
        // test is kept, which saves the second evaluation.
        if ft.is_finite() && ft <= f + ARMIJO * trial * slope && slope_t.abs() <= WOLFE * slope.abs() {
            fnew = ft;
            accepted = true;
        } else {
            alpha = if !ft.is_finite() {
                0.25 * trial
            } else if slope_t > slope {
                (trial * slope / (slope - slope_t)).clamp(0.05 * trial, 20.0 * trial)
            } else {
                4.0 * trial
            };
            for _ in 0..60 {
                axpy_into(&mut xt, x, alpha, &d);
                let fa = obj.value_grad(&xt, &mut gt);
                if fa.is_finite() && fa <= f + ARMIJO * alpha * slope {
                    fnew = fa;
                    accepted = true;
                    break;
                }
                if fa.is_finite()
                    && fa <= f + 1e-14 * (f.abs() + 1.0)
                    && dot(&gt, &d).abs() <= 0.9 * slope.abs()
                {
                    fnew = fa;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
        }
        if !accepted {
            if steepest {
                stalled = true;
            } else {
                for k in 0..n {
                    d[k] = -z[k];
                }
                steepest = true;
                restarts += 1;
                alpha_prev = f64::NAN;
            }
            continue;
        }
        x.copy_from_slice(&xt);
        f = fnew;
        alpha_prev = alpha;
        let mut znew = vec![0.0; n];
        obj.precondition(&gt, &mut znew);
        let gz_new = dot(&gt, &znew);
        let num: f64 = gt
            .iter()
            .zip(&znew)
            .zip(&z)
            .map(|((gn, zn), zo)| gn * (zn - zo))
            .sum();
        let beta = (num / gz).max(0.0);
        for k in 0..n {
            d[k] = -znew[k] + beta * d[k];
        }
        steepest = beta == 0.0;
        g.copy_from_slice(&gt);
        z = znew;
        gz = gz_new;
        gm = metric_norm(&g);
        it += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quad {
        diag: Vec<f64>,
        minv: Vec<f64>,
    }

    impl Objective for Quad {
        fn dim(&self) -> usize {
            self.diag.len()
        }
        fn value_grad(&self, x: &[f64], g: &mut [f64]) -> f64 {
            let mut f = 0.0;
            for k in 0..x.len() {
                let r = x[k] - 1.0;
                f += 0.5 * self.diag[k] * r * r;
                g[k] = self.diag[k] * r;
            }
            f
        }
        fn inv_metric(&self) -> &[f64] {
            &self.minv
        }
    }

    struct Rosen;
    impl Objective for Rosen {
        fn dim(&self) -> usize {
            2
        }
        fn value_grad(&self, x: &[f64], g: &mut [f64]) -> f64 {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        }
        fn inv_metric(&self) -> &[f64] {
            &[1.0, 1.0]
        }
    }

    #[test]
    fn solves_ill_conditioned_quadratic() {
        let diag: Vec<f64> = (0..200).map(|k| 1.0 + k as f64 * 10.0).collect();
        let mut q = Quad {
            minv: vec![1.0; 200],
            diag,
        };
        let mut x = vec![0.0; 200];
        let s = ncg(&mut q, &mut x, &NcgOptions { tol: 1e-10, max_iter: 5000 });
        assert!(s.converged, "{s:?}");
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-8));
    }

    #[test]
    fn preconditioner_makes_diagonal_trivial() {
        let diag: Vec<f64> = (0..50).map(|k| 10f64.powi(k % 7)).collect();
        let minv = diag.iter().map(|d| 1.0 / d).collect();
        let mut q = Quad { diag, minv };
        let mut x = vec![0.0; 50];
        let s = ncg(&mut q, &mut x, &NcgOptions { tol: 1e-12, max_iter: 50 });
        assert!(s.converged && s.iterations <= 5, "{s:?}");
    }

    #[test]
    fn minimises_rosenbrock() {
        let mut x = vec![-1.2, 1.0];
        let s = ncg(&mut Rosen, &mut x, &NcgOptions { tol: 1e-9, max_iter: 20_000 });
        assert!(s.converged, "{s:?}");
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6);
    }
}
