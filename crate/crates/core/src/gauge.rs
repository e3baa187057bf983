//! Poisson solves, the reference potential and London-gauge projection.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CellField, EdgeField, Grid, NodeField};
use crate::linalg::pcg;
use crate::operators::{curl, div, grad, node_outflux, rot_cells};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PoissonOptions {
    fn default() -> Self {
        PoissonOptions {
            tol: 1e-12,
            max_iter: 20_000,
        }
    }
}

impl PoissonOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol <= 1e-4) {
            return Err(Error::Spec(format!("poisson tol must lie in (0, 1e-4], got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Spec("poisson max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// `Δu = rhs` in the interior with `u = 0` on `∂Ω` (5-point Laplacian).
pub fn poisson_dirichlet(rhs: &NodeField, opts: &PoissonOptions) -> Result<NodeField> {
    opts.validate()?;
    let g = *rhs.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let (mx, my) = (nx - 1, ny - 1);
    let (cx, cy) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
    let idx = |i: usize, j: usize| (j - 1) * mx + (i - 1);
    // Solve -Δu = -rhs, which is SPD.
    let apply = |u: &[f64], out: &mut [f64]| {
        for j in 1..=my {
            for i in 1..=mx {
                let c = u[idx(i, j)];
                let l = if i > 1 { u[idx(i - 1, j)] } else { 0.0 };
                let r = if i < mx { u[idx(i + 1, j)] } else { 0.0 };
                let d = if j > 1 { u[idx(i, j - 1)] } else { 0.0 };
                let t = if j < my { u[idx(i, j + 1)] } else { 0.0 };
                out[idx(i, j)] = cx * (2.0 * c - l - r) + cy * (2.0 * c - d - t);
            }
        }
    };
    let mut b = vec![0.0; mx * my];
    for j in 1..=my {
        for i in 1..=mx {
            b[idx(i, j)] = -rhs.at(i, j);
        }
    }
    let mut x = vec![0.0; mx * my];
    let inv = vec![1.0 / (2.0 * (cx + cy)); mx * my];
    pcg(apply, &b, &mut x, &inv, opts.tol, opts.max_iter)?;
    let mut out = NodeField::zeros(g);
    for j in 1..=my {
        for i in 1..=mx {
            out[g.node(i, j)] = x[idx(i, j)];
        }
    }
    Ok(out)
}

/// Symmetric node stiffness operator `χ ↦ -outflux(grad χ)`.
#[cfg(test)]
fn neumann_apply(g: &Grid, x: &[f64], out: &mut [f64]) {
    let (nx, ny) = (g.nx(), g.ny());
    let (hx, hy) = (g.hx(), g.hy());
    for j in 0..=ny {
        let wy = hy * if j == 0 || j == ny { 0.5 } else { 1.0 };
        for i in 0..=nx {
            let wx = hx * if i == 0 || i == nx { 0.5 } else { 1.0 };
            let c = x[g.node(i, j)];
            let mut v = 0.0;
            if i < nx {
                v += wy * (c - x[g.node(i + 1, j)]) / hx;
            }
            if i > 0 {
                v += wy * (c - x[g.node(i - 1, j)]) / hx;
            }
            if j < ny {
                v += wx * (c - x[g.node(i, j + 1)]) / hy;
            }
            if j > 0 {
                v += wx * (c - x[g.node(i, j - 1)]) / hy;
            }
            out[g.node(i, j)] = v;
        }
    }
}

/// `Δχ = rhs` in `Ω`, `∂χ/∂ν = flux` on `∂Ω` (outward normal; only boundary
/// nodes of `flux` are read), in the finite-volume form
/// `outflux(grad χ) = area·rhs − boundary_length·flux` per dual cell.
/// The solution has zero mean.
pub fn poisson_neumann(
    rhs: &NodeField,
    flux: &NodeField,
    opts: &PoissonOptions,
) -> Result<NodeField> {
    opts.validate()?;
    let g = *rhs.grid();
    g.check_same(flux.grid(), "neumann flux")?;
    let mut source = 0.0;
    let mut boundary = 0.0;
    let mut scale = 0.0;
    let mut b = vec![0.0; g.num_nodes()];
    for (i, j) in g.nodes() {
        let s = g.node_area(i, j) * rhs.at(i, j);
        let f = g.boundary_length(i, j) * flux.at(i, j);
        source += s;
        boundary += f;
        scale += s.abs() + f.abs();
        b[g.node(i, j)] = f - s;
    }
    if (source - boundary).abs() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Compatibility {
            source_integral: source,
            flux_integral: boundary,
        });
    }
    // Remove the (tiny) incompatible part so the singular system is consistent.
    let shift = (boundary - source) / g.num_nodes() as f64;
    b.iter_mut().for_each(|v| *v -= shift);
    let mut x = vec![0.0; g.num_nodes()];
    solve_neumann(&g, &b, &mut x);
    let mut out = NodeField::from_vec(g, x)?;
    let m = out.mean();
    out.as_mut_slice().iter_mut().for_each(|v| *v -= m);
    Ok(out)
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// Direct solve of the node stiffness system. With half-weight boundary dual
/// cells the operator is `Kx⊗Wy + Wx⊗Ky`, and `Wx⁻¹Kx` is the reflected
/// Neumann Laplacian whose eigenvectors are `cos(πki/n)`. So a cosine
/// transform (DCT-I) per axis diagonalises it; the constant mode is dropped.
pub(crate) fn solve_neumann(g: &Grid, b: &[f64], x: &mut [f64]) {
    let (nx, ny) = (g.nx(), g.ny());
    let mut u: Vec<f64> = g.nodes().map(|(i, j)| b[g.node(i, j)] / g.node_area(i, j)).collect();
    let lx: Vec<f64> = (0..=nx)
        .map(|k| (2.0 - 2.0 * (PI * k as f64 / nx as f64).cos()) / (g.hx() * g.hx()))
        .collect();
    let ly: Vec<f64> = (0..=ny)
        .map(|k| (2.0 - 2.0 * (PI * k as f64 / ny as f64).cos()) / (g.hy() * g.hy()))
        .collect();
    cosine_sums(&mut u, nx, ny);
    let c = 4.0 / (nx * ny) as f64;
    for j in 0..=ny {
        for i in 0..=nx {
            let l = lx[i] + ly[j];
            u[g.node(i, j)] = if l > 0.0 { c * u[g.node(i, j)] / l } else { 0.0 };
        }
    }
    cosine_sums(&mut u, nx, ny);
    x.copy_from_slice(&u);
}

/// In place along both axes: `S[r]_k = Σ_i e_i r_i cos(πki/n)` with
/// `e_i = ½` at the two ends, from the FFT of the even extension.
fn cosine_sums(u: &mut [f64], nx: usize, ny: usize) {
    cosine_pass(u, ny + 1, nx, |l, i| l * (nx + 1) + i);
    cosine_pass(u, nx + 1, ny, |l, j| j * (nx + 1) + l);
}

/// One axis of [`cosine_sums`] over `lines` lines of `n + 1` points. The FFT
/// of an even real sequence is real, so two lines share one complex FFT.
fn cosine_pass(u: &mut [f64], lines: usize, n: usize, at: impl Fn(usize, usize) -> usize) {
    let m = 2 * n;
    let pairs = lines.div_ceil(2);
    let mut buf = vec![Complex64::new(0.0, 0.0); pairs * m];
    for (p, chunk) in buf.chunks_mut(m).enumerate() {
        let (a, b) = (2 * p, 2 * p + 1);
        for i in 0..=n {
            let v = Complex64::new(u[at(a, i)], if b < lines { u[at(b, i)] } else { 0.0 });
            chunk[i] = v;
            if i > 0 && i < n {
                chunk[m - i] = v;
            }
        }
    }
    plan(m, false).process(&mut buf);
    for (p, chunk) in buf.chunks(m).enumerate() {
        let (a, b) = (2 * p, 2 * p + 1);
        for k in 0..=n {
            u[at(a, k)] = 0.5 * chunk[k].re;
            if b < lines {
                u[at(b, k)] = 0.5 * chunk[k].im;
            }
        }
    }
}

/// Applies `f(L)` to a cell field in place, where `L` is the cell Laplacian
/// with ghost reflection `u = 0` across every side. Its eigenvectors are
/// `sin(π(k+1)(i+½)/n)` per axis (DST-II).
pub(crate) fn cell_filter(g: &Grid, u: &mut [f64], f: impl Fn(f64) -> f64) {
    let (nx, ny) = (g.nx(), g.ny());
    let eig = |n: usize, h: f64| -> Vec<f64> {
        (0..n)
            .map(|k| (2.0 - 2.0 * (PI * (k + 1) as f64 / n as f64).cos()) / (h * h))
            .collect()
    };
    let norm = |k: usize, n: usize| if k + 1 == n { n as f64 } else { 0.5 * n as f64 };
    let (lx, ly) = (eig(nx, g.hx()), eig(ny, g.hy()));
    sine_pass(u, ny, nx, false, |l, i| l * nx + i);
    sine_pass(u, nx, ny, false, |l, j| j * nx + l);
    for j in 0..ny {
        for i in 0..nx {
            u[j * nx + i] *= f(lx[i] + ly[j]) / (norm(i, nx) * norm(j, ny));
        }
    }
    sine_pass(u, ny, nx, true, |l, i| l * nx + i);
    sine_pass(u, nx, ny, true, |l, j| j * nx + l);
}

/// In place along `lines` lines of `n` cells: `y_k = Σ_i x_i sin(π(k+1)(i+½)/n)`,
/// or its transpose when `transpose`, from one inverse FFT of length `2n`.
fn sine_pass(u: &mut [f64], lines: usize, n: usize, transpose: bool, at: impl Fn(usize, usize) -> usize) {
    let m = 2 * n;
    let tw: Vec<Complex64> = (0..=n).map(|k| Complex64::cis(PI * k as f64 / m as f64)).collect();
    let mut buf = vec![Complex64::new(0.0, 0.0); lines * m];
    for (l, chunk) in buf.chunks_mut(m).enumerate() {
        if transpose {
            for k in 1..=n {
                chunk[k] = u[at(l, k - 1)] * tw[k];
            }
        } else {
            for i in 0..n {
                chunk[i] = Complex64::new(u[at(l, i)], 0.0);
            }
        }
    }
    plan(m, true).process(&mut buf);
    for (l, chunk) in buf.chunks(m).enumerate() {
        if transpose {
            for i in 0..n {
                u[at(l, i)] = chunk[i].im;
            }
        } else {
            for k in 1..=n {
                u[at(l, k - 1)] = (tw[k] * chunk[k]).im;
            }
        }
    }
}

/// Stream function on cells: `curl(rot u) = rhs` with `u = 0` on `∂Ω`
/// (ghost reflection across each side).
pub fn stream_function(rhs: &CellField, opts: &PoissonOptions) -> Result<CellField> {
    opts.validate()?;
    let g = *rhs.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let (cx, cy) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
    let face_x = |i: usize| -> f64 {
        // Weight of the face between cell column i-1 and i (i in 0..=nx).
        if i == 0 || i == nx { 2.0 * cx } else { cx }
    };
    let face_y = |j: usize| -> f64 {
        if j == 0 || j == ny { 2.0 * cy } else { cy }
    };
    let apply = |u: &[f64], out: &mut [f64]| {
        for j in 0..ny {
            for i in 0..nx {
                let c = u[g.cell(i, j)];
                let l = if i > 0 { u[g.cell(i - 1, j)] } else { 0.0 };
                let r = if i + 1 < nx { u[g.cell(i + 1, j)] } else { 0.0 };
                let d = if j > 0 { u[g.cell(i, j - 1)] } else { 0.0 };
                let t = if j + 1 < ny { u[g.cell(i, j + 1)] } else { 0.0 };
                out[g.cell(i, j)] = face_x(i) * (c - l)
                    + face_x(i + 1) * (c - r)
                    + face_y(j) * (c - d)
                    + face_y(j + 1) * (c - t);
            }
        }
    };
    let mut inv = vec![0.0; g.num_cells()];
    for (i, j) in g.cells() {
        inv[g.cell(i, j)] = 1.0 / (face_x(i) + face_x(i + 1) + face_y(j) + face_y(j + 1));
    }
    let b: Vec<f64> = rhs.as_slice().iter().map(|v| -v).collect();
    let mut x = vec![0.0; g.num_cells()];
    pcg(apply, &b, &mut x, &inv, opts.tol, opts.max_iter)?;
    CellField::from_vec(g, x)
}

/// Reference potential `F = ∇⊥u`, `Δu = 1`, `u|∂Ω = 0`: divergence-free with
/// vanishing normal trace by construction and `curl F = 1` up to the solve.
pub fn reference_potential(grid: &Grid) -> Result<EdgeField> {
    reference_potential_with(grid, &PoissonOptions::default())
}

pub fn reference_potential_with(grid: &Grid, opts: &PoissonOptions) -> Result<EdgeField> {
    let one = CellField::from_vec(*grid, vec![1.0; grid.num_cells()])?;
    let u = stream_function(&one, opts)?;
    Ok(rot_cells(&u))
}

/// Projects `A` onto the London gauge: `A' = A − grad χ` with
/// `Δχ = div A`, `∂χ/∂ν = A·ν = 0`.
pub fn london_project(a: &EdgeField, opts: &PoissonOptions) -> Result<EdgeField> {
    let (out, _) = london_project_with_gauge(a, opts)?;
    Ok(out)
}

/// As [`london_project`], also returning the gauge function `χ`.
pub fn london_project_with_gauge(
    a: &EdgeField,
    opts: &PoissonOptions,
) -> Result<(EdgeField, NodeField)> {
    opts.validate()?;
    let g = *a.grid();
    let mut b = vec![0.0; g.num_nodes()];
    for (i, j) in g.nodes() {
        b[g.node(i, j)] = -node_outflux(a, i, j);
    }
    // Exact zero sum up to rounding; remove it.
    let shift = b.iter().sum::<f64>() / b.len() as f64;
    b.iter_mut().for_each(|v| *v -= shift);
    let mut x = vec![0.0; g.num_nodes()];
    solve_neumann(&g, &b, &mut x);
    let mut chi = NodeField::from_vec(g, x)?;
    let m = chi.mean();
    chi.as_mut_slice().iter_mut().for_each(|v| *v -= m);
    let out = a.sub(&grad(&chi))?;
    Ok((out, chi))
}

/// Max over nodes of `|div A|`.
pub fn max_div(a: &EdgeField) -> f64 {
    div(a).max_abs()
}

/// Max over cells of `|curl A − 1|`, optionally restricted to interior cells.
pub fn max_curl_defect(a: &EdgeField, interior_only: bool) -> f64 {
    let g = *a.grid();
    let c = curl(a);
    g.cells()
        .filter(|&(i, j)| !interior_only || (i > 0 && j > 0 && i + 1 < g.nx() && j + 1 < g.ny()))
        .map(|(i, j)| (c.at(i, j) - 1.0).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::interpolate_edge;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cosine_solve_inverts_the_stiffness_operator() {
        for (nx, ny, lx, ly) in [(4, 4, 1.0, 1.0), (12, 7, 2.0, 0.5), (33, 16, 1.0, 3.0)] {
            let g = Grid::new(nx, ny, lx, ly).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(nx as u64);
            let mut b: Vec<f64> = (0..g.num_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let m = b.iter().sum::<f64>() / b.len() as f64;
            b.iter_mut().for_each(|v| *v -= m);
            let mut x = vec![0.0; b.len()];
            solve_neumann(&g, &b, &mut x);
            let mut r = vec![0.0; b.len()];
            neumann_apply(&g, &x, &mut r);
            let err = r.iter().zip(&b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
            assert!(err < 1e-11, "{nx}x{ny}: {err:e}");
        }
    }

    fn random_edge(g: Grid, seed: u64) -> EdgeField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = (0..g.num_xedges()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = (0..g.num_yedges()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        EdgeField::from_vecs(g, x, y).unwrap()
    }

    #[test]
    fn sine_filter_inverts_the_cell_laplacian() {
        for (nx, ny, lx, ly) in [(4, 4, 1.0, 1.0), (12, 7, 2.0, 0.5), (33, 16, 1.0, 3.0)] {
            let g = Grid::new(nx, ny, lx, ly).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(nx as u64);
            let b: Vec<f64> = (0..g.num_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut u = b.clone();
            cell_filter(&g, &mut u, |l| 1.0 / l);
            let (cx, cy) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
            let at = |i: isize, j: isize| {
                if i < 0 || j < 0 || i >= nx as isize || j >= ny as isize {
                    None
                } else {
                    Some(u[g.cell(i as usize, j as usize)])
                }
            };
            for (i, j) in g.cells() {
                let c = u[g.cell(i, j)];
                let (i, j) = (i as isize, j as isize);
                let mut lap = 0.0;
                for (di, dj, w) in [(-1, 0, cx), (1, 0, cx), (0, -1, cy), (0, 1, cy)] {
                    lap += match at(i + di, j + dj) {
                        Some(v) => w * (c - v),
                        None => 2.0 * w * c,
                    };
                }
                let r = (lap - b[g.cell(i as usize, j as usize)]).abs();
                assert!(r < 1e-10, "{nx}x{ny} at ({i},{j}): {r}");
            }
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let g = Grid::square(16, 1.0).unwrap();
        let u = poisson_dirichlet(&NodeField::zeros(g), &PoissonOptions::default()).unwrap();
        assert_eq!(u.max_abs(), 0.0);
    }

    #[test]
    fn dirichlet_manufactured_solution_is_second_order() {
        let mut errs = vec![];
        for n in [16, 32, 64] {
            let g = Grid::new(n, n, 1.0, 1.0).unwrap();
            let exact = |x: f64, y: f64| (PI * x).sin() * (PI * y).sin();
            let rhs = NodeField::from_fn(g, |x, y| -2.0 * PI * PI * exact(x, y));
            let u = poisson_dirichlet(&rhs, &PoissonOptions::default()).unwrap();
            let e = g
                .nodes()
                .map(|(i, j)| {
                    let (x, y) = g.node_pos(i, j);
                    (u.at(i, j) - exact(x, y)).abs()
                })
                .fold(0.0, f64::max);
            errs.push(e);
        }
        assert!(errs[0] / errs[1] > 3.5 && errs[1] / errs[2] > 3.5, "{errs:?}");
    }

    #[test]
    fn neumann_rejects_incompatible_data() {
        let g = Grid::square(8, 1.0).unwrap();
        let rhs = NodeField::from_vec(g, vec![1.0; g.num_nodes()]).unwrap();
        let r = poisson_neumann(&rhs, &NodeField::zeros(g), &PoissonOptions::default());
        assert!(matches!(r, Err(Error::Compatibility { .. })));
    }

    #[test]
    fn neumann_manufactured_solution() {
        // χ = cos(πx)cos(πy): Δχ = -2π²χ, ∂χ/∂ν = 0.
        let mut errs = vec![];
        for n in [16, 32] {
            let g = Grid::square(n, 1.0).unwrap();
            let exact = |x: f64, y: f64| (PI * x).cos() * (PI * y).cos();
            let rhs = NodeField::from_fn(g, |x, y| -2.0 * PI * PI * exact(x, y));
            // Discrete compatibility: subtract the quadrature mean.
            let m = rhs.mean();
            let rhs = NodeField::from_fn(g, |x, y| -2.0 * PI * PI * exact(x, y) - m);
            let u = poisson_neumann(&rhs, &NodeField::zeros(g), &PoissonOptions::default()).unwrap();
            let ex = NodeField::from_fn(g, exact);
            let em = ex.mean();
            let e = g
                .nodes()
                .map(|(i, j)| (u.at(i, j) - (ex.at(i, j) - em)).abs())
                .fold(0.0, f64::max);
            errs.push(e);
        }
        assert!(errs[1] < 1e-2 && errs[0] / errs[1] > 3.0, "{errs:?}");
    }

    #[test]
    fn reference_potential_properties() {
        let g = Grid::square(32, 2.0).unwrap();
        let f = reference_potential(&g).unwrap();
        assert!(max_div(&f) < 1e-9);
        assert!(max_curl_defect(&f, false) < 1e-8);
        let (u, v) = interpolate_edge(&f, 1.0, 1.0).unwrap();
        assert!(u.abs() < 1e-12 && v.abs() < 1e-12);
        // Fixed point of the projection.
        let p = london_project(&f, &PoissonOptions::default()).unwrap();
        assert!(p.sub(&f).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn projection_of_gradient_vanishes() {
        let g = Grid::new(20, 16, 1.25, 1.0).unwrap();
        let chi = NodeField::from_fn(g, |x, y| (2.0 * x).sin() + x * y * y);
        let a = grad(&chi);
        let p = london_project(&a, &PoissonOptions::default()).unwrap();
        assert!(p.max_abs() < 1e-9, "{}", p.max_abs());
    }

    #[test]
    fn projection_preserves_curl_and_kills_div() {
        let g = Grid::square(32, 1.0).unwrap();
        let a = random_edge(g, 11);
        let p = london_project(&a, &PoissonOptions::default()).unwrap();
        let (c0, c1) = (curl(&a), curl(&p));
        let scale = c0.max_abs();
        let dev = c0
            .as_slice()
            .iter()
            .zip(c1.as_slice())
            .fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
        assert!(dev <= 1e-14 * scale.max(1.0) * 10.0, "dev={dev} scale={scale}");
        assert!(max_div(&p) < 1e-10, "{}", max_div(&p));
        let pp = london_project(&p, &PoissonOptions::default()).unwrap();
        assert!(pp.sub(&p).unwrap().max_abs() < 1e-10);
    }
}
