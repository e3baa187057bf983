//! Numerical checks of the magnetic integration-by-parts identity, the
//! inequality derived from it, and the curl transformation under boundary
//! coordinates.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chart::BoundaryChart;
use crate::error::{Error, Result};
use crate::gl::{residuals, GLState, SolveOptions};
use crate::grid::{Axis, CellField, ComplexField, EdgeField, Grid};
use crate::operators::{covariant_diff_with, curl, second_diag_with, second_mixed_with, Links};

/// States whose Neumann residual exceeds `BC_GATE_FACTOR · grad_tol` are
/// reported but excluded from pass/fail.
pub const BC_GATE_FACTOR: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IbpReport {
    /// `Σ_{j,k} ‖D_j D_k ψ‖²`.
    pub lhs: f64,
    /// `B²∫(curl A)²|ψ|² + ∫|𝓗ψ|² + 2B∫ curl A · Im(D₁ψ conj D₂ψ)`.
    pub rhs: f64,
    pub gap: f64,
    /// `ψ ≡ 0`.
    pub degenerate: bool,
    /// Neumann residual exceeded the gate.
    pub bc_flagged: bool,
}

/// Quantities shared by the identity and the inequality.
struct Pieces {
    grid: Grid,
    /// `Σ_{j,k} ‖D_j D_k ψ‖²`.
    second: f64,
    /// `‖𝓗ψ‖²`.
    h2: f64,
    /// Per cell: `|ψ|²` (corner average) and `Im(D₁ψ conj D₂ψ)` (corner average).
    rho: Vec<f64>,
    cross: Vec<f64>,
    /// Per node: `|Dψ|²` (average over incident edges).
    dpsi2: Vec<f64>,
    curl: CellField,
}

fn pieces(psi: &ComplexField, a: &EdgeField, b: f64) -> Result<Pieces> {
    let g = *psi.grid();
    g.check_same(a.grid(), "identity check")?;
    let links = Links::new(a, b);
    let w_node = |k: usize| {
        let (i, j) = g.node_ij(k);
        g.node_area(i, j)
    };
    let d11 = second_diag_with(psi, &links, Axis::X, &g);
    let d22 = second_diag_with(psi, &links, Axis::Y, &g);
    let d12 = second_mixed_with(psi, &links, Axis::X, &g);
    let d21 = second_mixed_with(psi, &links, Axis::Y, &g);
    let mut second = 0.0;
    let mut h2 = 0.0;
    for k in 0..g.num_nodes() {
        let w = w_node(k);
        second += w * (d11[k].norm_sqr() + d22[k].norm_sqr());
        h2 += w * (d11[k] + d22[k]).norm_sqr();
    }
    let ca = g.cell_area();
    for k in 0..g.num_cells() {
        second += ca * (d12[k].norm_sqr() + d21[k].norm_sqr());
    }

    let dx = covariant_diff_with(psi, &links, Axis::X, &g);
    let dy = covariant_diff_with(psi, &links, Axis::Y, &g);
    let mut rho = vec![0.0; g.num_cells()];
    let mut cross = vec![0.0; g.num_cells()];
    for (i, j) in g.cells() {
        let c = g.cell(i, j);
        rho[c] = 0.25
            * (psi.at(i, j).norm_sqr()
                + psi.at(i + 1, j).norm_sqr()
                + psi.at(i, j + 1).norm_sqr()
                + psi.at(i + 1, j + 1).norm_sqr());
        // Edge values transported to the lower-left node before pairing.
        let x0 = dx[g.xedge(i, j)];
        let x1 = links.y[g.yedge(i, j)] * dx[g.xedge(i, j + 1)];
        let y0 = dy[g.yedge(i, j)];
        let y1 = links.x[g.xedge(i, j)] * dy[g.yedge(i + 1, j)];
        let im = |p: Complex64, q: Complex64| (p * q.conj()).im;
        cross[c] = 0.25 * (im(x0, y0) + im(x0, y1) + im(x1, y0) + im(x1, y1));
    }
    let mut dpsi2 = vec![0.0; g.num_nodes()];
    for (i, j) in g.nodes() {
        let mut sx = 0.0;
        let mut nx = 0.0;
        if i > 0 {
            sx += dx[g.xedge(i - 1, j)].norm_sqr();
            nx += 1.0;
        }
        if i < g.nx() {
            sx += dx[g.xedge(i, j)].norm_sqr();
            nx += 1.0;
        }
        let mut sy = 0.0;
        let mut ny = 0.0;
        if j > 0 {
            sy += dy[g.yedge(i, j - 1)].norm_sqr();
            ny += 1.0;
        }
        if j < g.ny() {
            sy += dy[g.yedge(i, j)].norm_sqr();
            ny += 1.0;
        }
        dpsi2[g.node(i, j)] = sx / nx + sy / ny;
    }
    Ok(Pieces {
        grid: g,
        second,
        h2,
        rho,
        cross,
        dpsi2,
        curl: curl(a),
    })
}

/// Both sides of the identity for an arbitrary `(ψ, A, B)`.
pub fn ibp_sides(psi: &ComplexField, a: &EdgeField, b: f64) -> Result<(f64, f64)> {
    let p = pieces(psi, a, b)?;
    let ca = p.grid.cell_area();
    let mut rhs = p.h2;
    for k in 0..p.grid.num_cells() {
        let c = p.curl[k];
        rhs += ca * (b * b * c * c * p.rho[k] + 2.0 * b * c * p.cross[k]);
    }
    Ok((p.second, rhs))
}

fn relative_gap(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs).abs() / lhs.max(rhs).max(f64::MIN_POSITIVE)
}

/// Identity check on a state solved to `grad_tol`, with the Neumann residual gate.
pub fn ibp_identity(state: &GLState, grad_tol: f64) -> Result<IbpReport> {
    if state.psi.is_zero() {
        return Ok(IbpReport {
            lhs: 0.0,
            rhs: 0.0,
            gap: 0.0,
            degenerate: true,
            bc_flagged: false,
        });
    }
    let (lhs, rhs) = ibp_sides(&state.psi, &state.a, state.b())?;
    Ok(IbpReport {
        lhs,
        rhs,
        gap: relative_gap(lhs, rhs),
        degenerate: false,
        bc_flagged: residuals(state).r_bc_psi > BC_GATE_FACTOR * grad_tol,
    })
}

/// `|LHS − RHS| / max(LHS, RHS)`; 0 for `ψ ≡ 0`.
pub fn ibp_identity_gap(state: &GLState) -> Result<f64> {
    Ok(ibp_identity(state, SolveOptions::default().grad_tol)?.gap)
}

fn conjugate(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

fn lp_weighted(vals: impl Iterator<Item = (f64, f64)>, p: f64) -> f64 {
    if p.is_infinite() {
        vals.fold(0.0, |m, (_, v)| m.max(v.abs()))
    } else {
        vals.map(|(w, v)| w * v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Both sides of
/// `Σ‖D_jD_kψ‖² ≤ 3B²‖ψ‖² + 2‖𝓗ψ‖² + 2B²‖curl A − 1‖²_{2p₁}‖ψ‖²_{2q₁} + 2B‖curl A − 1‖_{p₂}‖Dψ‖²_{2q₂}`.
pub fn lemma_intparts(psi: &ComplexField, a: &EdgeField, b: f64, p1: f64, p2: f64) -> Result<LemmaReport> {
    for p in [p1, p2] {
        if !(p >= 1.0) {
            return Err(Error::Spec(format!("exponents must lie in [1, ∞], got {p}")));
        }
    }
    let p = pieces(psi, a, b)?;
    let g = p.grid;
    let (q1, q2) = (conjugate(p1), conjugate(p2));
    let node_w = |k: usize| {
        let (i, j) = g.node_ij(k);
        g.node_area(i, j)
    };
    let psi_norm = |q: f64| {
        lp_weighted(
            psi.as_slice().iter().enumerate().map(|(k, z)| (node_w(k), z.norm())),
            q,
        )
    };
    let defect = |q: f64| {
        lp_weighted(
            p.curl.as_slice().iter().map(|c| (g.cell_area(), c - 1.0)),
            q,
        )
    };
    let d_norm = lp_weighted(
        p.dpsi2.iter().enumerate().map(|(k, v)| (node_w(k), v.sqrt())),
        2.0 * q2,
    );
    let rhs = 3.0 * b * b * psi_norm(2.0).powi(2)
        + 2.0 * p.h2
        + 2.0 * b * b * defect(2.0 * p1).powi(2) * psi_norm(2.0 * q1).powi(2)
        + 2.0 * b * defect(p2) * d_norm.powi(2);
    let ratio = if rhs > 0.0 { p.second / rhs } else { 0.0 };
    Ok(LemmaReport {
        lhs: p.second,
        rhs,
        ratio,
    })
}

/// `LHS / RHS` of the inequality on a state (0 for `ψ ≡ 0`).
pub fn lemma_intparts_ratio(state: &GLState, p1: f64, p2: f64) -> Result<f64> {
    Ok(lemma_intparts(&state.psi, &state.a, state.b(), p1, p2)?.ratio)
}

/// Closed-form vector field with its curl, for the chart check.
#[derive(Clone, Copy, Debug)]
pub struct AnalyticField {
    pub name: &'static str,
    pub value: fn(f64, f64) -> (f64, f64),
    pub curl: fn(f64, f64) -> f64,
}

impl AnalyticField {
    /// `(−y/2, x/2)`, curl 1.
    pub fn symmetric_gauge() -> Self {
        AnalyticField {
            name: "symmetric",
            value: |x, y| (-0.5 * y, 0.5 * x),
            curl: |_, _| 1.0,
        }
    }

    /// `(−y/2 + 0.3 sin 2x cos y, x/2 + 0.2 cos xy)`, a non-polynomial field
    /// whose chart check exercises the truncation error.
    pub fn wavy() -> Self {
        AnalyticField {
            name: "wavy",
            value: |x, y| {
                (
                    -0.5 * y + 0.3 * (2.0 * x).sin() * y.cos(),
                    0.5 * x + 0.2 * (x * y).cos(),
                )
            },
            curl: |x, y| 0.5 - 0.2 * y * (x * y).sin() + 0.5 + 0.3 * (2.0 * x).sin() * y.sin(),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "symmetric" => Ok(Self::symmetric_gauge()),
            "wavy" => Ok(Self::wavy()),
            _ => Err(Error::Spec(format!("unknown analytic field '{name}' (expected symmetric or wavy)"))),
        }
    }
}

/// Max over `(s, t) ∈ [0, 1] × [0, t_max]` (step `h`) of
/// `|curl Ã − (1 − t k) curl A ∘ Φ|`, with `curl Ã = ∂_s Ã₂ − ∂_t Ã₁` by
/// centred differences and `Ã = (DΦ)ᵗ (A ∘ Φ)` on a circular chart of radius
/// `r0` (`r0 = ∞` gives the straight chart).
pub fn curl_transform_check(r0: f64, t_max: f64, field: &AnalyticField, h: f64) -> Result<f64> {
    let chart = BoundaryChart::circle(r0)?;
    chart.check_extent(t_max)?;
    if !(h > 0.0 && h <= t_max.max(1e-300)) && t_max > 0.0 {
        return Err(Error::Spec(format!("step {h} must lie in (0, t_max]")));
    }
    let ns = (1.0 / h).round() as usize;
    let nt = (t_max / h).round() as usize;
    let a = field.value;
    let mut worst = 0.0f64;
    for jt in 0..=nt {
        let t = jt as f64 * h;
        for is in 0..=ns {
            let s = is as f64 * h;
            let a2p = chart.pull_back(a, s + h, t).1;
            let a2m = chart.pull_back(a, s - h, t).1;
            let a1p = chart.pull_back(a, s, t + h).0;
            let a1m = chart.pull_back(a, s, t - h).0;
            let lhs = (a2p - a2m) / (2.0 * h) - (a1p - a1m) / (2.0 * h);
            let (x, y) = chart.phi(s, t);
            let rhs = (1.0 - t * chart.curvature(s)) * (field.curl)(x, y);
            worst = worst.max((lhs - rhs).abs());
        }
    }
    Ok(worst)
}
