//! Gauge-covariant discrete differential operators.
//!
//! The magnetic derivative `D = -i∇ + B A` is discretised with link variables
//! `U_e = exp(i B A_e h_e)`: on an edge from tail `t` to head `h`,
//!
//! ```text
//! (D_e ψ) = -i (U_e ψ_h - ψ_t) / h_e
//! ```
//!
//! which is referenced to the gauge of the tail node. Under
//! `(ψ, A) -> (ψ e^{-iBχ}, A + grad χ)` every such quantity picks up the phase
//! `e^{-iBχ_t}`, so moduli are invariant to rounding.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{
    Axis, CellField, ComplexCellField, ComplexEdgeField, ComplexField, EdgeField, Grid, NodeField,
};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Link variables `exp(i B A_e h)` on x-edges and y-edges.
#[derive(Clone, Debug)]
pub struct Links {
    pub x: Vec<Complex64>,
    pub y: Vec<Complex64>,
}

impl Links {
    pub fn new(a: &EdgeField, b: f64) -> Links {
        let g = a.grid();
        let (hx, hy) = (g.hx(), g.hy());
        Links {
            x: a.xs().iter().map(|&v| Complex64::cis(b * v * hx)).collect(),
            y: a.ys().iter().map(|&v| Complex64::cis(b * v * hy)).collect(),
        }
    }
}

fn check_pair(psi: &ComplexField, a: &EdgeField) -> Result<Grid> {
    psi.grid().check_same(a.grid(), "order parameter vs vector potential")?;
    Ok(*psi.grid())
}

/// Covariant difference `D_axis ψ` on every edge of the given family.
pub fn covariant_diff(
    psi: &ComplexField,
    a: &EdgeField,
    b: f64,
    axis: Axis,
) -> Result<ComplexEdgeField> {
    let g = check_pair(psi, a)?;
    let links = Links::new(a, b);
    Ok(covariant_diff_with(psi, &links, axis, &g))
}

pub(crate) fn covariant_diff_with(
    psi: &ComplexField,
    links: &Links,
    axis: Axis,
    g: &Grid,
) -> ComplexEdgeField {
    let p = psi.as_slice();
    let data = match axis {
        Axis::X => {
            let inv = -I / g.hx();
            let mut v = Vec::with_capacity(g.num_xedges());
            for j in 0..=g.ny() {
                for i in 0..g.nx() {
                    let u = links.x[g.xedge(i, j)];
                    v.push(inv * (u * p[g.node(i + 1, j)] - p[g.node(i, j)]));
                }
            }
            v
        }
        Axis::Y => {
            let inv = -I / g.hy();
            let mut v = Vec::with_capacity(g.num_yedges());
            for j in 0..g.ny() {
                for i in 0..=g.nx() {
                    let u = links.y[g.yedge(i, j)];
                    v.push(inv * (u * p[g.node(i, j + 1)] - p[g.node(i, j)]));
                }
            }
            v
        }
    };
    ComplexEdgeField::new(*g, axis, data)
}

/// Result of [`second_covariant`]: same-axis compositions live on nodes,
/// mixed compositions on cells.
#[derive(Clone, Debug)]
pub enum SecondCovariant {
    Node(ComplexField),
    Cell(ComplexCellField),
}

impl SecondCovariant {
    pub fn values(&self) -> &[Complex64] {
        match self {
            SecondCovariant::Node(f) => f.as_slice(),
            SecondCovariant::Cell(f) => f.as_slice(),
        }
    }
}

/// `D_j D_k ψ` for `j, k ∈ {1, 2}`.
///
/// `D_1 D_1` and `D_2 D_2` are the centred link second differences at nodes,
/// closed at the boundary by the magnetic Neumann ghost value (so that
/// `D_1² + D_2²` is the operator generated by the discrete energy). Mixed
/// compositions sit on cells and are referenced to the lower-left node.
pub fn second_covariant(
    psi: &ComplexField,
    a: &EdgeField,
    b: f64,
    j: usize,
    k: usize,
) -> Result<SecondCovariant> {
    let g = check_pair(psi, a)?;
    let links = Links::new(a, b);
    let outer = Axis::from_index(j)?;
    let inner = Axis::from_index(k)?;
    Ok(match (outer, inner) {
        (Axis::X, Axis::X) | (Axis::Y, Axis::Y) => {
            SecondCovariant::Node(second_diag_with(psi, &links, outer, &g))
        }
        _ => SecondCovariant::Cell(second_mixed_with(psi, &links, outer, &g)),
    })
}

pub(crate) fn second_diag_with(
    psi: &ComplexField,
    links: &Links,
    axis: Axis,
    g: &Grid,
) -> ComplexField {
    let p = psi.as_slice();
    let (nx, ny) = (g.nx(), g.ny());
    let mut out = ComplexField::zeros(*g);
    match axis {
        Axis::X => {
            let c = 1.0 / (g.hx() * g.hx());
            for j in 0..=ny {
                for i in 0..=nx {
                    let here = p[g.node(i, j)];
                    let v = if i == 0 {
                        2.0 * (links.x[g.xedge(0, j)] * p[g.node(1, j)] - here)
                    } else if i == nx {
                        2.0 * (links.x[g.xedge(nx - 1, j)].conj() * p[g.node(nx - 1, j)] - here)
                    } else {
                        links.x[g.xedge(i, j)] * p[g.node(i + 1, j)] - 2.0 * here
                            + links.x[g.xedge(i - 1, j)].conj() * p[g.node(i - 1, j)]
                    };
                    out[g.node(i, j)] = -c * v;
                }
            }
        }
        Axis::Y => {
            let c = 1.0 / (g.hy() * g.hy());
            for j in 0..=ny {
                for i in 0..=nx {
                    let here = p[g.node(i, j)];
                    let v = if j == 0 {
                        2.0 * (links.y[g.yedge(i, 0)] * p[g.node(i, 1)] - here)
                    } else if j == ny {
                        2.0 * (links.y[g.yedge(i, ny - 1)].conj() * p[g.node(i, ny - 1)] - here)
                    } else {
                        links.y[g.yedge(i, j)] * p[g.node(i, j + 1)] - 2.0 * here
                            + links.y[g.yedge(i, j - 1)].conj() * p[g.node(i, j - 1)]
                    };
                    out[g.node(i, j)] = -c * v;
                }
            }
        }
    }
    out
}

/// `outer = X` gives `D_1 D_2 ψ`, `outer = Y` gives `D_2 D_1 ψ`.
pub(crate) fn second_mixed_with(
    psi: &ComplexField,
    links: &Links,
    outer: Axis,
    g: &Grid,
) -> ComplexCellField {
    let p = psi.as_slice();
    let c = 1.0 / (g.hx() * g.hy());
    let mut data = Vec::with_capacity(g.num_cells());
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let ux = links.x[g.xedge(i, j)];
            let uy = links.y[g.yedge(i, j)];
            let p00 = p[g.node(i, j)];
            let p10 = p[g.node(i + 1, j)];
            let p01 = p[g.node(i, j + 1)];
            let p11 = p[g.node(i + 1, j + 1)];
            let path = match outer {
                Axis::X => ux * links.y[g.yedge(i + 1, j)],
                Axis::Y => uy * links.x[g.xedge(i, j + 1)],
            };
            data.push(-c * (path * p11 - ux * p10 - uy * p01 + p00));
        }
    }
    ComplexCellField::new(*g, data)
}

/// Magnetic Laplacian `D_1² ψ + D_2² ψ` at nodes (Neumann-closed).
pub fn magnetic_laplacian(psi: &ComplexField, a: &EdgeField, b: f64) -> Result<ComplexField> {
    let g = check_pair(psi, a)?;
    let links = Links::new(a, b);
    Ok(magnetic_laplacian_with(psi, &links, &g))
}

pub(crate) fn magnetic_laplacian_with(psi: &ComplexField, links: &Links, g: &Grid) -> ComplexField {
    let mut xx = second_diag_with(psi, links, Axis::X, g);
    let yy = second_diag_with(psi, links, Axis::Y, g);
    for (u, v) in xx.as_mut_slice().iter_mut().zip(yy.as_slice()) {
        *u += v;
    }
    xx
}

/// Plaquette circulation divided by cell area.
pub fn curl(a: &EdgeField) -> CellField {
    let g = *a.grid();
    let (hx, hy) = (g.hx(), g.hy());
    let mut out = CellField::zeros(g);
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            out[g.cell(i, j)] = (a.x_at(i, j) - a.x_at(i, j + 1)) / hy
                + (a.y_at(i + 1, j) - a.y_at(i, j)) / hx;
        }
    }
    out
}

/// Discrete gradient of a node field, sampled on edges.
pub fn grad(f: &NodeField) -> EdgeField {
    let g = *f.grid();
    let (hx, hy) = (g.hx(), g.hy());
    let mut out = EdgeField::zeros(g);
    for j in 0..=g.ny() {
        for i in 0..g.nx() {
            out.xs_mut()[g.xedge(i, j)] = (f.at(i + 1, j) - f.at(i, j)) / hx;
        }
    }
    for j in 0..g.ny() {
        for i in 0..=g.nx() {
            out.ys_mut()[g.yedge(i, j)] = (f.at(i, j + 1) - f.at(i, j)) / hy;
        }
    }
    out
}

/// Dual-cell flux balance divided by dual-cell area.
///
/// Boundary nodes own half (or quarter) dual cells whose boundary faces carry
/// no flux: edge fields have no boundary-crossing degrees of freedom, so their
/// normal trace on `∂Ω` is zero by construction.
pub fn div(a: &EdgeField) -> NodeField {
    let g = *a.grid();
    let mut out = NodeField::zeros(g);
    for (i, j) in g.nodes() {
        out[g.node(i, j)] = node_outflux(a, i, j) / g.node_area(i, j);
    }
    out
}

/// Net outward flux of `a` through the interior faces of node `(i, j)`'s dual cell.
pub(crate) fn node_outflux(a: &EdgeField, i: usize, j: usize) -> f64 {
    let g = a.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let wy = g.hy() * if j == 0 || j == ny { 0.5 } else { 1.0 };
    let wx = g.hx() * if i == 0 || i == nx { 0.5 } else { 1.0 };
    let mut flux = 0.0;
    if i < nx {
        flux += wy * a.x_at(i, j);
    }
    if i > 0 {
        flux -= wy * a.x_at(i - 1, j);
    }
    if j < ny {
        flux += wx * a.y_at(i, j);
    }
    if j > 0 {
        flux -= wx * a.y_at(i, j - 1);
    }
    flux
}

/// Perpendicular gradient `(-∂_y u, ∂_x u)` of a cell-centred stream function
/// vanishing on `∂Ω` (cells outside the grid read as zero). Its divergence is
/// identically zero, including on the boundary half-cells.
pub fn rot_cells(u: &CellField) -> EdgeField {
    let g = *u.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let cellv = |i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i >= nx as isize || j >= ny as isize {
            0.0
        } else {
            u.at(i as usize, j as usize)
        }
    };
    let mut out = EdgeField::zeros(g);
    for j in 0..=ny {
        let w = if j == 0 || j == ny { 0.5 } else { 1.0 };
        for i in 0..nx {
            let (ii, jj) = (i as isize, j as isize);
            out.xs_mut()[g.xedge(i, j)] = -(cellv(ii, jj) - cellv(ii, jj - 1)) / (g.hy() * w);
        }
    }
    for j in 0..ny {
        for i in 0..=nx {
            let w = if i == 0 || i == nx { 0.5 } else { 1.0 };
            let (ii, jj) = (i as isize, j as isize);
            out.ys_mut()[g.yedge(i, j)] = (cellv(ii, jj) - cellv(ii - 1, jj)) / (g.hx() * w);
        }
    }
    out
}

/// Applies the gauge transformation `(ψ, A) -> (ψ e^{-iBχ}, A + grad χ)`.
pub fn gauge_transform(
    psi: &ComplexField,
    a: &EdgeField,
    b: f64,
    chi: &NodeField,
) -> Result<(ComplexField, EdgeField)> {
    let g = check_pair(psi, a)?;
    g.check_same(chi.grid(), "gauge function")?;
    let mut out = psi.clone();
    for (z, &c) in out.as_mut_slice().iter_mut().zip(chi.as_slice()) {
        *z *= Complex64::cis(-b * c);
    }
    let a2 = a.axpy(1.0, &grad(chi))?;
    Ok((out, a2))
}

/// Bilinear interpolation on a regular lattice, linearly extrapolated in the
/// outermost half-cell so the rule stays exact on bilinear functions.
#[derive(Clone, Copy, Debug)]
struct Lattice {
    ox: f64,
    oy: f64,
    hx: f64,
    hy: f64,
    mx: usize,
    my: usize,
}

impl Lattice {
    fn weights(&self, x: f64, y: f64) -> (usize, usize, f64, f64) {
        let locate = |t: f64, o: f64, h: f64, m: usize| -> (usize, f64) {
            let f = (t - o) / h;
            let k = (f.floor().max(0.0) as usize).min(m - 2);
            (k, f - k as f64)
        };
        let (i, tx) = locate(x, self.ox, self.hx, self.mx);
        let (j, ty) = locate(y, self.oy, self.hy, self.my);
        (i, j, tx, ty)
    }

    fn eval<T>(&self, x: f64, y: f64, at: impl Fn(usize, usize) -> T) -> T
    where
        T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        let (i, j, tx, ty) = self.weights(x, y);
        at(i, j) * ((1.0 - tx) * (1.0 - ty))
            + at(i + 1, j) * (tx * (1.0 - ty))
            + at(i, j + 1) * ((1.0 - tx) * ty)
            + at(i + 1, j + 1) * (tx * ty)
    }
}

fn node_lattice(g: &Grid) -> Lattice {
    let (ox, oy) = g.origin();
    Lattice {
        ox,
        oy,
        hx: g.hx(),
        hy: g.hy(),
        mx: g.nx() + 1,
        my: g.ny() + 1,
    }
}

fn check_inside(g: &Grid, x: f64, y: f64) -> Result<()> {
    if !g.contains(x, y) || !x.is_finite() || !y.is_finite() {
        return Err(Error::Domain { x, y });
    }
    Ok(())
}

/// Bilinear interpolation of a complex node field.
pub fn interpolate_complex(f: &ComplexField, x: f64, y: f64) -> Result<Complex64> {
    let g = f.grid();
    check_inside(g, x, y)?;
    Ok(node_lattice(g).eval(x, y, |i, j| f.at(i, j)))
}

/// Bilinear interpolation of a real node field.
pub fn interpolate_node(f: &NodeField, x: f64, y: f64) -> Result<f64> {
    let g = f.grid();
    check_inside(g, x, y)?;
    Ok(node_lattice(g).eval(x, y, |i, j| f.at(i, j)))
}

/// Vector value `(A_1, A_2)` of an edge field at a point: each component is
/// interpolated bilinearly on its own staggered lattice.
pub fn interpolate_edge(a: &EdgeField, x: f64, y: f64) -> Result<(f64, f64)> {
    let g = a.grid();
    check_inside(g, x, y)?;
    let (ox, oy) = g.origin();
    let lx = Lattice {
        ox: ox + 0.5 * g.hx(),
        oy,
        hx: g.hx(),
        hy: g.hy(),
        mx: g.nx(),
        my: g.ny() + 1,
    };
    let ly = Lattice {
        ox,
        oy: oy + 0.5 * g.hy(),
        hx: g.hx(),
        hy: g.hy(),
        mx: g.nx() + 1,
        my: g.ny(),
    };
    Ok((
        lx.eval(x, y, |i, j| a.x_at(i, j)),
        ly.eval(x, y, |i, j| a.y_at(i, j)),
    ))
}

/// Bilinear interpolation of a cell field (cell centres as lattice points).
pub fn interpolate_cell(f: &CellField, x: f64, y: f64) -> Result<f64> {
    let g = f.grid();
    check_inside(g, x, y)?;
    let (ox, oy) = g.origin();
    let l = Lattice {
        ox: ox + 0.5 * g.hx(),
        oy: oy + 0.5 * g.hy(),
        hx: g.hx(),
        hy: g.hy(),
        mx: g.nx(),
        my: g.ny(),
    };
    Ok(l.eval(x, y, |i, j| f.at(i, j)))
}
