//! Blow-up of a state at the magnetic length `1/√(κH)` around a point, and
//! the residual of the limiting equation `(−i∇ + F̃)²φ = Λ(1 − S²|φ|²)φ` on
//! the resulting frame.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gl::GLState;
use crate::grid::{Axis, ComplexField, EdgeField, Grid};
use crate::operators::{interpolate_complex, interpolate_edge, second_diag_with, Links};

/// Minimum frame resolution, points per unit magnetic length.
pub const FRAME_PER_UNIT: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointCase {
    Interior,
    Boundary,
}

/// `Interior` iff `√(κH) · dist(P, ∂Ω) ≥ R + 1`.
pub fn classify_point(state: &GLState, p: (f64, f64), r: f64) -> Result<PointCase> {
    let g = state.grid();
    if !g.contains(p.0, p.1) {
        return Err(Error::Domain { x: p.0, y: p.1 });
    }
    Ok(classify(state.b(), g.dist_to_boundary(p.0, p.1), r))
}

fn classify(b: f64, dist: f64, r: f64) -> PointCase {
    if b.sqrt() * dist >= r + 1.0 {
        PointCase::Interior
    } else {
        PointCase::Boundary
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlowupFrame {
    /// Blow-up point actually used (snapped to the nearest node).
    pub p: (f64, f64),
    pub case: PointCase,
    /// `‖ψ‖∞`.
    pub s: f64,
    /// `κ/H`.
    pub lambda: f64,
    pub r: f64,
    /// `√(κH)`.
    pub scale: f64,
    /// Frame origin in `Ω`: `P` itself, or its foot point on the nearest side.
    pub origin: (f64, f64),
    /// Images in `Ω` of the frame axes `e₁` (tangent) and `e₂` (inward normal).
    pub axes: [(f64, f64); 2],
    /// Frame coordinates of `P` (`0` in the interior case).
    pub z: (f64, f64),
    /// `φ` on the frame grid, whose coordinates are rescaled frame coordinates.
    #[serde(skip)]
    pub phi: Option<ComplexField>,
    #[serde(skip)]
    pub a: Option<EdgeField>,
    /// `F̃(y) = M y` with `M = (DĀ(P))` in frame coordinates, Ā ≈ A.
    pub f_lin: [[f64; 2]; 2],
}

impl BlowupFrame {
    pub fn phi(&self) -> &ComplexField {
        self.phi.as_ref().expect("frame carries φ")
    }

    pub fn a(&self) -> &EdgeField {
        self.a.as_ref().expect("frame carries a")
    }

    /// Frame with the given fields, for manufactured checks.
    pub fn from_parts(
        phi: ComplexField,
        a: EdgeField,
        case: PointCase,
        s: f64,
        lambda: f64,
        f_lin: [[f64; 2]; 2],
    ) -> Result<Self> {
        phi.grid().check_same(a.grid(), "frame fields")?;
        let g = *phi.grid();
        Ok(BlowupFrame {
            p: (0.0, 0.0),
            case,
            s,
            lambda,
            r: 0.5 * g.lx().min(g.ly()),
            scale: 1.0,
            origin: (0.0, 0.0),
            axes: [(1.0, 0.0), (0.0, 1.0)],
            z: (0.0, 0.0),
            phi: Some(phi),
            a: Some(a),
            f_lin,
        })
    }

    /// Point of `Ω` for frame coordinates `y`.
    pub fn to_domain(&self, y: (f64, f64)) -> (f64, f64) {
        let [e1, e2] = self.axes;
        (
            self.origin.0 + (y.0 * e1.0 + y.1 * e2.0) / self.scale,
            self.origin.1 + (y.0 * e1.1 + y.1 * e2.1) / self.scale,
        )
    }
}

fn nearest_node(g: &Grid, p: (f64, f64)) -> (usize, usize) {
    let (ox, oy) = g.origin();
    let i = ((p.0 - ox) / g.hx()).round().clamp(0.0, g.nx() as f64) as usize;
    let j = ((p.1 - oy) / g.hy()).round().clamp(0.0, g.ny() as f64) as usize;
    (i, j)
}

/// Derivative of `f` at `t = 0` along a segment that may end at the domain
/// boundary: centred where possible, otherwise second-order one-sided.
fn directional(f: impl Fn(f64) -> Result<f64>, h: f64) -> Result<f64> {
    match (f(-h), f(h)) {
        (Ok(m), Ok(p)) => Ok((p - m) / (2.0 * h)),
        (Err(_), Ok(p)) => Ok((-3.0 * f(0.0)? + 4.0 * p - f(2.0 * h)?) / (2.0 * h)),
        (Ok(m), Err(_)) => Ok((3.0 * f(0.0)? - 4.0 * m + f(-2.0 * h)?) / (2.0 * h)),
        (Err(e), Err(_)) => Err(e),
    }
}

/// Jacobian `∂_j A_i` at `x`.
fn jacobian(a: &EdgeField, x: (f64, f64)) -> Result<[[f64; 2]; 2]> {
    let h = a.grid().hx().min(a.grid().hy());
    let mut m = [[0.0; 2]; 2];
    for (i, row) in m.iter_mut().enumerate() {
        let comp = move |v: (f64, f64)| if i == 0 { v.0 } else { v.1 };
        row[0] = directional(|t| Ok(comp(interpolate_edge(a, x.0 + t, x.1)?)), h)?;
        row[1] = directional(|t| Ok(comp(interpolate_edge(a, x.0, x.1 + t)?)), h)?;
    }
    Ok(m)
}

/// Rescales `state` around `p` (snapped to the nearest node) onto a frame of
/// radius `r`:
/// `a(y) = √B (A(x) − A(x₀))`, `φ(y) = S⁻¹ e^{i√B A(x₀)·y} ψ(x)` with
/// `x = x₀ + (y₁e₁ + y₂e₂)/√B`. The phase makes the link differences of `φ`
/// equal to those of `ψ` up to one common factor, so on lattice-aligned
/// frames (`√(κH)·h ≤ 1/8`) the rescaling is exact.
///
/// Interior points use `x₀ = P` and the coordinate axes; boundary points use
/// the foot point on the nearest side, with `e₂` the inward normal so the
/// flat edge is `y₂ = 0`. Frames are clipped to `Ω`.
pub fn rescale(state: &GLState, p: (f64, f64), r: f64) -> Result<BlowupFrame> {
    let g = *state.grid();
    if !g.contains(p.0, p.1) {
        return Err(Error::Domain { x: p.0, y: p.1 });
    }
    if !(r > 0.0) {
        return Err(Error::Spec(format!("frame radius must be positive, got {r}")));
    }
    if (g.hx() - g.hy()).abs() > 1e-12 * g.hx() {
        return Err(Error::Spec("blow-up frames need square cells".into()));
    }
    let s = state.psi.sup_norm();
    if s == 0.0 {
        return Err(Error::Degenerate("ψ ≡ 0 has no blow-up".into()));
    }
    let b = state.b();
    let scale = b.sqrt();
    let (pi, pj) = nearest_node(&g, p);
    let pn = g.node_pos(pi, pj);
    let case = classify(b, g.dist_to_boundary(pn.0, pn.1), r);

    let (ox, oy) = g.origin();
    let (xmax, ymax) = (ox + g.lx(), oy + g.ly());
    let (origin, axes) = match case {
        PointCase::Interior => (pn, [(1.0, 0.0), (0.0, 1.0)]),
        PointCase::Boundary => {
            let sides = [
                (pn.0 - ox, (ox, pn.1), (0.0, -1.0), (1.0, 0.0)),
                (xmax - pn.0, (xmax, pn.1), (0.0, 1.0), (-1.0, 0.0)),
                (pn.1 - oy, (pn.0, oy), (1.0, 0.0), (0.0, 1.0)),
                (ymax - pn.1, (pn.0, ymax), (-1.0, 0.0), (0.0, -1.0)),
            ];
            let best = sides
                .iter()
                .min_by(|u, v| u.0.total_cmp(&v.0))
                .expect("four sides");
            (best.1, [best.2, best.3])
        }
    };
    let [e1, e2] = axes;
    let z = (
        ((pn.0 - origin.0) * e1.0 + (pn.1 - origin.1) * e1.1) * scale,
        ((pn.0 - origin.0) * e2.0 + (pn.1 - origin.1) * e2.1) * scale,
    );

    // Frame spacing: the state's, refined to reach FRAME_PER_UNIT.
    let hs = g.hx() * scale;
    let refine = (hs * FRAME_PER_UNIT).ceil().max(1.0);
    let hf = hs / refine;

    // Extent of Ω along ±e₁, ±e₂ from the origin, in frame units.
    let reach = |d: (f64, f64)| -> f64 {
        let tx = if d.0 > 0.0 {
            (xmax - origin.0) / d.0
        } else if d.0 < 0.0 {
            (ox - origin.0) / d.0
        } else {
            f64::INFINITY
        };
        let ty = if d.1 > 0.0 {
            (ymax - origin.1) / d.1
        } else if d.1 < 0.0 {
            (oy - origin.1) / d.1
        } else {
            f64::INFINITY
        };
        tx.min(ty) * scale
    };
    let steps = |len: f64| ((len.min(r) / hf) * (1.0 + 1e-12)).floor() as usize;
    let lo1 = steps(reach((-e1.0, -e1.1)));
    let hi1 = steps(reach(e1));
    let hi2 = steps(reach(e2));
    let lo2 = match case {
        PointCase::Interior => steps(reach((-e2.0, -e2.1))),
        PointCase::Boundary => 0,
    };
    let (n1, n2) = (lo1 + hi1, lo2 + hi2);
    if n1 < 4 || n2 < 4 {
        return Err(Error::Chart(format!(
            "frame of radius {r} around ({}, {}) leaves fewer than 4 cells inside the domain",
            pn.0, pn.1
        )));
    }
    let fg = Grid::new(n1, n2, n1 as f64 * hf, n2 as f64 * hf)?
        .with_origin(-(lo1 as f64) * hf, -(lo2 as f64) * hf);

    let frame_base = BlowupFrame {
        p: pn,
        case,
        s,
        lambda: state.kappa / state.h,
        r,
        scale,
        origin,
        axes,
        z,
        phi: None,
        a: None,
        f_lin: [[0.0; 2]; 2],
    };
    let inside = |x: (f64, f64)| (x.0.clamp(ox, xmax), x.1.clamp(oy, ymax));

    let a0 = interpolate_edge(&state.a, origin.0, origin.1)?;
    let phase = |y: (f64, f64)| {
        scale * (a0.0 * (y.0 * e1.0 + y.1 * e2.0) + a0.1 * (y.0 * e1.1 + y.1 * e2.1))
    };
    let mut phi = ComplexField::zeros(fg);
    for (i, j) in fg.nodes() {
        let y = fg.node_pos(i, j);
        let x = inside(frame_base.to_domain(y));
        let v = interpolate_complex(&state.psi, x.0, x.1)?;
        phi[fg.node(i, j)] = v * Complex64::cis(phase(y)) / s;
    }
    // a along each frame edge, sampled at the edge midpoint.
    let mut a = EdgeField::zeros(fg);
    let along = |y: (f64, f64), e: (f64, f64)| -> Result<f64> {
        let x = inside(frame_base.to_domain(y));
        let v = interpolate_edge(&state.a, x.0, x.1)?;
        Ok(scale * ((v.0 - a0.0) * e.0 + (v.1 - a0.1) * e.1))
    };
    for j in 0..=n2 {
        for i in 0..n1 {
            let (y1, y2) = fg.node_pos(i, j);
            a.xs_mut()[fg.xedge(i, j)] = along((y1 + 0.5 * hf, y2), e1)?;
        }
    }
    for j in 0..n2 {
        for i in 0..=n1 {
            let (y1, y2) = fg.node_pos(i, j);
            a.ys_mut()[fg.yedge(i, j)] = along((y1, y2 + 0.5 * hf), e2)?;
        }
    }

    let da = jacobian(&state.a, origin)?;
    // M = Eᵀ (DA) E with E = [e₁ e₂].
    let e = [[e1.0, e2.0], [e1.1, e2.1]];
    let mut m = [[0.0; 2]; 2];
    for (r_, row) in m.iter_mut().enumerate() {
        for (c, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in 0..2 {
                for l in 0..2 {
                    acc += e[k][r_] * da[k][l] * e[l][c];
                }
            }
            *out = acc;
        }
    }
    Ok(BlowupFrame {
        phi: Some(phi),
        a: Some(a),
        f_lin: m,
        ..frame_base
    })
}

/// Links of `F̃(y) = M y` on the frame grid (exact for a linear field).
fn linear_links(g: &Grid, m: &[[f64; 2]; 2]) -> Links {
    let f = |y: (f64, f64)| (m[0][0] * y.0 + m[0][1] * y.1, m[1][0] * y.0 + m[1][1] * y.1);
    let mut x = Vec::with_capacity(g.num_xedges());
    for j in 0..=g.ny() {
        for i in 0..g.nx() {
            let (y1, y2) = g.node_pos(i, j);
            x.push(Complex64::cis(f((y1 + 0.5 * g.hx(), y2)).0 * g.hx()));
        }
    }
    let mut y = Vec::with_capacity(g.num_yedges());
    for j in 0..g.ny() {
        for i in 0..=g.nx() {
            let (y1, y2) = g.node_pos(i, j);
            y.push(Complex64::cis(f((y1, y2 + 0.5 * g.hy())).1 * g.hy()));
        }
    }
    Links { x, y }
}

/// `‖(−i∇ + F̃)²φ − Λ(1 − S²|φ|²)φ‖₂ / ‖φ‖₂` over the frame's interior nodes,
/// plus the flat edge `y₂ = 0` (magnetic Neumann closure) in the boundary case.
pub fn limit_residual(frame: &BlowupFrame) -> Result<f64> {
    let phi = frame.phi.as_ref().ok_or_else(|| Error::Spec("frame has no φ".into()))?;
    let g = *phi.grid();
    let links = linear_links(&g, &frame.f_lin);
    let d11 = second_diag_with(phi, &links, Axis::X, &g);
    let d22 = second_diag_with(phi, &links, Axis::Y, &g);
    let s2 = frame.s * frame.s;
    let j0 = match frame.case {
        PointCase::Interior => 1,
        PointCase::Boundary => 0,
    };
    let mut num = 0.0;
    let mut den = 0.0;
    for j in j0..g.ny() {
        for i in 1..g.nx() {
            let k = g.node(i, j);
            let w = g.node_area(i, j);
            let v = phi[k];
            let r = d11[k] + d22[k] - frame.lambda * (1.0 - s2 * v.norm_sqr()) * v;
            num += w * r.norm_sqr();
            den += w * v.norm_sqr();
        }
    }
    if den == 0.0 {
        return Err(Error::Degenerate("φ vanishes on the frame".into()));
    }
    Ok((num / den).sqrt())
}

/// Largest `|curl a − curl F̃|` over frame cells, i.e. the deviation of the
/// rescaled induced field from its value at the blow-up point.
pub fn frame_curl(frame: &BlowupFrame) -> Result<(f64, f64)> {
    let a = frame.a.as_ref().ok_or_else(|| Error::Spec("frame has no a".into()))?;
    let c = crate::operators::curl(a);
    let n = c.len() as f64;
    let mean = c.as_slice().iter().sum::<f64>() / n;
    let dev = c.as_slice().iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
    Ok((mean, dev))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gl::GLState;

    fn state_with(psi: ComplexField, a: EdgeField, kappa: f64, h: f64) -> GLState {
        GLState::new(psi, a, kappa, h).unwrap()
    }

    #[test]
    fn classification() {
        let g = Grid::square(16, 4.0).unwrap();
        let s = GLState::normal(g, 10.0, 10.0).unwrap();
        assert_eq!(classify_point(&s, (2.0, 2.0), 5.0).unwrap(), PointCase::Interior);
        assert_eq!(classify_point(&s, (0.0, 1.0), 5.0).unwrap(), PointCase::Boundary);
        assert!(classify_point(&s, (5.0, 1.0), 5.0).is_err());
        // Raising κH only ever flips boundary to interior.
        for d in [0.05, 0.2, 0.7] {
            let mut prev = PointCase::Boundary;
            for b in [1.0, 10.0, 100.0, 1e3, 1e4] {
                let c = classify(b, d, 3.0);
                assert!(!(prev == PointCase::Interior && c == PointCase::Boundary));
                prev = c;
            }
        }
    }

    #[test]
    fn constant_state_rescales_to_one() {
        let g = Grid::square(32, 1.0).unwrap();
        let c = Complex64::from_polar(0.6, 0.4);
        let s = state_with(ComplexField::constant(g, c), EdgeField::zeros(g), 4.0, 4.0);
        let f = rescale(&s, (0.5, 0.5), 1.0).unwrap();
        assert_eq!(f.case, PointCase::Interior);
        for z in f.phi().as_slice() {
            assert!((z - c / 0.6).norm() < 1e-14);
        }
        assert_eq!(f.a().max_abs(), 0.0);
    }

    #[test]
    fn frame_is_exact_on_aligned_lattice() {
        // √B · h = 1/8, so frame nodes are state nodes.
        let g = Grid::square(64, 1.0).unwrap();
        let a = EdgeField::from_fn(g, |x, y| (-0.5 * y + 0.1 * x * x, 0.5 * x));
        let psi = ComplexField::from_fn(g, |x, y| Complex64::from_polar(0.3 + x * y, 3.0 * x - y));
        let s = state_with(psi, a, 8.0, 8.0);
        let p = (17.0 / 64.0, 40.0 / 64.0);
        let f = rescale(&s, p, 1.0).unwrap();
        let fg = *f.phi().grid();
        assert!((fg.hx() - 0.125).abs() < 1e-15);
        // Link differences agree with those of ψ up to one common phase.
        let ls = Links::new(&s.a, s.b());
        let lf = Links::new(f.a(), 1.0);
        let (i0, j0) = (17, 40);
        let center = (fg.nx() / 2, fg.ny() / 2);
        let mut common = None;
        for dj in 0..3 {
            for di in 0..3 {
                let (fi, fj) = (center.0 + di, center.1 + dj);
                let (si, sj) = (i0 + di, j0 + dj);
                let ds = ls.x[g.xedge(si, sj)] * s.psi.at(si + 1, sj) - s.psi.at(si, sj);
                let df = lf.x[fg.xedge(fi, fj)] * f.phi().at(fi + 1, fj) - f.phi().at(fi, fj);
                let ratio = df * f.s / ds;
                assert!((ratio.norm() - 1.0).abs() < 1e-9);
                // The common factor is e^{iB A(P)·(x_t − P)}; with it removed all ratios agree.
                let (xt, yt) = g.node_pos(si, sj);
                let a0 = interpolate_edge(&s.a, p.0, p.1).unwrap();
                let corr = ratio
                    * Complex64::cis(-s.b() * (a0.0 * (xt - p.0) + a0.1 * (yt - p.1)));
                match common {
                    None => common = Some(corr),
                    Some(c0) => assert!((corr - c0).norm() < 1e-9, "{corr} {c0}"),
                }
            }
        }
        assert!((common.unwrap() - 1.0).norm() < 1e-9);
    }

    #[test]
    fn argmax_center_has_unit_modulus() {
        let g = Grid::square(64, 1.0).unwrap();
        let psi = ComplexField::from_fn(g, |x, y| {
            Complex64::new((-(x - 0.3).powi(2) - (y - 0.6).powi(2)).exp(), 0.1)
        });
        let s = state_with(psi, EdgeField::zeros(g), 8.0, 8.0);
        let (p, _) = crate::norms::argmax_distance(&s.psi).unwrap();
        let f = rescale(&s, p, 1.0).unwrap();
        let fg = *f.phi().grid();
        let (ox, oy) = fg.origin();
        let ci = (-ox / fg.hx()).round() as usize;
        let cj = (-oy / fg.hy()).round() as usize;
        assert!((f.phi().at(ci, cj).norm() - 1.0).abs() < 1e-14);
        assert!(f.phi().sup_norm() <= 1.0 + 1e-3);
    }

    #[test]
    fn boundary_frame_has_flat_edge_at_zero() {
        let g = Grid::square(64, 1.0).unwrap();
        let psi = ComplexField::constant(g, Complex64::new(1.0, 0.0));
        let a = EdgeField::from_fn(g, |x, y| (-0.5 * (y - 0.5), 0.5 * (x - 0.5)));
        let s = state_with(psi, a, 8.0, 8.0);
        let f = rescale(&s, (1.0, 0.4), 2.0).unwrap();
        assert_eq!(f.case, PointCase::Boundary);
        assert_eq!(f.origin, (1.0, 0.40625));
        // Inward normal of the right side, tangent rotated to keep orientation.
        assert_eq!(f.axes, [(0.0, 1.0), (-1.0, 0.0)]);
        assert!(f.phi().grid().origin().1 == 0.0);
        let (mean, dev) = frame_curl(&f).unwrap();
        assert!((mean - 1.0).abs() < 1e-12 && dev < 1e-12);
        let m = f.f_lin;
        assert!((m[1][0] - m[0][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn phase_invariance_under_constant_shift() {
        let g = Grid::square(64, 1.0).unwrap();
        let a = EdgeField::from_fn(g, |x, y| (-0.5 * y, 0.5 * x + 0.2 * y * y));
        let psi = ComplexField::from_fn(g, |x, y| Complex64::from_polar(0.5 + 0.2 * x, x * y));
        let s = state_with(psi.clone(), a.clone(), 8.0, 8.0);
        let c = (0.7, -1.3);
        let b = s.b();
        let shifted = state_with(
            ComplexField::from_fn(g, |x, y| {
                crate::operators::interpolate_complex(&psi, x, y).unwrap()
                    * Complex64::cis(-b * (c.0 * x + c.1 * y))
            }),
            EdgeField::from_fn(g, |x, y| {
                let v = interpolate_edge(&a, x, y).unwrap();
                (v.0 + c.0, v.1 + c.1)
            }),
            8.0,
            8.0,
        );
        let p = (0.5, 0.5);
        let f0 = rescale(&s, p, 1.0).unwrap();
        let f1 = rescale(&shifted, p, 1.0).unwrap();
        let glob = Complex64::cis(-b * (c.0 * p.0 + c.1 * p.1));
        for (u, v) in f0.phi().as_slice().iter().zip(f1.phi().as_slice()) {
            assert!((u * glob - v).norm() < 1e-10);
        }
        for (u, v) in f0.a().xs().iter().zip(f1.a().xs()) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn lowest_landau_level_has_small_residual() {
        // φ = e^{−|y|²/4} solves (−i∇ + F̃)²φ = φ for F̃ = (−y₂/2, y₁/2).
        let g = Grid::new(48, 48, 6.0, 6.0).unwrap().with_origin(-3.0, -3.0);
        let phi = ComplexField::from_fn(g, |x, y| Complex64::new((-(x * x + y * y) / 4.0).exp(), 0.0));
        let m = [[0.0, -0.5], [0.5, 0.0]];
        let a = EdgeField::from_fn(g, |x, y| (-0.5 * y, 0.5 * x));
        let f = BlowupFrame::from_parts(phi, a, PointCase::Interior, 0.0, 1.0, m).unwrap();
        let r = limit_residual(&f).unwrap();
        assert!(r < 1e-2, "{r}");
        let zero = BlowupFrame::from_parts(ComplexField::zeros(g), EdgeField::zeros(g), PointCase::Interior, 0.0, 1.0, m).unwrap();
        assert!(matches!(limit_residual(&zero), Err(Error::Degenerate(_))));
    }

    #[test]
    fn zero_state_cannot_be_rescaled() {
        let g = Grid::square(16, 1.0).unwrap();
        let s = GLState::normal(g, 4.0, 4.0).unwrap();
        assert!(matches!(rescale(&s, (0.5, 0.5), 1.0), Err(Error::Degenerate(_))));
    }
}
