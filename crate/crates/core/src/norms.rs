//! Discrete Lᵖ, W^{1,p}, sup, C¹, C² and Hölder norms, and argmax localisation.
//!
//! Every field is first viewed as samples of a (possibly vector-valued)
//! function on a regular lattice: node fields on the nodes, cell fields on
//! the cell centres, complex fields as two real components and edge fields as
//! two components interpolated to the nodes. Pointwise magnitudes are
//! Euclidean over components.
//!
//! ```text
//! ‖u‖_{C^{n,α}} = Σ_{|β|≤n} sup|∂^β u| + Σ_{|β|=n} sup_{x≠y} |∂^β u(x) − ∂^β u(y)| / |x−y|^α
//! ```

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CellField, ComplexField, EdgeField, Grid, NodeField};
use crate::operators::interpolate_edge;

/// Largest node lattice (per side, in cells) scanned exhaustively.
pub const EXHAUSTIVE_MAX: usize = 128;
/// Minimum number of random pairs drawn above [`EXHAUSTIVE_MAX`].
pub const SAMPLED_PAIRS: usize = 1_000_000;
const SAMPLE_SEED: u64 = 0x5eed_0f_4a1d;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Lp,
    W1p,
    Sup,
    CnAlpha,
    C1,
    C2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormSpec {
    pub kind: NormKind,
    /// Exponent for `Lp`/`W1p`; `f64::INFINITY` allowed.
    #[serde(default = "default_p")]
    pub p: f64,
    /// Derivative order for `CnAlpha`.
    #[serde(default)]
    pub n: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub corner_exclusion: bool,
}

fn default_p() -> f64 {
    2.0
}
fn default_alpha() -> f64 {
    0.5
}

impl NormSpec {
    pub fn lp(p: f64) -> Self {
        NormSpec {
            kind: NormKind::Lp,
            p,
            n: 0,
            alpha: 0.5,
            corner_exclusion: false,
        }
    }
    pub fn w1p(p: f64) -> Self {
        NormSpec {
            kind: NormKind::W1p,
            ..Self::lp(p)
        }
    }
    pub fn sup() -> Self {
        NormSpec {
            kind: NormKind::Sup,
            ..Self::lp(f64::INFINITY)
        }
    }
    pub fn c1() -> Self {
        NormSpec {
            kind: NormKind::C1,
            ..Self::sup()
        }
    }
    pub fn c2() -> Self {
        NormSpec {
            kind: NormKind::C2,
            ..Self::sup()
        }
    }
    pub fn holder(n: usize, alpha: f64) -> Self {
        NormSpec {
            kind: NormKind::CnAlpha,
            n,
            alpha,
            ..Self::sup()
        }
    }
    pub fn with_corner_exclusion(mut self, on: bool) -> Self {
        self.corner_exclusion = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            NormKind::Lp | NormKind::W1p => {
                if !(self.p >= 1.0) {
                    return Err(Error::Spec(format!("p must lie in [1, ∞], got {}", self.p)));
                }
            }
            NormKind::CnAlpha => {
                if !(self.alpha > 0.0 && self.alpha < 1.0) {
                    return Err(Error::Spec(format!(
                        "alpha must lie in (0, 1), got {}",
                        self.alpha
                    )));
                }
                if self.n > 2 {
                    return Err(Error::Spec(format!(
                        "Hölder norms are implemented for n ≤ 2, got {}",
                        self.n
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// A field handed to [`norm`].
#[derive(Clone, Copy, Debug)]
pub enum FieldRef<'a> {
    Node(&'a NodeField),
    Complex(&'a ComplexField),
    Cell(&'a CellField),
    /// Vector field given by tangential edge values.
    Edge(&'a EdgeField),
}

impl<'a> From<&'a NodeField> for FieldRef<'a> {
    fn from(f: &'a NodeField) -> Self {
        FieldRef::Node(f)
    }
}
impl<'a> From<&'a ComplexField> for FieldRef<'a> {
    fn from(f: &'a ComplexField) -> Self {
        FieldRef::Complex(f)
    }
}
impl<'a> From<&'a CellField> for FieldRef<'a> {
    fn from(f: &'a CellField) -> Self {
        FieldRef::Cell(f)
    }
}
impl<'a> From<&'a EdgeField> for FieldRef<'a> {
    fn from(f: &'a EdgeField) -> Self {
        FieldRef::Edge(f)
    }
}

/// Samples of a vector-valued function on a regular `mx × my` lattice.
#[derive(Clone, Debug)]
pub struct Lattice {
    pub ox: f64,
    pub oy: f64,
    pub hx: f64,
    pub hy: f64,
    pub mx: usize,
    pub my: usize,
    /// Trapezoid weights (node lattices) or midpoint weights (cell lattices).
    pub trapezoid: bool,
    /// Corners of the physical rectangle, for corner exclusion.
    pub domain: Grid,
    pub comps: Vec<Vec<f64>>,
}

impl Lattice {
    pub fn from_field(f: FieldRef<'_>) -> Result<Lattice> {
        Ok(match f {
            FieldRef::Node(f) => Self::nodes(f.grid(), vec![f.as_slice().to_vec()]),
            FieldRef::Complex(f) => Self::nodes(
                f.grid(),
                vec![
                    f.as_slice().iter().map(|z| z.re).collect(),
                    f.as_slice().iter().map(|z| z.im).collect(),
                ],
            ),
            FieldRef::Cell(f) => {
                let g = f.grid();
                let (ox, oy) = g.origin();
                Lattice {
                    ox: ox + 0.5 * g.hx(),
                    oy: oy + 0.5 * g.hy(),
                    hx: g.hx(),
                    hy: g.hy(),
                    mx: g.nx(),
                    my: g.ny(),
                    trapezoid: false,
                    domain: *g,
                    comps: vec![f.as_slice().to_vec()],
                }
            }
            FieldRef::Edge(a) => {
                let g = a.grid();
                let mut c1 = Vec::with_capacity(g.num_nodes());
                let mut c2 = Vec::with_capacity(g.num_nodes());
                for (i, j) in g.nodes() {
                    let (x, y) = g.node_pos(i, j);
                    let (u, v) = interpolate_edge(a, x, y)?;
                    c1.push(u);
                    c2.push(v);
                }
                Self::nodes(g, vec![c1, c2])
            }
        })
    }

    fn nodes(g: &Grid, comps: Vec<Vec<f64>>) -> Lattice {
        let (ox, oy) = g.origin();
        Lattice {
            ox,
            oy,
            hx: g.hx(),
            hy: g.hy(),
            mx: g.nx() + 1,
            my: g.ny() + 1,
            trapezoid: true,
            domain: *g,
            comps,
        }
    }

    fn with_comps(&self, comps: Vec<Vec<f64>>) -> Lattice {
        Lattice {
            comps,
            ..self.clone()
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.mx + i
    }

    fn pos(&self, i: usize, j: usize) -> (f64, f64) {
        (self.ox + i as f64 * self.hx, self.oy + j as f64 * self.hy)
    }

    fn weight(&self, i: usize, j: usize) -> f64 {
        if !self.trapezoid {
            return self.hx * self.hy;
        }
        let wx = if i == 0 || i + 1 == self.mx { 0.5 } else { 1.0 };
        let wy = if j == 0 || j + 1 == self.my { 0.5 } else { 1.0 };
        wx * wy * self.hx * self.hy
    }

    #[inline]
    fn mag(&self, k: usize) -> f64 {
        if self.comps.len() == 1 {
            self.comps[0][k].abs()
        } else {
            self.comps.iter().map(|c| c[k] * c[k]).sum::<f64>().sqrt()
        }
    }

    #[inline]
    fn dist_between(&self, k: usize, l: usize) -> f64 {
        if self.comps.len() == 1 {
            (self.comps[0][k] - self.comps[0][l]).abs()
        } else {
            self.comps
                .iter()
                .map(|c| (c[k] - c[l]) * (c[k] - c[l]))
                .sum::<f64>()
                .sqrt()
        }
    }

    /// Mask of points kept after optional corner exclusion (radius `4h`).
    fn keep_mask(&self, corner_exclusion: bool) -> Vec<bool> {
        let mut keep = vec![true; self.mx * self.my];
        if !corner_exclusion {
            return keep;
        }
        let d = &self.domain;
        let r = 4.0 * d.hx().max(d.hy());
        let (x0, y0) = d.origin();
        let corners = [
            (x0, y0),
            (x0 + d.lx(), y0),
            (x0, y0 + d.ly()),
            (x0 + d.lx(), y0 + d.ly()),
        ];
        for j in 0..self.my {
            for i in 0..self.mx {
                let (x, y) = self.pos(i, j);
                if corners
                    .iter()
                    .any(|&(cx, cy)| (x - cx).hypot(y - cy) < r - 1e-12 * r)
                {
                    keep[self.idx(i, j)] = false;
                }
            }
        }
        keep
    }

    /// First derivative along `axis` (0 = x) by centred differences,
    /// second-order one-sided at the ends.
    pub fn derivative(&self, axis: usize) -> Lattice {
        let comps = self
            .comps
            .iter()
            .map(|c| {
                let mut out = vec![0.0; c.len()];
                for j in 0..self.my {
                    for i in 0..self.mx {
                        let (m, h, k) = if axis == 0 { (self.mx, self.hx, i) } else { (self.my, self.hy, j) };
                        let at = |t: usize| -> f64 {
                            if axis == 0 {
                                c[self.idx(t, j)]
                            } else {
                                c[self.idx(i, t)]
                            }
                        };
                        out[self.idx(i, j)] = if m < 3 {
                            (at(m - 1) - at(0)) / (h * (m - 1).max(1) as f64)
                        } else if k == 0 {
                            (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
                        } else if k + 1 == m {
                            (3.0 * at(m - 1) - 4.0 * at(m - 2) + at(m - 3)) / (2.0 * h)
                        } else {
                            (at(k + 1) - at(k - 1)) / (2.0 * h)
                        };
                    }
                }
                out
            })
            .collect();
        self.with_comps(comps)
    }

    /// All derivatives `∂^β` with `|β| = n` (`n ≤ 2`), one lattice each.
    fn derivatives_of_order(&self, n: usize) -> Vec<Lattice> {
        match n {
            0 => vec![self.clone()],
            1 => vec![self.derivative(0), self.derivative(1)],
            _ => {
                let dx = self.derivative(0);
                let dy = self.derivative(1);
                vec![dx.derivative(0), dx.derivative(1), dy.derivative(1)]
            }
        }
    }

    pub fn sup(&self, keep: &[bool]) -> f64 {
        (0..self.mx * self.my)
            .filter(|&k| keep[k])
            .map(|k| self.mag(k))
            .fold(0.0, f64::max)
    }

    pub fn lp(&self, p: f64, keep: &[bool]) -> f64 {
        if p.is_infinite() {
            return self.sup(keep);
        }
        let mut s = 0.0;
        for j in 0..self.my {
            for i in 0..self.mx {
                let k = self.idx(i, j);
                if keep[k] {
                    s += self.weight(i, j) * self.mag(k).powf(p);
                }
            }
        }
        s.powf(1.0 / p)
    }

    /// `Σ |∇u|ᵖ` pieces from forward differences on lattice edges, with the
    /// transverse trapezoid weight; returns `(‖∂x u‖ᵖ_p, ‖∂y u‖ᵖ_p)` (or sups).
    fn forward_diff_powers(&self, p: f64, keep: &[bool]) -> (f64, f64) {
        let mut sx = 0.0f64;
        let mut sy = 0.0f64;
        let tw = |k: usize, m: usize| if self.trapezoid && (k == 0 || k + 1 == m) { 0.5 } else { 1.0 };
        for j in 0..self.my {
            for i in 0..self.mx.saturating_sub(1) {
                let (a, b) = (self.idx(i, j), self.idx(i + 1, j));
                if !(keep[a] && keep[b]) {
                    continue;
                }
                let v = self.dist_between(a, b) / self.hx;
                if p.is_infinite() {
                    sx = sx.max(v);
                } else {
                    sx += tw(j, self.my) * self.hx * self.hy * v.powf(p);
                }
            }
        }
        for j in 0..self.my.saturating_sub(1) {
            for i in 0..self.mx {
                let (a, b) = (self.idx(i, j), self.idx(i, j + 1));
                if !(keep[a] && keep[b]) {
                    continue;
                }
                let v = self.dist_between(a, b) / self.hy;
                if p.is_infinite() {
                    sy = sy.max(v);
                } else {
                    sy += tw(i, self.mx) * self.hx * self.hy * v.powf(p);
                }
            }
        }
        (sx, sy)
    }

    /// Discrete Hölder seminorm `max |u(x) − u(y)| / |x − y|^α`.
    pub fn holder_seminorm(&self, alpha: f64, keep: &[bool]) -> f64 {
        if (self.mx - 1).max(self.my - 1) <= EXHAUSTIVE_MAX {
            self.holder_exhaustive(alpha, keep)
        } else {
            self.holder_sampled(alpha, keep, SAMPLED_PAIRS)
        }
    }

    /// Exhaustive scan, organised by lattice offset so the distance factor is
    /// computed once per offset.
    pub fn holder_exhaustive(&self, alpha: f64, keep: &[bool]) -> f64 {
        let (mx, my) = (self.mx as isize, self.my as isize);
        let offsets: Vec<(isize, isize)> = (0..my)
            .flat_map(|dj| (-(mx - 1)..mx).map(move |di| (di, dj)))
            .filter(|&(di, dj)| dj > 0 || di > 0)
            .collect();
        offsets
            .par_iter()
            .map(|&(di, dj)| {
                let dist = ((di as f64 * self.hx).powi(2) + (dj as f64 * self.hy).powi(2)).sqrt();
                let inv = dist.powf(-alpha);
                let mut best = 0.0f64;
                let (ilo, ihi) = (0.max(-di), mx.min(mx - di));
                for j in 0..(my - dj) {
                    for i in ilo..ihi {
                        let a = self.idx(i as usize, j as usize);
                        let b = self.idx((i + di) as usize, (j + dj) as usize);
                        if keep[a] && keep[b] {
                            best = best.max(self.dist_between(a, b));
                        }
                    }
                }
                best * inv
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Stratified sample: all nearest-neighbour pairs (axis and diagonal) plus
    /// `pairs` random pairs whose offsets are drawn at 16 log-spaced scales.
    /// Uses a counter-based generator so the result is independent of the
    /// thread schedule.
    pub fn holder_sampled(&self, alpha: f64, keep: &[bool], pairs: usize) -> f64 {
        let (mx, my) = (self.mx, self.my);
        let ratio = |a: usize, b: usize, di: isize, dj: isize| -> f64 {
            if !(keep[a] && keep[b]) {
                return 0.0;
            }
            let d = ((di as f64 * self.hx).powi(2) + (dj as f64 * self.hy).powi(2)).sqrt();
            self.dist_between(a, b) / d.powf(alpha)
        };
        let near = (0..my)
            .into_par_iter()
            .map(|j| {
                let mut best = 0.0f64;
                for i in 0..mx {
                    let a = self.idx(i, j);
                    if i + 1 < mx {
                        best = best.max(ratio(a, self.idx(i + 1, j), 1, 0));
                    }
                    if j + 1 < my {
                        best = best.max(ratio(a, self.idx(i, j + 1), 0, 1));
                        if i + 1 < mx {
                            best = best.max(ratio(a, self.idx(i + 1, j + 1), 1, 1));
                        }
                        if i > 0 {
                            best = best.max(ratio(a, self.idx(i - 1, j + 1), -1, 1));
                        }
                    }
                }
                best
            })
            .reduce(|| 0.0, f64::max);
        let maxr = mx.max(my) as f64;
        let far = (0..pairs)
            .into_par_iter()
            .map(|k| {
                let r0 = splitmix64(SAMPLE_SEED ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                let r1 = splitmix64(r0);
                let r2 = splitmix64(r1);
                let r3 = splitmix64(r2);
                let stratum = (k % 16) as f64;
                let radius = maxr.powf(stratum / 15.0).max(1.0);
                let i = (r0 % mx as u64) as isize;
                let j = (r1 % my as u64) as isize;
                let di = ((unit(r2) * 2.0 - 1.0) * radius).round() as isize;
                let dj = ((unit(r3) * 2.0 - 1.0) * radius).round() as isize;
                let (i2, j2) = (i + di, j + dj);
                if (di == 0 && dj == 0) || i2 < 0 || j2 < 0 || i2 >= mx as isize || j2 >= my as isize {
                    return 0.0;
                }
                ratio(
                    self.idx(i as usize, j as usize),
                    self.idx(i2 as usize, j2 as usize),
                    di,
                    dj,
                )
            })
            .reduce(|| 0.0, f64::max);
        near.max(far)
    }
}

#[inline]
pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn unit(r: u64) -> f64 {
    (r >> 11) as f64 / (1u64 << 53) as f64
}

/// Norm of `f` per `spec`.
pub fn norm<'a>(f: impl Into<FieldRef<'a>>, spec: &NormSpec) -> Result<f64> {
    spec.validate()?;
    let l = Lattice::from_field(f.into())?;
    norm_lattice(&l, spec)
}

pub fn norm_lattice(l: &Lattice, spec: &NormSpec) -> Result<f64> {
    spec.validate()?;
    let keep = l.keep_mask(spec.corner_exclusion);
    Ok(match spec.kind {
        NormKind::Lp => l.lp(spec.p, &keep),
        NormKind::Sup => l.sup(&keep),
        NormKind::W1p => {
            let (sx, sy) = l.forward_diff_powers(spec.p, &keep);
            if spec.p.is_infinite() {
                l.sup(&keep).max(sx).max(sy)
            } else {
                (l.lp(spec.p, &keep).powf(spec.p) + sx + sy).powf(1.0 / spec.p)
            }
        }
        NormKind::C1 => cn_sup(l, 1, &keep),
        NormKind::C2 => cn_sup(l, 2, &keep),
        NormKind::CnAlpha => {
            let semi: f64 = l
                .derivatives_of_order(spec.n)
                .iter()
                .map(|d| d.holder_seminorm(spec.alpha, &keep))
                .sum();
            cn_sup(l, spec.n, &keep) + semi
        }
    })
}

/// `Σ_{|β| ≤ n} sup |∂^β u|`.
fn cn_sup(l: &Lattice, n: usize, keep: &[bool]) -> f64 {
    (0..=n)
        .flat_map(|k| l.derivatives_of_order(k))
        .map(|d| d.sup(keep))
        .sum()
}

/// Seminorm `Σ_{|β| = n} [∂^β u]_α` alone.
pub fn holder_seminorm<'a>(f: impl Into<FieldRef<'a>>, n: usize, alpha: f64, corner_exclusion: bool) -> Result<f64> {
    let spec = NormSpec::holder(n, alpha).with_corner_exclusion(corner_exclusion);
    spec.validate()?;
    let l = Lattice::from_field(f.into())?;
    let keep = l.keep_mask(corner_exclusion);
    Ok(l
        .derivatives_of_order(n)
        .iter()
        .map(|d| d.holder_seminorm(alpha, &keep))
        .sum())
}

/// Discrete `W^{2,p}` norm: `(Σ_{|β|≤2} ‖∂^β u‖_p^p)^{1/p}` with centred
/// differences (second-order one-sided at the ends).
pub fn w2p_norm<'a>(f: impl Into<FieldRef<'a>>, p: f64, corner_exclusion: bool) -> Result<f64> {
    NormSpec::lp(p).validate()?;
    let l = Lattice::from_field(f.into())?;
    let keep = l.keep_mask(corner_exclusion);
    let parts = (0..=2).flat_map(|k| l.derivatives_of_order(k));
    Ok(if p.is_infinite() {
        parts.map(|d| d.sup(&keep)).fold(0.0, f64::max)
    } else {
        parts.map(|d| d.lp(p, &keep).powf(p)).sum::<f64>().powf(1.0 / p)
    })
}

/// Trapezoid Lᵖ norm of `|ψ|`.
pub fn lp_nodes_complex(psi: &ComplexField, p: f64) -> f64 {
    norm(psi, &NormSpec::lp(p)).expect("valid spec")
}

/// Node maximising `|ψ|` (first in storage order on ties) and its distance to `∂Ω`.
pub fn argmax_distance(psi: &ComplexField) -> Result<((f64, f64), f64)> {
    let g = psi.grid();
    let mut best = 0.0;
    let mut at = None;
    for (k, z) in psi.as_slice().iter().enumerate() {
        let m = z.norm();
        if m > best {
            best = m;
            at = Some(k);
        }
    }
    let k = at.ok_or_else(|| Error::Degenerate("order parameter vanishes identically".into()))?;
    let (i, j) = g.node_ij(k);
    let (x, y) = g.node_pos(i, j);
    Ok(((x, y), g.dist_to_boundary(x, y)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_node(g: Grid, seed: u64) -> NodeField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        NodeField::from_vec(g, (0..g.num_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap()
    }

    #[test]
    fn constants_and_linear_functions() {
        let g = Grid::square(16, 1.0).unwrap();
        let c = NodeField::from_fn(g, |_, _| -2.5);
        assert!((norm(&c, &NormSpec::holder(0, 0.5)).unwrap() - 2.5).abs() < 1e-14);
        let x = NodeField::from_fn(g, |x, _| x);
        for alpha in [0.25, 0.5, 0.75] {
            let s = holder_seminorm(&x, 0, alpha, false).unwrap();
            assert!((s - 1.0).abs() < 1e-12, "{alpha}: {s}");
        }
        let one = NodeField::from_fn(Grid::new(8, 8, 2.0, 1.5).unwrap(), |_, _| 1.0);
        for p in [1.0, 2.0, 3.5] {
            let v = norm(&one, &NormSpec::lp(p)).unwrap();
            assert!((v - 3.0f64.powf(1.0 / p)).abs() < 1e-13);
        }
    }

    #[test]
    fn l2_matches_direct_summation() {
        let g = Grid::new(12, 9, 1.2, 0.9).unwrap();
        let f = random_node(g, 1);
        let mut s = 0.0;
        for j in 0..=9 {
            for i in 0..=12 {
                let wx = if i == 0 || i == 12 { 0.5 } else { 1.0 };
                let wy = if j == 0 || j == 9 { 0.5 } else { 1.0 };
                s += wx * wy * 0.1 * 0.1 * f.at(i, j).powi(2);
            }
        }
        assert!((norm(&f, &NormSpec::lp(2.0)).unwrap() - s.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn derivative_norms_of_polynomials() {
        let g = Grid::square(20, 1.0).unwrap();
        // u = x² + xy: sup u = 2, sup|u_x| = 3, sup|u_y| = 1, u_xx = 2, u_xy = 1, u_yy = 0.
        let u = NodeField::from_fn(g, |x, y| x * x + x * y);
        assert!((norm(&u, &NormSpec::c1()).unwrap() - 6.0).abs() < 1e-10);
        assert!((norm(&u, &NormSpec::c2()).unwrap() - 9.0).abs() < 1e-9);
        // W^{1,∞} with forward differences: sup|Δu/h| ≤ 3.
        let w = norm(&u, &NormSpec::w1p(f64::INFINITY)).unwrap();
        assert!(w <= 3.0 + 1e-12 && w > 2.9);
    }

    #[test]
    fn complex_phase_invariance() {
        let g = Grid::square(16, 1.0).unwrap();
        let psi = ComplexField::from_fn(g, |x, y| Complex64::new(x.sin(), x * y));
        let rot = psi.scale(Complex64::cis(0.7));
        for spec in [NormSpec::lp(2.0), NormSpec::w1p(4.0), NormSpec::holder(1, 0.5), NormSpec::c2()] {
            let (a, b) = (norm(&psi, &spec).unwrap(), norm(&rot, &spec).unwrap());
            assert!((a - b).abs() < 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn sampled_agrees_with_exhaustive_on_smooth_fields() {
        let g = Grid::square(64, 1.0).unwrap();
        let f = NodeField::from_fn(g, |x, y| (3.0 * x).sin() * (2.0 * y).cos());
        let l = Lattice::from_field((&f).into()).unwrap();
        let keep = vec![true; g.num_nodes()];
        let ex = l.holder_exhaustive(0.5, &keep);
        let sa = l.holder_sampled(0.5, &keep, 200_000);
        assert!(sa <= ex * (1.0 + 1e-12));
        assert!(sa >= 0.95 * ex, "{sa} vs {ex}");
    }

    #[test]
    fn corner_exclusion_drops_corner_spikes() {
        let g = Grid::square(32, 1.0).unwrap();
        let mut f = NodeField::zeros(g);
        f[g.node(0, 0)] = 10.0;
        f[g.node(16, 16)] = 1.0;
        assert_eq!(norm(&f, &NormSpec::sup()).unwrap(), 10.0);
        let ex = NormSpec::sup().with_corner_exclusion(true);
        assert_eq!(norm(&f, &ex).unwrap(), 1.0);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let g = Grid::square(8, 1.0).unwrap();
        let f = NodeField::zeros(g);
        assert!(norm(&f, &NormSpec::holder(0, 1.0)).is_err());
        assert!(norm(&f, &NormSpec::lp(0.5)).is_err());
        assert!(norm(&f, &NormSpec::holder(3, 0.5)).is_err());
    }

    #[test]
    fn argmax_spike_and_zero() {
        let g = Grid::new(10, 8, 2.0, 1.6).unwrap();
        let mut psi = ComplexField::zeros(g);
        assert!(matches!(argmax_distance(&psi), Err(Error::Degenerate(_))));
        psi[g.node(3, 2)] = Complex64::new(0.0, 2.0);
        let ((x, y), d) = argmax_distance(&psi).unwrap();
        assert!((x - 0.6).abs() < 1e-12 && (y - 0.4).abs() < 1e-12);
        assert!((d - 0.4).abs() < 1e-12);
        psi[g.node(1, 1)] = Complex64::new(2.0, 0.0);
        let ((x, _), _) = argmax_distance(&psi).unwrap();
        assert!((x - 0.2).abs() < 1e-12);
    }

    #[test]
    fn edge_fields_are_vector_valued() {
        let g = Grid::square(16, 1.0).unwrap();
        let a = EdgeField::from_fn(g, |_, _| (3.0, 4.0));
        assert!((norm(&a, &NormSpec::sup()).unwrap() - 5.0).abs() < 1e-12);
    }
}
