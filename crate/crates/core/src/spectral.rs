//! Θ₀ via the half-line fibers `−d²/dt² + (t − ξ)²`, the Landau levels, the
//! direct 2D half-plane ground state and truncated-domain probes of the
//! limiting nonlinear problems.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pcg, tridiag_eigenvalue};
use crate::optim::{ncg, NcgOptions, Objective};

/// Bisection accuracy of the tridiagonal eigenvalues.
const EIG_TOL: f64 = 1e-10;

/// Inverse-iteration shift with a magnetic Neumann edge, safely below Θ₀.
const NEUMANN_SHIFT: f64 = 0.58;

/// Four-digit value of Θ₀ for argument checks and regime gates.
pub const THETA0_APPROX: f64 = 0.5901;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberProblem {
    pub xi: f64,
    /// Truncation length of the half-line.
    pub t: f64,
    /// Number of cells on `(0, T)`.
    pub n: usize,
}

impl FiberProblem {
    pub fn new(xi: f64, t: f64, n: usize) -> Result<Self> {
        let fp = FiberProblem { xi, t, n };
        fp.validate()?;
        Ok(fp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t >= 8.0) || !self.t.is_finite() {
            return Err(Error::Spec(format!("truncation length must be at least 8, got {}", self.t)));
        }
        if self.n < 200 {
            return Err(Error::Spec(format!("need at least 200 points, got {}", self.n)));
        }
        if !self.xi.is_finite() {
            return Err(Error::Spec("xi must be finite".into()));
        }
        Ok(())
    }
}

/// Smallest eigenvalue `μ(ξ)` of the fiber operator: Neumann at 0 and
/// Dirichlet at `T`, both imposed by ghost reflection on a cell-centred grid.
pub fn mu_of_xi(fp: &FiberProblem) -> Result<f64> {
    fp.validate()?;
    let n = fp.n;
    let h = fp.t / n as f64;
    let c = 1.0 / (h * h);
    let mut d: Vec<f64> = (0..n)
        .map(|i| {
            let t = (i as f64 + 0.5) * h;
            2.0 * c + (t - fp.xi) * (t - fp.xi)
        })
        .collect();
    d[0] -= c;
    d[n - 1] += c;
    let e = vec![-c; n - 1];
    Ok(tridiag_eigenvalue(&d, &e, 0, EIG_TOL))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    pub theta0: f64,
    pub xi_opt: f64,
    /// `(ξ, μ(ξ))` at the finest resolution, in evaluation order.
    pub mu_samples: Vec<(f64, f64)>,
    pub n_coarse: usize,
    pub n_fine: usize,
    pub t: f64,
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

fn golden_min(
    f: &mut impl FnMut(f64) -> Result<f64>,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let (mut a, mut b) = (lo, hi);
    let fa = f(a)?;
    let fb = f(b)?;
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    if f1.min(f2) >= fa.min(fb) {
        return Err(Error::Bracket(format!(
            "μ is not minimised inside [{lo}, {hi}] (ends {fa}, {fb}; interior {f1}, {f2})"
        )));
    }
    while b - a > tol {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 < f2 { (x1, f1) } else { (x2, f2) })
}

/// `Θ₀ = min_ξ μ(ξ)`: golden-section search on `[0, 2]` at `n = 2000` and
/// `n = 4000` (`T = 12`), Richardson-extrapolated in `h²`.
pub fn theta0(tol: f64) -> Result<SpectralResult> {
    if !(1e-8..=1e-3).contains(&tol) {
        return Err(Error::Spec(format!("tol must lie in [1e-8, 1e-3], got {tol}")));
    }
    theta0_with(tol, 12.0, 2000, 4000)
}

pub fn theta0_with(tol: f64, t: f64, n_coarse: usize, n_fine: usize) -> Result<SpectralResult> {
    let (_, mc) = golden_min(&mut |xi| mu_of_xi(&FiberProblem::new(xi, t, n_coarse)?), 0.0, 2.0, tol)?;
    let mut samples = vec![];
    let (xf, mf) = golden_min(
        &mut |xi| {
            let mu = mu_of_xi(&FiberProblem::new(xi, t, n_fine)?)?;
            samples.push((xi, mu));
            Ok(mu)
        },
        0.0,
        2.0,
        tol,
    )?;
    let r = (n_fine as f64 / n_coarse as f64).powi(2);
    Ok(SpectralResult {
        theta0: (r * mf - mc) / (r - 1.0),
        xi_opt: xf,
        mu_samples: samples,
        n_coarse,
        n_fine,
        t,
    })
}

/// `μ(ξ)` for each `ξ` in `xis`.
pub fn mu_table(xis: &[f64], t: f64, n: usize) -> Result<Vec<(f64, f64)>> {
    xis.iter()
        .map(|&xi| Ok((xi, mu_of_xi(&FiberProblem::new(xi, t, n)?)?)))
        .collect()
}

/// CSV with columns `xi,mu,n,T`.
pub fn write_mu_csv(mut w: impl Write, rows: &[(f64, f64)], t: f64, n: usize) -> Result<()> {
    writeln!(w, "xi,mu,n,T")?;
    for (xi, mu) in rows {
        writeln!(w, "{xi:.12e},{mu:.12e},{n},{t}")?;
    }
    Ok(())
}

/// Lowest `count` eigenvalues of `−d²/dt² + t²` on `(−T, T)` with Dirichlet
/// ends, `n` interior points.
pub fn landau_levels(count: usize, t: f64, n: usize) -> Result<Vec<f64>> {
    if count > 6 {
        return Err(Error::Spec(format!("at most 6 levels, asked for {count}")));
    }
    if !(t > 0.0) || n < count.max(3) {
        return Err(Error::Spec(format!("invalid truncation T = {t}, n = {n}")));
    }
    let h = 2.0 * t / (n + 1) as f64;
    let c = 1.0 / (h * h);
    let d: Vec<f64> = (1..=n)
        .map(|i| {
            let x = -t + i as f64 * h;
            2.0 * c + x * x
        })
        .collect();
    let e = vec![-c; n - 1];
    Ok((0..count).map(|k| tridiag_eigenvalue(&d, &e, k, EIG_TOL)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Geometry {
    /// `[−R, R]²`, Dirichlet on all sides.
    Plane,
    /// `[0, R] × [−R, R]`, straight edge at `x₁ = 0`.
    Halfplane,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeCondition {
    MagneticNeumann,
    Dirichlet,
}

/// Link-variable discretization of `(−i∇ + F̃)²` with `F̃ = (0, x₁)` on a
/// truncated domain. Dirichlet nodes are eliminated; only free nodes carry
/// unknowns.
#[derive(Clone, Debug)]
pub struct TruncatedDomain {
    pub geometry: Geometry,
    pub edge: EdgeCondition,
    pub r: f64,
    pub h: f64,
    /// Positions of the free nodes.
    pub pos: Vec<(f64, f64)>,
    /// Lumped mass per free node.
    pub mass: Vec<f64>,
    /// `(tail, head, weight, link)`; `None` marks a Dirichlet node.
    edges: Vec<(Option<usize>, Option<usize>, f64, Complex64)>,
}

impl TruncatedDomain {
    pub fn new(geometry: Geometry, edge: EdgeCondition, r: f64, per_unit: usize) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() || per_unit < 2 {
            return Err(Error::Spec(format!("invalid truncation R = {r}, {per_unit} points per unit")));
        }
        let n2 = (2.0 * r * per_unit as f64).round() as usize;
        let h = 2.0 * r / n2 as f64;
        let (x1min, n1) = match geometry {
            Geometry::Plane => (-r, n2),
            Geometry::Halfplane => (0.0, n2 / 2),
        };
        let neumann = geometry == Geometry::Halfplane && edge == EdgeCondition::MagneticNeumann;
        let free_at = |i: usize, j: usize| {
            let inner_x = if neumann { i < n1 } else { i > 0 && i < n1 };
            inner_x && j > 0 && j < n2
        };
        let mut idx = vec![None; (n1 + 1) * (n2 + 1)];
        let mut pos = vec![];
        let mut mass = vec![];
        for j in 0..=n2 {
            for i in 0..=n1 {
                if free_at(i, j) {
                    idx[j * (n1 + 1) + i] = Some(pos.len());
                    pos.push((x1min + i as f64 * h, -r + j as f64 * h));
                    mass.push(if i == 0 { 0.5 * h * h } else { h * h });
                }
            }
        }
        let at = |i: usize, j: usize| idx[j * (n1 + 1) + i];
        let mut edges = vec![];
        for j in 0..=n2 {
            for i in 0..=n1 {
                if i < n1 {
                    let (t, hd) = (at(i, j), at(i + 1, j));
                    if t.is_some() || hd.is_some() {
                        let w = if j == 0 || j == n2 { 0.5 } else { 1.0 };
                        edges.push((t, hd, w, Complex64::new(1.0, 0.0)));
                    }
                }
                if j < n2 {
                    let (t, hd) = (at(i, j), at(i, j + 1));
                    if t.is_some() || hd.is_some() {
                        let w = if i == 0 || i == n1 { 0.5 } else { 1.0 };
                        let x1 = x1min + i as f64 * h;
                        edges.push((t, hd, w, Complex64::cis(x1 * h)));
                    }
                }
            }
        }
        Ok(TruncatedDomain {
            geometry,
            edge,
            r,
            h,
            pos,
            mass,
            edges,
        })
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    /// `Σ_e w_e |U_e φ_head − φ_tail|²`.
    pub fn quadratic_form(&self, phi: &[Complex64]) -> f64 {
        let zero = Complex64::new(0.0, 0.0);
        self.edges
            .iter()
            .map(|&(t, hd, w, u)| {
                let pt = t.map_or(zero, |k| phi[k]);
                let ph = hd.map_or(zero, |k| phi[k]);
                w * (u * ph - pt).norm_sqr()
            })
            .sum()
    }

    /// `out = K φ`, with `φ̄ᵀ K φ` the quadratic form.
    pub fn apply(&self, phi: &[Complex64], out: &mut [Complex64]) {
        let zero = Complex64::new(0.0, 0.0);
        out.iter_mut().for_each(|z| *z = zero);
        for &(t, hd, w, u) in &self.edges {
            let pt = t.map_or(zero, |k| phi[k]);
            let ph = hd.map_or(zero, |k| phi[k]);
            let d = u * ph - pt;
            if let Some(k) = t {
                out[k] -= w * d;
            }
            if let Some(k) = hd {
                out[k] += w * u.conj() * d;
            }
        }
    }

    fn diag(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.len()];
        for &(t, hd, w, _) in &self.edges {
            for k in [t, hd].into_iter().flatten() {
                d[k] += w;
            }
        }
        d
    }

    pub fn dist_to_edge(&self, k: usize) -> f64 {
        let (x1, x2) = self.pos[k];
        match self.geometry {
            Geometry::Halfplane => x1,
            Geometry::Plane => (self.r - x1.abs()).min(self.r - x2.abs()),
        }
    }
}

fn pack(z: &[Complex64], out: &mut [f64]) {
    let n = z.len();
    for (k, v) in z.iter().enumerate() {
        out[k] = v.re;
        out[n + k] = v.im;
    }
}

fn unpack(x: &[f64], out: &mut [Complex64]) {
    let n = out.len();
    for (k, v) in out.iter_mut().enumerate() {
        *v = Complex64::new(x[k], x[n + k]);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenOutcome {
    pub eigenvalue: f64,
    pub iterations: usize,
    /// `‖Kv − λMv‖_{M⁻¹} / (λ‖v‖_M)`.
    pub residual: f64,
}

/// Lowest eigenvalue of `K v = λ M v` by inverse iteration with shift
/// `sigma` (which must lie below it), each step solved by conjugate
/// gradients on the real form of the Hermitian system. Stops when the
/// residual reaches `tol`, or when the Rayleigh quotient has stagnated to
/// rounding with a residual below `1e-3`, which happens inside nearly
/// degenerate clusters such as the lowest Landau level.
pub fn lowest_eigenvalue(dom: &TruncatedDomain, sigma: f64, tol: f64, max_iter: usize) -> Result<EigenOutcome> {
    let n = dom.len();
    if n == 0 {
        return Err(Error::Spec("truncated domain has no free nodes".into()));
    }
    let diag = dom.diag();
    let inv_diag: Vec<f64> = (0..2 * n).map(|k| 1.0 / (diag[k % n] - sigma * dom.mass[k % n])).collect();
    if inv_diag.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Spec(format!("shift {sigma} makes the diagonal non-positive")));
    }
    let shifted = |x: &[f64], y: &mut [f64]| {
        let mut z = vec![Complex64::new(0.0, 0.0); n];
        let mut kz = vec![Complex64::new(0.0, 0.0); n];
        unpack(x, &mut z);
        dom.apply(&z, &mut kz);
        for k in 0..n {
            kz[k] -= sigma * dom.mass[k] * z[k];
        }
        pack(&kz, y);
    };
    // Smooth positive start, concentrated near the straight edge if any.
    let mut v: Vec<Complex64> = (0..n)
        .map(|k| {
            let (x1, x2) = dom.pos[k];
            let dx = if dom.geometry == Geometry::Halfplane { x1 - 0.8 } else { x1 };
            Complex64::new((-0.5 * (dx * dx + x2 * x2 / 4.0)).exp() + 1e-3, 0.0)
        })
        .collect();
    let mut kv = vec![Complex64::new(0.0, 0.0); n];
    let mut rhs = vec![0.0; 2 * n];
    let mut y = vec![0.0; 2 * n];
    let mut residual = f64::INFINITY;
    let mut lambda;
    let mut prev = f64::NAN;
    for it in 0..max_iter {
        let mnorm: f64 = v.iter().zip(&dom.mass).map(|(z, m)| m * z.norm_sqr()).sum::<f64>().sqrt();
        v.iter_mut().for_each(|z| *z /= mnorm);
        dom.apply(&v, &mut kv);
        lambda = v.iter().zip(&kv).map(|(a, b)| (a.conj() * b).re).sum::<f64>();
        residual = v
            .iter()
            .zip(&kv)
            .zip(&dom.mass)
            .map(|((a, b), m)| (b - lambda * m * a).norm_sqr() / m)
            .sum::<f64>()
            .sqrt()
            / lambda.abs().max(f64::MIN_POSITIVE);
        let stagnated = (lambda - prev).abs() <= 1e-13 * lambda.abs() && residual <= 1e-3;
        prev = lambda;
        if residual <= tol || stagnated {
            if lambda <= sigma {
                return Err(Error::Precondition(format!(
                    "shift {sigma} is not below the computed eigenvalue {lambda}"
                )));
            }
            return Ok(EigenOutcome {
                eigenvalue: lambda,
                iterations: it,
                residual,
            });
        }
        let mv: Vec<Complex64> = v.iter().zip(&dom.mass).map(|(z, m)| z * m).collect();
        pack(&mv, &mut rhs);
        pack(&v, &mut y);
        for val in y.iter_mut() {
            *val /= (lambda - sigma).max(1e-3);
        }
        pcg(&shifted, &rhs, &mut y, &inv_diag, 1e-11, 20 * n + 100)?;
        unpack(&y, &mut v);
    }
    Err(Error::Eigen {
        iterations: max_iter,
        residual,
    })
}

/// Lowest eigenvalue of the half-plane operator truncated to
/// `[0, R] × [−R, R]` at `per_unit` points per unit length.
pub fn halfplane_ground_state(r: f64, per_unit: usize) -> Result<f64> {
    if !(r >= 6.0) {
        return Err(Error::Spec(format!("R must be at least 6, got {r}")));
    }
    let dom = TruncatedDomain::new(Geometry::Halfplane, EdgeCondition::MagneticNeumann, r, per_unit)?;
    Ok(lowest_eigenvalue(&dom, NEUMANN_SHIFT, 1e-7, 2000)?.eigenvalue)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfplaneEstimate {
    pub r_small: f64,
    pub r_large: f64,
    pub lambda_small: f64,
    pub lambda_large: f64,
    /// Limit `R → ∞` assuming `λ(R) = Θ + c/R²`.
    pub extrapolated: f64,
}

/// Two truncations of the half-plane problem extrapolated in `R`. Along the
/// edge the ground state is a plane wave, so the Dirichlet walls at
/// `x₂ = ±R` cost `μ''(ξ₀)/2 · (π/2R)²` to leading order; that algebraic
/// term dominates the (Gaussian) error from truncating `x₁`.
pub fn halfplane_extrapolated(r_small: f64, r_large: f64, per_unit: usize) -> Result<HalfplaneEstimate> {
    if !(r_large > r_small) {
        return Err(Error::Spec(format!("need R_small < R_large, got {r_small}, {r_large}")));
    }
    let lambda_small = halfplane_ground_state(r_small, per_unit)?;
    let lambda_large = halfplane_ground_state(r_large, per_unit)?;
    let (a, b) = (r_small * r_small, r_large * r_large);
    Ok(HalfplaneEstimate {
        r_small,
        r_large,
        lambda_small,
        lambda_large,
        extrapolated: (b * lambda_large - a * lambda_small) / (b - a),
    })
}

/// Lowest eigenvalue for any geometry and edge condition. The shift sits
/// below the known continuum thresholds (Θ₀ with a Neumann edge, 1 otherwise).
/// Without a Neumann edge the bottom of the spectrum is a tight cluster near
/// the lowest Landau level, so the residual target is relaxed to `1e-4`;
/// the Rayleigh quotient is then accurate to well below that.
pub fn linear_ground_state(geometry: Geometry, edge: EdgeCondition, r: f64, per_unit: usize) -> Result<f64> {
    let dom = TruncatedDomain::new(geometry, edge, r, per_unit)?;
    let neumann = geometry == Geometry::Halfplane && edge == EdgeCondition::MagneticNeumann;
    let (sigma, tol) = if neumann { (NEUMANN_SHIFT, 1e-7) } else { (0.95, 1e-4) };
    Ok(lowest_eigenvalue(&dom, sigma, tol, 2000)?.eigenvalue)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    pub per_unit: usize,
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Distance from the edge within which mass counts as localized.
    pub edge_band: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            per_unit: 8,
            grad_tol: 1e-6,
            max_iter: 20000,
            edge_band: 3.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub sup_norm: f64,
    /// Energy of the returned state (0 for the zero state).
    pub energy: f64,
    /// Fraction of `∫|φ|²` within `edge_band` of the straight edge (plane:
    /// of the outer boundary); 0 for the zero state.
    pub edge_mass_fraction: f64,
    pub converged: bool,
    pub iterations: usize,
    /// The descent ended at energy ≥ 0, so the zero state is returned.
    pub zero_state: bool,
}

struct ProbeEnergy<'a> {
    dom: &'a TruncatedDomain,
    lambda: f64,
    quartic: f64,
    minv: Vec<f64>,
    scale: f64,
}

impl ProbeEnergy<'_> {
    fn value_grad_c(&self, phi: &[Complex64], g: Option<&mut [Complex64]>) -> f64 {
        let zero = Complex64::new(0.0, 0.0);
        let mut e = 0.0;
        let mut g = g;
        if let Some(g) = g.as_deref_mut() {
            g.iter_mut().for_each(|z| *z = zero);
        }
        for &(t, hd, w, u) in &self.dom.edges {
            let pt = t.map_or(zero, |k| phi[k]);
            let ph = hd.map_or(zero, |k| phi[k]);
            let d = u * ph - pt;
            e += w * d.norm_sqr();
            if let Some(g) = g.as_deref_mut() {
                if let Some(k) = t {
                    g[k] -= 2.0 * w * d;
                }
                if let Some(k) = hd {
                    g[k] += 2.0 * w * u.conj() * d;
                }
            }
        }
        for (k, (z, m)) in phi.iter().zip(&self.dom.mass).enumerate() {
            let r2 = z.norm_sqr();
            e += m * (-self.lambda * r2 + 0.5 * self.quartic * r2 * r2);
            if let Some(g) = g.as_deref_mut() {
                g[k] += 2.0 * m * (-self.lambda + self.quartic * r2) * z;
            }
        }
        e
    }
}

impl Objective for ProbeEnergy<'_> {
    fn dim(&self) -> usize {
        2 * self.dom.len()
    }

    fn value_grad(&self, x: &[f64], g: &mut [f64]) -> f64 {
        let n = self.dom.len();
        let mut phi = vec![Complex64::new(0.0, 0.0); n];
        unpack(x, &mut phi);
        let mut gc = vec![Complex64::new(0.0, 0.0); n];
        let e = self.value_grad_c(&phi, Some(&mut gc));
        pack(&gc, g);
        e
    }

    fn inv_metric(&self) -> &[f64] {
        &self.minv
    }

    fn grad_scale(&self) -> f64 {
        self.scale
    }
}

/// Minimises `∫|(−i∇ + F̃)φ|² − λ|φ|² + (λS²/2)|φ|⁴` on the truncated
/// geometry (straight edge magnetic Neumann for the half-plane) and reports
/// the sup-norm of the minimiser, compared against the zero state.
pub fn nonlinear_limit_probe(lambda: f64, s: f64, r: f64, geometry: Geometry, opts: &ProbeOptions) -> Result<ProbeResult> {
    if !(lambda >= 0.0) || !(s >= 0.0) {
        return Err(Error::Spec(format!("need λ ≥ 0 and S ≥ 0, got λ = {lambda}, S = {s}")));
    }
    let threshold = match geometry {
        Geometry::Plane => 1.0,
        Geometry::Halfplane => THETA0_APPROX,
    };
    if s == 0.0 && lambda >= threshold - 1e-3 {
        return Err(Error::Spec(format!(
            "S = 0 leaves the energy unbounded below for λ = {lambda} at or above the threshold {threshold}"
        )));
    }
    let dom = TruncatedDomain::new(geometry, EdgeCondition::MagneticNeumann, r, opts.per_unit)?;
    let n = dom.len();
    let area: f64 = dom.mass.iter().sum();
    let mut obj = ProbeEnergy {
        dom: &dom,
        lambda,
        quartic: lambda * s * s,
        minv: (0..2 * n).map(|k| 1.0 / dom.mass[k % n]).collect(),
        scale: area.sqrt(),
    };
    let mut x = vec![0.0; 2 * n];
    x[..n].iter_mut().for_each(|v| *v = 1.0);
    let stats = ncg(
        &mut obj,
        &mut x,
        &NcgOptions {
            tol: opts.grad_tol,
            max_iter: opts.max_iter,
        },
    );
    let mut phi = vec![Complex64::new(0.0, 0.0); n];
    unpack(&x, &mut phi);
    let e = obj.value_grad_c(&phi, None);
    if !(e < 0.0) {
        return Ok(ProbeResult {
            sup_norm: 0.0,
            energy: 0.0,
            edge_mass_fraction: 0.0,
            converged: stats.converged,
            iterations: stats.iterations,
            zero_state: true,
        });
    }
    let sup = phi.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let total: f64 = phi.iter().zip(&dom.mass).map(|(z, m)| m * z.norm_sqr()).sum();
    let near: f64 = (0..n)
        .filter(|&k| dom.dist_to_edge(k) <= opts.edge_band)
        .map(|k| dom.mass[k] * phi[k].norm_sqr())
        .sum();
    Ok(ProbeResult {
        sup_norm: sup,
        energy: e,
        edge_mass_fraction: near / total,
        converged: stats.converged,
        iterations: stats.iterations,
        zero_state: false,
    })
}
