//! Discrete Ginzburg–Landau energy, its first variation and minimisation.
//!
//! ```text
//! E(ψ, A) = Σ_e w_e |U_e ψ_head − ψ_tail|² / h_e²
//!         + Σ_n a_n (−κ²|ψ_n|² + κ²/2 |ψ_n|⁴)
//!         + Σ_c h² κ²H² (curl A − 1)²
//! ```
//!
//! with `U_e = exp(iκH A_e h_e)`, `w_e` the edge quadrature weight (halved on
//! edges lying along `∂Ω`) and `a_n` the trapezoid node weight. The magnetic
//! Neumann condition and `curl A = 1` on `∂Ω` are the natural boundary
//! conditions of this sum.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauge::{cell_filter, london_project_with_gauge, solve_neumann, reference_potential_with, PoissonOptions};
use crate::grid::{ComplexField, EdgeField, Grid, NodeField};
use crate::operators::{curl, Links};
use crate::optim::{ncg, NcgOptions, Objective};

#[derive(Clone, Debug, PartialEq)]
pub struct GLState {
    pub psi: ComplexField,
    pub a: EdgeField,
    pub kappa: f64,
    pub h: f64,
}

impl GLState {
    pub fn new(psi: ComplexField, a: EdgeField, kappa: f64, h: f64) -> Result<Self> {
        psi.grid().check_same(a.grid(), "state")?;
        if !(kappa.is_finite() && kappa > 0.0 && h.is_finite() && h > 0.0) {
            return Err(Error::Spec(format!(
                "kappa and H must be positive and finite, got {kappa}, {h}"
            )));
        }
        if !psi.is_finite() || !a.is_finite() {
            return Err(Error::Spec("state contains non-finite values".into()));
        }
        Ok(GLState { psi, a, kappa, h })
    }

    /// Normal state `(0, F)`.
    pub fn normal(grid: Grid, kappa: f64, h: f64) -> Result<Self> {
        let f = reference_potential_with(&grid, &PoissonOptions::default())?;
        Self::new(ComplexField::zeros(grid), f, kappa, h)
    }

    /// Initial state for `opts.init`.
    pub fn initial(grid: Grid, kappa: f64, h: f64, opts: &SolveOptions) -> Result<Self> {
        opts.validate()?;
        let f = reference_potential_with(&grid, &opts.poisson)?;
        let base = match opts.init {
            Init::Normal => 0.0,
            Init::Uniform | Init::SeededNoise => 1.0,
        };
        let mut psi = ComplexField::constant(grid, Complex64::new(base, 0.0));
        if opts.init != Init::Uniform && opts.noise_amp > 0.0 {
            let noise = smooth_noise(&grid, opts.seed, opts.noise_amp);
            for (z, n) in psi.as_mut_slice().iter_mut().zip(noise.as_slice()) {
                *z += n;
            }
        }
        Self::new(psi, f, kappa, h)
    }

    pub fn grid(&self) -> &Grid {
        self.psi.grid()
    }

    /// Field strength `B = κH` multiplying `A` in the magnetic derivative.
    pub fn b(&self) -> f64 {
        self.kappa * self.h
    }

    fn to_vec(&self) -> Vec<f64> {
        let n = self.psi.len();
        let mut x = Vec::with_capacity(2 * n + self.a.xs().len() + self.a.ys().len());
        x.extend(self.psi.as_slice().iter().map(|z| z.re));
        x.extend(self.psi.as_slice().iter().map(|z| z.im));
        x.extend_from_slice(self.a.xs());
        x.extend_from_slice(self.a.ys());
        x
    }

    fn from_vec(&self, x: &[f64]) -> GLState {
        let g = *self.grid();
        let n = g.num_nodes();
        let nxe = g.num_xedges();
        let psi = (0..n).map(|k| Complex64::new(x[k], x[n + k])).collect();
        let ax = x[2 * n..2 * n + nxe].to_vec();
        let ay = x[2 * n + nxe..].to_vec();
        GLState {
            psi: ComplexField::from_vec(g, psi).expect("layout"),
            a: EdgeField::from_vecs(g, ax, ay).expect("layout"),
            kappa: self.kappa,
            h: self.h,
        }
    }
}

/// Smooth complex random field: a few low cosine modes with seeded
/// coefficients, scaled to sup-norm `amp`. Independent of the resolution.
pub fn smooth_noise(grid: &Grid, seed: u64, amp: f64) -> ComplexField {
    const MODES: usize = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coef = [[Complex64::new(0.0, 0.0); MODES]; MODES];
    for row in coef.iter_mut() {
        for c in row.iter_mut() {
            *c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    let (x0, y0) = grid.origin();
    let (lx, ly) = (grid.lx(), grid.ly());
    let mut f = ComplexField::from_fn(*grid, |x, y| {
        let mut v = Complex64::new(0.0, 0.0);
        for (p, row) in coef.iter().enumerate() {
            let cx = (p as f64 * std::f64::consts::PI * (x - x0) / lx).cos();
            for (q, c) in row.iter().enumerate() {
                let cy = (q as f64 * std::f64::consts::PI * (y - y0) / ly).cos();
                v += c * (cx * cy / (1.0 + (p + q) as f64));
            }
        }
        v
    });
    let m = f.sup_norm();
    if m > 0.0 {
        f = f.scale(Complex64::new(amp / m, 0.0));
    }
    f
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    Normal,
    Uniform,
    SeededNoise,
}

/// Preconditioner for the descent directions. The stopping test always uses
/// the diagonal metric, so the choice does not change what "converged" means.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preconditioner {
    /// Node areas for ψ, `B²` times edge areas for A.
    Diagonal,
    /// Chebyshev polynomial in the magnetic Laplacian for ψ and the exact
    /// inverse of the quadratic part of the energy in A.
    Magnetic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
    pub init: Init,
    pub seed: u64,
    pub noise_amp: f64,
    /// Iterations between London re-projections (0 disables them).
    pub reproject_every: usize,
    pub poisson: PoissonOptions,
    pub preconditioner: Preconditioner,
    /// Polynomial degree of the ψ part of the magnetic preconditioner.
    pub chebyshev_degree: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            grad_tol: 1e-6,
            max_iter: 50_000,
            init: Init::SeededNoise,
            seed: 0,
            noise_amp: 0.1,
            reproject_every: 50,
            poisson: PoissonOptions::default(),
            preconditioner: Preconditioner::Magnetic,
            chebyshev_degree: 16,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0 && self.grad_tol <= 1e-3) {
            return Err(Error::Spec(format!(
                "grad_tol must lie in (0, 1e-3], got {}",
                self.grad_tol
            )));
        }
        if !(0.0..=0.5).contains(&self.noise_amp) {
            return Err(Error::Spec(format!(
                "noise_amp must lie in [0, 0.5], got {}",
                self.noise_amp
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::Spec("max_iter must be at least 1".into()));
        }
        if !(1..=256).contains(&self.chebyshev_degree) {
            return Err(Error::Spec(format!(
                "chebyshev_degree must lie in [1, 256], got {}",
                self.chebyshev_degree
            )));
        }
        self.poisson.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// L² norm over interior nodes of the ψ-equation residual, divided by `κ²√|Ω|`.
    pub r_psi: f64,
    /// L² norm over interior edges of the A-equation residual, divided by `κ³H√|Ω|`.
    pub r_a: f64,
    /// Sup over boundary nodes of the magnetic Neumann residual.
    pub r_bc_psi: f64,
    /// Sup over cells touching `∂Ω` of `|curl A − 1|`.
    pub r_bc_curl: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
    pub energy: f64,
    pub restarts: usize,
    pub stalled: bool,
}

/// Kinetic sum `Σ_e w_e |U_e ψ_h − ψ_t|² / h_e²` and optionally its gradient
/// with respect to `(Re ψ, Im ψ)` (packed as a complex number) and to the link
/// phases `θ_e` (`U_e = e^{iθ_e}`).
pub(crate) fn kinetic(
    g: &Grid,
    psi: &[Complex64],
    links: &Links,
    mut gpsi: Option<&mut [Complex64]>,
    mut gtheta: Option<(&mut [f64], &mut [f64])>,
) -> f64 {
    let (nx, ny) = (g.nx(), g.ny());
    let cx = g.hy() / g.hx();
    let cy = g.hx() / g.hy();
    let mut e = 0.0;
    for j in 0..=ny {
        let w = cx * if j == 0 || j == ny { 0.5 } else { 1.0 };
        for i in 0..nx {
            let k = g.xedge(i, j);
            let (t, hd) = (g.node(i, j), g.node(i + 1, j));
            let u = links.x[k];
            let up = u * psi[hd];
            let d = up - psi[t];
            e += w * d.norm_sqr();
            if let Some(gp) = gpsi.as_deref_mut() {
                gp[hd] += 2.0 * w * u.conj() * d;
                gp[t] -= 2.0 * w * d;
            }
            if let Some((gx, _)) = gtheta.as_mut() {
                gx[k] = 2.0 * w * (psi[t].conj() * up).im;
            }
        }
    }
    for j in 0..ny {
        for i in 0..=nx {
            let w = cy * if i == 0 || i == nx { 0.5 } else { 1.0 };
            let k = g.yedge(i, j);
            let (t, hd) = (g.node(i, j), g.node(i, j + 1));
            let u = links.y[k];
            let up = u * psi[hd];
            let d = up - psi[t];
            e += w * d.norm_sqr();
            if let Some(gp) = gpsi.as_deref_mut() {
                gp[hd] += 2.0 * w * u.conj() * d;
                gp[t] -= 2.0 * w * d;
            }
            if let Some((_, gy)) = gtheta.as_mut() {
                gy[k] = 2.0 * w * (psi[t].conj() * up).im;
            }
        }
    }
    e
}

/// Discrete kinetic energy `‖p_{κHA} ψ‖₂²`.
pub fn kinetic_energy(state: &GLState) -> f64 {
    let links = Links::new(&state.a, state.b());
    kinetic(state.grid(), state.psi.as_slice(), &links, None, None)
}

fn energy_parts(state: &GLState, grad: Option<(&mut [Complex64], &mut EdgeField)>) -> f64 {
    let g = *state.grid();
    let b = state.b();
    let k2 = state.kappa * state.kappa;
    let links = Links::new(&state.a, b);
    let psi = state.psi.as_slice();
    let (mut gpsi, mut ga) = match grad {
        Some((p, a)) => {
            p.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            (Some(p), Some(a))
        }
        None => (None, None),
    };
    let mut e = match (gpsi.as_deref_mut(), ga.as_deref_mut()) {
        (Some(gp), Some(ga)) => {
            let mut gx = vec![0.0; g.num_xedges()];
            let mut gy = vec![0.0; g.num_yedges()];
            let e = kinetic(&g, psi, &links, Some(gp), Some((&mut gx, &mut gy)));
            for (o, v) in ga.xs_mut().iter_mut().zip(&gx) {
                *o = v * b * g.hx();
            }
            for (o, v) in ga.ys_mut().iter_mut().zip(&gy) {
                *o = v * b * g.hy();
            }
            e
        }
        _ => kinetic(&g, psi, &links, None, None),
    };
    for (i, j) in g.nodes() {
        let k = g.node(i, j);
        let w = g.node_area(i, j);
        let r2 = psi[k].norm_sqr();
        e += w * k2 * (-r2 + 0.5 * r2 * r2);
        if let Some(gp) = gpsi.as_deref_mut() {
            gp[k] += 2.0 * w * k2 * (r2 - 1.0) * psi[k];
        }
    }
    let c = curl(&state.a);
    let (hx, hy) = (g.hx(), g.hy());
    let cf = hx * hy * b * b;
    for (i, j) in g.cells() {
        let dv = c.at(i, j) - 1.0;
        e += cf * dv * dv;
        if let Some(ga) = ga.as_deref_mut() {
            let s = 2.0 * cf * dv;
            ga.xs_mut()[g.xedge(i, j)] += s / hy;
            ga.xs_mut()[g.xedge(i, j + 1)] -= s / hy;
            ga.ys_mut()[g.yedge(i + 1, j)] += s / hx;
            ga.ys_mut()[g.yedge(i, j)] -= s / hx;
        }
    }
    e
}

pub fn energy(state: &GLState) -> f64 {
    energy_parts(state, None)
}

/// Exact first variation: `dψ = ∂E/∂Re ψ + i ∂E/∂Im ψ` per node and `∂E/∂A_e` per edge.
pub fn gradient(state: &GLState) -> (ComplexField, EdgeField) {
    let g = *state.grid();
    let mut gp = vec![Complex64::new(0.0, 0.0); g.num_nodes()];
    let mut ga = EdgeField::zeros(g);
    energy_parts(state, Some((&mut gp, &mut ga)));
    (ComplexField::from_vec(g, gp).expect("layout"), ga)
}

/// Strong-form residuals derived from the weak gradient: interior rows divided
/// by their quadrature weight give the PDE residuals, boundary rows of the
/// ψ-equation divided by their boundary length give the Neumann residual.
pub fn residuals(state: &GLState) -> ResidualReport {
    let g = *state.grid();
    let (gp, ga) = gradient(state);
    let k2 = state.kappa * state.kappa;
    let root = g.area().sqrt();
    let mut sp = 0.0;
    let mut bc = 0.0f64;
    for (i, j) in g.nodes() {
        let v = gp.at(i, j);
        if g.is_boundary_node(i, j) {
            bc = bc.max(v.norm() / (2.0 * g.boundary_length(i, j)));
        } else {
            let w = g.node_area(i, j);
            sp += w * (v / (2.0 * w)).norm_sqr();
        }
    }
    let mut sa = 0.0;
    for j in 1..g.ny() {
        for i in 0..g.nx() {
            let w = g.xedge_area(i, j);
            sa += w * (ga.x_at(i, j) / (2.0 * w)).powi(2);
        }
    }
    for j in 0..g.ny() {
        for i in 1..g.nx() {
            let w = g.yedge_area(i, j);
            sa += w * (ga.y_at(i, j) / (2.0 * w)).powi(2);
        }
    }
    let c = curl(&state.a);
    let bcc = g
        .cells()
        .filter(|&(i, j)| i == 0 || j == 0 || i + 1 == g.nx() || j + 1 == g.ny())
        .map(|(i, j)| (c.at(i, j) - 1.0).abs())
        .fold(0.0, f64::max);
    ResidualReport {
        r_psi: sp.sqrt() / (k2 * root),
        r_a: sa.sqrt() / (k2 * state.b() * root),
        r_bc_psi: bc,
        r_bc_curl: bcc,
    }
}

const MIN_MASS: f64 = 1e-2;

struct Problem {
    template: GLState,
    minv: Vec<f64>,
    scale: f64,
    reproject_every: usize,
    poisson: PoissonOptions,
    failed_projection: bool,
    links: Links,
    inv_area: Vec<f64>,
    /// Chebyshev degree, 0 for the diagonal metric.
    degree: usize,
    mass: f64,
}

fn mean_density(s: &GLState) -> f64 {
    let g = *s.grid();
    let m: f64 = g.nodes().map(|(i, j)| g.node_area(i, j) * s.psi.at(i, j).norm_sqr()).sum();
    m / g.area()
}

impl Problem {
    fn new(state: &GLState, opts: &SolveOptions) -> Problem {
        let g = *state.grid();
        let b2 = state.b() * state.b();
        let mut minv = Vec::with_capacity(state.to_vec().len());
        for _ in 0..2 {
            for (i, j) in g.nodes() {
                minv.push(1.0 / g.node_area(i, j));
            }
        }
        for j in 0..=g.ny() {
            for i in 0..g.nx() {
                minv.push(1.0 / (b2 * g.xedge_area(i, j)));
            }
        }
        for j in 0..g.ny() {
            for i in 0..=g.nx() {
                minv.push(1.0 / (b2 * g.yedge_area(i, j)));
            }
        }
        Problem {
            template: state.clone(),
            minv,
            scale: 2.0 * state.kappa * state.kappa * g.area().sqrt(),
            reproject_every: opts.reproject_every,
            poisson: opts.poisson,
            failed_projection: false,
            links: Links::new(&state.a, state.b()),
            inv_area: g.nodes().map(|(i, j)| 1.0 / g.node_area(i, j)).collect(),
            degree: match opts.preconditioner {
                Preconditioner::Diagonal => 0,
                Preconditioner::Magnetic => opts.chebyshev_degree,
            },
            mass: mean_density(state).max(MIN_MASS),
        }
    }

    /// `(CᵀW_cC + mE)⁻¹ g / 2B²` for the A block: `C` is the curl, `E` the edge
    /// areas and `m` the mean of `|ψ|²`. Gradients and `E⁻¹CᵀW_c φ` split the
    /// edge space orthogonally, so the inverse is a Neumann solve on nodes plus
    /// a spectral solve for the stream function `φ` on cells.
    fn precondition_a(&self, gx: &[f64], gy: &[f64], zx: &mut [f64], zy: &mut [f64]) {
        let g = *self.template.grid();
        let (nx, ny, hx, hy) = (g.nx(), g.ny(), g.hx(), g.hy());
        let m = self.mass;
        let b2 = self.template.b().powi(2);
        let mut rhs = vec![0.0; g.num_nodes()];
        for (i, j) in g.nodes() {
            let mut v = 0.0;
            if i > 0 {
                v += gx[g.xedge(i - 1, j)] / hx;
            }
            if i < nx {
                v -= gx[g.xedge(i, j)] / hx;
            }
            if j > 0 {
                v += gy[g.yedge(i, j - 1)] / hy;
            }
            if j < ny {
                v -= gy[g.yedge(i, j)] / hy;
            }
            rhs[g.node(i, j)] = v;
        }
        let mut chi = vec![0.0; g.num_nodes()];
        solve_neumann(&g, &rhs, &mut chi);
        let mut phi = vec![0.0; g.num_cells()];
        for (i, j) in g.cells() {
            phi[g.cell(i, j)] = gx[g.xedge(i, j)] / (hy * g.xedge_area(i, j))
                - gx[g.xedge(i, j + 1)] / (hy * g.xedge_area(i, j + 1))
                + gy[g.yedge(i + 1, j)] / (hx * g.yedge_area(i + 1, j))
                - gy[g.yedge(i, j)] / (hx * g.yedge_area(i, j));
        }
        cell_filter(&g, &mut phi, |l| 1.0 / (l * (l + m)));
        let wc = hx * hy;
        let cell = |i: isize, j: isize| {
            if i < 0 || j < 0 || i >= nx as isize || j >= ny as isize {
                0.0
            } else {
                phi[g.cell(i as usize, j as usize)]
            }
        };
        let s = 0.5 / b2;
        for j in 0..=ny {
            for i in 0..nx {
                let grad = (chi[g.node(i + 1, j)] - chi[g.node(i, j)]) / hx;
                let (ii, jj) = (i as isize, j as isize);
                let rot = wc * (cell(ii, jj) - cell(ii, jj - 1)) / (hy * g.xedge_area(i, j));
                zx[g.xedge(i, j)] = s * (grad / m + rot);
            }
        }
        for j in 0..ny {
            for i in 0..=nx {
                let grad = (chi[g.node(i, j + 1)] - chi[g.node(i, j)]) / hy;
                let (ii, jj) = (i as isize, j as isize);
                let rot = wc * (cell(ii - 1, jj) - cell(ii, jj)) / (hx * g.yedge_area(i, j));
                zy[g.yedge(i, j)] = s * (grad / m + rot);
            }
        }
    }

    /// Chebyshev approximation of `(W + K/κ²)⁻¹ g` for the ψ block, where `W`
    /// is the node mass and `K` the magnetic stiffness at the current links.
    /// `W⁻¹K` has its spectrum in `[0, 4/hx² + 4/hy²]` (Gershgorin), so the
    /// polynomial is fixed and the result is linear and symmetric in `g`.
    fn precondition_psi(&self, g: &[Complex64], z: &mut [Complex64]) {
        let grid = *self.template.grid();
        let n = g.len();
        let c = self.template.kappa * self.template.kappa;
        let top = 4.0 / (grid.hx() * grid.hx()) + 4.0 / (grid.hy() * grid.hy());
        let (lo, hi) = (1.0, 1.0 + top / c);
        let (theta, delta) = (0.5 * (hi + lo), 0.5 * (hi - lo));
        let sigma = theta / delta;
        let mut rho = 1.0 / sigma;
        let mut r: Vec<Complex64> = (0..n).map(|k| g[k] * self.inv_area[k]).collect();
        let mut d: Vec<Complex64> = r.iter().map(|v| v / theta).collect();
        z.copy_from_slice(&d);
        let scale: Vec<f64> = self.inv_area.iter().map(|w| 0.5 * w / c).collect();
        let mut kd = vec![Complex64::new(0.0, 0.0); n];
        for _ in 1..self.degree {
            kd.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            kinetic(&grid, &d, &self.links, Some(&mut kd), None);
            let rn = 1.0 / (2.0 * sigma - rho);
            let (a, b) = (rn * rho, 2.0 * rn / delta);
            for ((((r, d), z), kd), s) in r.iter_mut().zip(d.iter_mut()).zip(z.iter_mut()).zip(&kd).zip(&scale) {
                *r -= *d + kd * s;
                *d = a * *d + b * *r;
                *z += *d;
            }
            rho = rn;
        }
    }
}

impl Objective for Problem {
    fn dim(&self) -> usize {
        self.minv.len()
    }

    fn value_grad(&self, x: &[f64], out: &mut [f64]) -> f64 {
        let s = self.template.from_vec(x);
        let g = *s.grid();
        let n = g.num_nodes();
        let mut gp = vec![Complex64::new(0.0, 0.0); n];
        let mut ga = EdgeField::zeros(g);
        let e = energy_parts(&s, Some((&mut gp, &mut ga)));
        for k in 0..n {
            out[k] = gp[k].re;
            out[n + k] = gp[k].im;
        }
        let nxe = g.num_xedges();
        out[2 * n..2 * n + nxe].copy_from_slice(ga.xs());
        out[2 * n + nxe..].copy_from_slice(ga.ys());
        e
    }

    fn inv_metric(&self) -> &[f64] {
        &self.minv
    }

    fn grad_scale(&self) -> f64 {
        self.scale
    }

    fn precondition(&self, g: &[f64], z: &mut [f64]) {
        if self.degree == 0 {
            for ((z, g), m) in z.iter_mut().zip(g).zip(&self.minv) {
                *z = g * m;
            }
            return;
        }
        let n = self.template.grid().num_nodes();
        let gc: Vec<Complex64> = (0..n).map(|k| Complex64::new(g[k], g[n + k])).collect();
        let mut zc = vec![Complex64::new(0.0, 0.0); n];
        self.precondition_psi(&gc, &mut zc);
        // Puts the ψ block on the same scale as the exact A block: the ψ
        // Hessian is 2κ² times the operator approximated above.
        let s = 0.5 / (self.template.kappa * self.template.kappa);
        for k in 0..n {
            z[k] = s * zc[k].re;
            z[n + k] = s * zc[k].im;
        }
        let nxe = self.template.grid().num_xedges();
        let (gx, gy) = g[2 * n..].split_at(nxe);
        let (zx, zy) = z[2 * n..].split_at_mut(nxe);
        self.precondition_a(gx, gy, zx, zy);
    }

    fn hook(&mut self, iteration: usize, x: &mut [f64], d: &mut [f64]) -> bool {
        if self.reproject_every == 0 || iteration == 0 || iteration % self.reproject_every != 0 {
            return false;
        }
        let s = self.template.from_vec(x);
        match projection(&s, &self.poisson) {
            Ok((p, chi)) => {
                x.copy_from_slice(&p.to_vec());
                self.links = Links::new(&p.a, p.b());
                self.mass = mean_density(&p).max(MIN_MASS);
                // The direction's ψ part rotates with ψ; its A part is unchanged.
                let n = chi.len();
                let b = s.b();
                for (k, c) in chi.as_slice().iter().enumerate() {
                    let z = Complex64::new(d[k], d[n + k]) * Complex64::cis(b * c);
                    d[k] = z.re;
                    d[n + k] = z.im;
                }
                true
            }
            Err(_) => {
                self.failed_projection = true;
                false
            }
        }
    }
}

/// London projection of `A` with the compensating phase on `ψ`, which leaves
/// the energy unchanged.
pub fn project_state(state: &GLState, opts: &PoissonOptions) -> Result<GLState> {
    Ok(projection(state, opts)?.0)
}

fn projection(state: &GLState, opts: &PoissonOptions) -> Result<(GLState, NodeField)> {
    let (a, chi) = london_project_with_gauge(&state.a, opts)?;
    let b = state.b();
    let mut psi = state.psi.clone();
    for (z, c) in psi.as_mut_slice().iter_mut().zip(chi.as_slice()) {
        *z *= Complex64::cis(b * c);
    }
    Ok((
        GLState {
            psi,
            a,
            kappa: state.kappa,
            h: state.h,
        },
        chi,
    ))
}

/// Minimises the energy from `state`. A non-converged run still returns its
/// best state, with `stats.converged == false`.
pub fn minimize(state: &GLState, opts: &SolveOptions) -> Result<(GLState, ResidualReport, SolveStats)> {
    opts.validate()?;
    let mut problem = Problem::new(state, opts);
    let mut x = state.to_vec();
    let stats = ncg(
        &mut problem,
        &mut x,
        &NcgOptions {
            tol: opts.grad_tol,
            max_iter: opts.max_iter,
        },
    );
    let out = problem.template.from_vec(&x);
    let out = if opts.reproject_every > 0 {
        project_state(&out, &opts.poisson)?
    } else {
        out
    };
    let res = residuals(&out);
    let e = energy(&out);
    Ok((
        out,
        res,
        SolveStats {
            iterations: stats.iterations,
            converged: stats.converged,
            grad_norm: stats.grad_norm,
            energy: e,
            restarts: stats.restarts,
            stalled: stats.stalled,
        },
    ))
}

/// Builds the initial state from `opts` and minimises.
pub fn solve(
    grid: Grid,
    kappa: f64,
    h: f64,
    opts: &SolveOptions,
) -> Result<(GLState, ResidualReport, SolveStats)> {
    let s = GLState::initial(grid, kappa, h, opts)?;
    minimize(&s, opts)
}

/// Grid with at least `per_length` nodes per magnetic length `1/√(κH)` on a
/// square of side `l`, rounded up to a multiple of 16 and at least `min_n`.
pub fn grid_for(kappa: f64, h: f64, l: f64, per_length: f64, min_n: usize) -> Result<Grid> {
    let need = (per_length * (kappa * h).sqrt() * l).ceil() as usize;
    let n = need.max(min_n).div_ceil(16) * 16;
    Grid::square(n, l)
}

/// Relative gradient norm used as the stopping measure.
pub fn gradient_norm(state: &GLState) -> f64 {
    let p = Problem::new(state, &SolveOptions::default());
    let x = state.to_vec();
    let mut g = vec![0.0; x.len()];
    p.value_grad(&x, &mut g);
    let s: f64 = g.iter().zip(&p.minv).map(|(a, m)| a * a * m).sum();
    s.sqrt() / p.scale
}

/// Node field `|ψ|`.
pub fn modulus(state: &GLState) -> NodeField {
    state.psi.modulus()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::gauge_transform;

    fn random_state(n: usize, seed: u64, kappa: f64, h: f64) -> GLState {
        let g = Grid::square(n, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let psi = (0..g.num_nodes())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let ax = (0..g.num_xedges()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ay = (0..g.num_yedges()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        GLState::new(
            ComplexField::from_vec(g, psi).unwrap(),
            EdgeField::from_vecs(g, ax, ay).unwrap(),
            kappa,
            h,
        )
        .unwrap()
    }

    /// Independent dense-loop energy: per-edge phases and per-cell circulations
    /// written out directly.
    fn oracle_energy(s: &GLState) -> f64 {
        let g = s.grid();
        let (hx, hy) = (g.hx(), g.hy());
        let b = s.kappa * s.h;
        let mut e = 0.0;
        for j in 0..=g.ny() {
            for i in 0..g.nx() {
                let wt = if j == 0 || j == g.ny() { 0.5 } else { 1.0 };
                let ph = Complex64::new(0.0, b * s.a.x_at(i, j) * hx).exp();
                let d = (ph * s.psi.at(i + 1, j) - s.psi.at(i, j)) / hx;
                e += wt * hx * hy * d.norm_sqr();
            }
        }
        for j in 0..g.ny() {
            for i in 0..=g.nx() {
                let wt = if i == 0 || i == g.nx() { 0.5 } else { 1.0 };
                let ph = Complex64::new(0.0, b * s.a.y_at(i, j) * hy).exp();
                let d = (ph * s.psi.at(i, j + 1) - s.psi.at(i, j)) / hy;
                e += wt * hx * hy * d.norm_sqr();
            }
        }
        let k2 = s.kappa * s.kappa;
        for j in 0..=g.ny() {
            for i in 0..=g.nx() {
                let wx = if i == 0 || i == g.nx() { 0.5 } else { 1.0 };
                let wy = if j == 0 || j == g.ny() { 0.5 } else { 1.0 };
                let r = s.psi.at(i, j).norm_sqr();
                e += wx * wy * hx * hy * (-k2 * r + 0.5 * k2 * r * r);
            }
        }
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                let circ = s.a.x_at(i, j) * hx + s.a.y_at(i + 1, j) * hy
                    - s.a.x_at(i, j + 1) * hx
                    - s.a.y_at(i, j) * hy;
                let c = circ / (hx * hy);
                e += hx * hy * b * b * (c - 1.0).powi(2);
            }
        }
        e
    }


    fn random_rect_state(n: usize, seed: u64) -> GLState {
        let g = Grid::new(n, n + 3, 1.0, 1.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let psi = (0..g.num_nodes())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let ax = (0..g.num_xedges()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ay = (0..g.num_yedges()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        GLState::new(
            ComplexField::from_vec(g, psi).unwrap(),
            EdgeField::from_vecs(g, ax, ay).unwrap(),
            3.0,
            2.0,
        )
        .unwrap()
    }

    #[test]
    fn a_block_preconditioner_inverts_curl_curl_plus_mass() {
        let s = random_rect_state(9, 1);
        let p = Problem::new(&s, &SolveOptions::default());
        let g = *s.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gx: Vec<f64> = (0..g.num_xedges()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gy: Vec<f64> = (0..g.num_yedges()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut zx = vec![0.0; gx.len()];
        let mut zy = vec![0.0; gy.len()];
        p.precondition_a(&gx, &gy, &mut zx, &mut zy);
        // 2B²(hx·hy·CᵀC + mE) z should give back g.
        let z = EdgeField::from_vecs(g, zx.clone(), zy.clone()).unwrap();
        let c = curl(&z);
        let (hx, hy) = (g.hx(), g.hy());
        let cell = |i: isize, j: isize| {
            if i < 0 || j < 0 || i >= g.nx() as isize || j >= g.ny() as isize {
                0.0
            } else {
                c.at(i as usize, j as usize)
            }
        };
        let s2 = 2.0 * s.b() * s.b();
        let mut worst = 0.0f64;
        for j in 0..=g.ny() {
            for i in 0..g.nx() {
                let (ii, jj) = (i as isize, j as isize);
                let k = g.xedge(i, j);
                let v = s2 * (hx * (cell(ii, jj) - cell(ii, jj - 1)) + p.mass * g.xedge_area(i, j) * zx[k]);
                worst = worst.max((v - gx[k]).abs());
            }
        }
        for j in 0..g.ny() {
            for i in 0..=g.nx() {
                let (ii, jj) = (i as isize, j as isize);
                let k = g.yedge(i, j);
                let v = s2 * (hy * (cell(ii - 1, jj) - cell(ii, jj)) + p.mass * g.yedge_area(i, j) * zy[k]);
                worst = worst.max((v - gy[k]).abs());
            }
        }
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn magnetic_preconditioner_is_symmetric_positive_definite() {
        let s = random_rect_state(8, 3);
        let p = Problem::new(&s, &SolveOptions::default());
        let n = p.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut draw = || -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
        let (u, v) = (draw(), draw());
        let (mut pu, mut pv) = (vec![0.0; n], vec![0.0; n]);
        p.precondition(&u, &mut pu);
        p.precondition(&v, &mut pv);
        let (a, b) = (crate::linalg::dot(&u, &pv), crate::linalg::dot(&v, &pu));
        assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()), "{a} vs {b}");
        assert!(crate::linalg::dot(&u, &pu) > 0.0 && crate::linalg::dot(&v, &pv) > 0.0);
    }

    #[test]
    fn normal_state_has_zero_energy_and_gradient() {
        let g = Grid::square(16, 2.0).unwrap();
        let s = GLState::normal(g, 2.0, 3.0).unwrap();
        assert!(energy(&s).abs() < 1e-18);
        let (gp, ga) = gradient(&s);
        assert!(gp.sup_norm() == 0.0);
        assert!(ga.max_abs() < 1e-9);
        let r = residuals(&s);
        assert!(r.r_psi == 0.0 && r.r_a < 1e-10 && r.r_bc_psi == 0.0 && r.r_bc_curl < 1e-10);
    }

    #[test]
    fn uniform_state_energy() {
        let g = Grid::square(8, 1.0).unwrap();
        let s = GLState::new(
            ComplexField::constant(g, Complex64::new(1.0, 0.0)),
            EdgeField::zeros(g),
            1.0,
            1.0,
        )
        .unwrap();
        assert!((energy(&s) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn energy_matches_dense_oracle() {
        for seed in 0..4 {
            let s = random_state(8, seed, 1.7, 2.3);
            let (e, o) = (energy(&s), oracle_energy(&s));
            assert!((e - o).abs() <= 1e-12 * o.abs().max(1.0), "{e} vs {o}");
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let s = random_state(8, 42, 1.3, 0.9);
        let (gp, ga) = gradient(&s);
        let step = 1e-6;
        let x = s.to_vec();
        let n = s.grid().num_nodes();
        let mut worst = 0.0f64;
        for k in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += step;
            xm[k] -= step;
            let fd = (energy(&s.from_vec(&xp)) - energy(&s.from_vec(&xm))) / (2.0 * step);
            let an = if k < n {
                gp[k].re
            } else if k < 2 * n {
                gp[k - n].im
            } else {
                let m = k - 2 * n;
                if m < ga.xs().len() {
                    ga.xs()[m]
                } else {
                    ga.ys()[m - ga.xs().len()]
                }
            };
            worst = worst.max((fd - an).abs() / an.abs().max(1.0));
        }
        assert!(worst <= 1e-6, "{worst}");
    }

    #[test]
    fn energy_and_gradient_are_gauge_equivariant() {
        let s = random_state(8, 5, 2.0, 1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let chi = NodeField::from_vec(
            *s.grid(),
            (0..s.grid().num_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let (p2, a2) = gauge_transform(&s.psi, &s.a, s.b(), &chi).unwrap();
        let t = GLState::new(p2, a2, s.kappa, s.h).unwrap();
        assert!((energy(&s) - energy(&t)).abs() < 1e-11 * energy(&s).abs().max(1.0));
        let (gp1, ga1) = gradient(&s);
        let (gp2, ga2) = gradient(&t);
        for k in 0..gp1.len() {
            let rot = gp1[k] * Complex64::cis(-s.b() * chi[k]);
            assert!((rot - gp2[k]).norm() < 1e-10 * (1.0 + gp1[k].norm()));
        }
        assert!(ga1.sub(&ga2).unwrap().max_abs() < 1e-9 * (1.0 + ga1.max_abs()));
    }

    #[test]
    fn normal_init_without_noise_is_fixed() {
        let g = Grid::square(16, 2.0).unwrap();
        let opts = SolveOptions {
            init: Init::Normal,
            noise_amp: 0.0,
            ..SolveOptions::default()
        };
        let (s, _, st) = solve(g, 2.0, 2.0, &opts).unwrap();
        assert!(st.converged && st.iterations == 0);
        assert!(s.psi.is_zero());
    }

    #[test]
    fn neumann_violation_is_detected() {
        let g = Grid::square(16, 1.0).unwrap();
        let s = GLState::new(
            ComplexField::from_fn(g, |x, _| Complex64::new(x, 0.0)),
            reference_potential_with(&g, &PoissonOptions::default()).unwrap(),
            1.0,
            1e-6,
        )
        .unwrap();
        assert!(residuals(&s).r_bc_psi > 0.5);
    }

    #[test]
    fn small_solve_satisfies_contracts() {
        let g = Grid::square(32, 4.0).unwrap();
        let opts = SolveOptions::default();
        let (s, r, st) = solve(g, 2.0, 1.0, &opts).unwrap();
        assert!(st.converged, "{st:?}");
        assert!(st.energy < 0.0);
        assert!(s.psi.sup_norm() <= 1.0 + 1e-6);
        assert!(r.r_psi <= 10.0 * opts.grad_tol, "{r:?}");
        let ratio = kinetic_energy(&s).sqrt()
            / (s.kappa * crate::norms::lp_nodes_complex(&s.psi, 2.0));
        assert!(ratio <= 1.0 + 1e-3, "{ratio}");
    }
}
