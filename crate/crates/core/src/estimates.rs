//! The a priori estimates evaluated on discrete states, with every constant
//! set to 1. Only the ratios LHS/RHS carry information: across a family of
//! solutions they should stay bounded (or follow the stated trend).
//!
//! With `B = κH` and `M = (1 + κH + κ²)/(κH)`:
//!
//! ```text
//! infini        ‖ψ‖∞                    ≤ 1
//! cine          ‖(−i∇ + BA)ψ‖₂          ≤ κ‖ψ‖₂
//! ineqimproved  ‖curl A − 1‖₂           ≤ H⁻¹ ‖ψ‖∞‖ψ‖₂
//! dd1           Σ_{j,k} ‖D_j D_k ψ‖₂    ≤ (1 + κH + κ²)‖ψ‖₂
//! caf1          ‖curl A − 1‖_{C^{0,α}}  ≤ M ‖ψ‖₂‖ψ‖∞
//! caf2          ‖curl A − 1‖_{W^{1,p}}  ≤ M ‖ψ‖₂‖ψ‖∞
//! a2            ‖A − F‖_{W^{2,p}}       ≤ M ‖ψ‖₂‖ψ‖∞
//! af1           ‖A − F‖_{C^{1,α}}       ≤ M ‖ψ‖₂‖ψ‖∞
//! first         sup|(−i∇ + BA)ψ|        ≤ √B ‖ψ‖∞
//! second        ‖curl A − 1‖_{C¹}       ≤ ‖ψ‖∞² / √B
//! third         ‖curl A − 1‖_{C²}       ≤ ‖ψ‖∞²
//! prop41        ‖ψ‖∞                    → 0 when H ≈ κ/Θ₀
//! prop44        dist(argmax|ψ|, ∂Ω)     ≤ 1/√B
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauge::reference_potential;
use crate::gl::{kinetic_energy, GLState, ResidualReport};
use crate::grid::{ComplexField, EdgeField, Grid};
use crate::norms::{argmax_distance, lp_nodes_complex, norm, w2p_norm, NormSpec};
use crate::operators::{covariant_diff, curl, second_covariant, SecondCovariant};
use crate::grid::Axis;
use crate::spectral::THETA0_APPROX;

pub const IDS: [&str; 13] = [
    "infini",
    "cine",
    "ineqimproved",
    "dd1",
    "caf1",
    "caf2",
    "a2",
    "af1",
    "first",
    "second",
    "third",
    "prop41",
    "prop44",
];

/// Families whose boundedness is the elliptic-estimate verdict.
pub const ELLIPTIC_FAMILIES: [&str; 5] = ["dd1", "caf1", "caf2", "a2", "af1"];
/// Families of the blow-up estimates.
pub const BLOWUP_FAMILIES: [&str; 3] = ["first", "second", "third"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateNorms {
    pub alpha: f64,
    pub p: f64,
    pub corner_exclusion: bool,
}

impl Default for EstimateNorms {
    fn default() -> Self {
        EstimateNorms {
            alpha: 0.5,
            p: 4.0,
            corner_exclusion: false,
        }
    }
}

impl EstimateNorms {
    pub fn validate(&self) -> Result<()> {
        NormSpec::holder(0, self.alpha).validate()?;
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(Error::Spec(format!("p must lie in (1, ∞), got {}", self.p)));
        }
        Ok(())
    }
}

/// Parameter bands in which the asymptotic statements are gated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Regime {
    /// `λ_min ≤ κ/H ≤ λ_max` for the blow-up estimates.
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Stand-in for "κ large enough".
    pub kappa_min: f64,
    /// Half-width of the band around `κ/H = Θ₀` where `‖ψ‖∞` should vanish.
    pub theta_band: f64,
    /// Boundary-concentration band `Θ₀ − ε ≤ κ/H ≤ 1 − ε`.
    pub surface_eps: f64,
}

impl Default for Regime {
    fn default() -> Self {
        Regime {
            lambda_min: 0.5,
            lambda_max: 1.5,
            kappa_min: 4.0,
            theta_band: 0.02,
            surface_eps: 0.05,
        }
    }
}

impl Regime {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda_min > 0.0
            && self.lambda_min <= self.lambda_max
            && self.kappa_min >= 0.0
            && self.theta_band >= 0.0
            && self.surface_eps >= 0.0
            && self.lambda_max.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Spec(format!("inconsistent regime bands {self:?}")))
        }
    }

    fn blowup(&self, kappa: f64, rho: f64) -> bool {
        kappa >= self.kappa_min && rho >= self.lambda_min && rho <= self.lambda_max
    }
    fn near_theta0(&self, rho: f64) -> bool {
        (rho - THETA0_APPROX).abs() <= self.theta_band
    }
    fn surface(&self, kappa: f64, rho: f64) -> bool {
        kappa >= self.kappa_min
            && rho >= THETA0_APPROX - self.surface_eps
            && rho <= 1.0 - self.surface_eps
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateEntry {
    pub id: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `None` exactly when `indeterminate`.
    pub ratio: Option<f64>,
    pub indeterminate: bool,
    /// False when the statement's parameter regime excludes this state.
    pub in_regime: bool,
    pub alpha: Option<f64>,
    pub p: Option<f64>,
    pub corner_exclusion: bool,
}

impl EstimateEntry {
    fn new(id: &str, lhs: f64, rhs: f64) -> Self {
        let ok = rhs > 0.0 && rhs.is_finite() && lhs.is_finite();
        EstimateEntry {
            id: id.to_string(),
            lhs,
            rhs,
            ratio: ok.then(|| lhs / rhs),
            indeterminate: !ok,
            in_regime: true,
            alpha: None,
            p: None,
            corner_exclusion: false,
        }
    }
    fn alpha(mut self, a: f64, corners: bool) -> Self {
        self.alpha = Some(a);
        self.corner_exclusion = corners;
        self
    }
    fn p(mut self, p: f64, corners: bool) -> Self {
        self.p = Some(p);
        self.corner_exclusion = corners;
        self
    }
    fn regime(mut self, on: bool) -> Self {
        self.in_regime = on;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub kappa: f64,
    pub h: f64,
    pub grid_n: usize,
    pub sup_psi: f64,
    pub l2_psi: f64,
    /// `‖ψ‖∞ = 0`.
    pub degenerate: bool,
    pub residuals: Option<ResidualReport>,
    pub entries: Vec<EstimateEntry>,
}

impl EstimateReport {
    pub fn get(&self, id: &str) -> Option<&EstimateEntry> {
        self.entries.iter().find(|e| e.id == id)
    }
    pub fn ratio(&self, id: &str) -> Option<f64> {
        self.get(id).and_then(|e| e.ratio)
    }
    pub fn rho(&self) -> f64 {
        self.kappa / self.h
    }
}

/// Pointwise `|(−i∇ + BA)ψ|` at the nodes, from the mean of `|D_k ψ|²` over
/// the edges of each axis meeting the node.
pub fn covariant_gradient_modulus(psi: &ComplexField, a: &EdgeField, b: f64) -> Result<Vec<f64>> {
    let g = *psi.grid();
    let d1 = covariant_diff(psi, a, b, Axis::X)?;
    let d2 = covariant_diff(psi, a, b, Axis::Y)?;
    let (d1, d2) = (d1.as_slice(), d2.as_slice());
    let mut out = vec![0.0; g.num_nodes()];
    for (i, j) in g.nodes() {
        let mut sx = 0.0;
        let mut nx = 0.0;
        if i > 0 {
            sx += d1[g.xedge(i - 1, j)].norm_sqr();
            nx += 1.0;
        }
        if i < g.nx() {
            sx += d1[g.xedge(i, j)].norm_sqr();
            nx += 1.0;
        }
        let mut sy = 0.0;
        let mut ny = 0.0;
        if j > 0 {
            sy += d2[g.yedge(i, j - 1)].norm_sqr();
            ny += 1.0;
        }
        if j < g.ny() {
            sy += d2[g.yedge(i, j)].norm_sqr();
            ny += 1.0;
        }
        out[g.node(i, j)] = (sx / nx + sy / ny).sqrt();
    }
    Ok(out)
}

fn second_l2(psi: &ComplexField, a: &EdgeField, b: f64) -> Result<f64> {
    let g: Grid = *psi.grid();
    let mut total = 0.0;
    for j in 1..=2 {
        for k in 1..=2 {
            let s = match second_covariant(psi, a, b, j, k)? {
                SecondCovariant::Node(f) => g
                    .nodes()
                    .map(|(i, jj)| g.node_area(i, jj) * f.at(i, jj).norm_sqr())
                    .sum::<f64>(),
                SecondCovariant::Cell(f) => {
                    g.cell_area() * f.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>()
                }
            };
            total += s.sqrt();
        }
    }
    Ok(total)
}

/// Every estimate on `state`. The residual report of the solve must be
/// supplied so that the report records how well the state solves the system.
pub fn evaluate(
    state: &GLState,
    residuals: Option<&ResidualReport>,
    norms: &EstimateNorms,
    regime: &Regime,
) -> Result<EstimateReport> {
    let res = *residuals.ok_or_else(|| {
        Error::Precondition("estimates need the residual report of the solve".into())
    })?;
    norms.validate()?;
    let mut rep = evaluate_asymptotic(state, regime)?;
    let (kappa, h, b) = (state.kappa, state.h, state.b());
    let (sup, l2) = (rep.sup_psi, rep.l2_psi);
    let (alpha, p, ce) = (norms.alpha, norms.p, norms.corner_exclusion);

    let cm1 = curl(&state.a).map(|c| c - 1.0);
    let f = reference_potential(state.grid())?;
    let amf = state.a.sub(&f)?;
    let m = (1.0 + b + kappa * kappa) / b;

    let mut entries = vec![
        EstimateEntry::new("infini", sup, 1.0),
        EstimateEntry::new("cine", kinetic_energy(state).sqrt(), kappa * l2),
        EstimateEntry::new("ineqimproved", norm(&cm1, &NormSpec::lp(2.0))?, sup * l2 / h),
        EstimateEntry::new(
            "dd1",
            second_l2(&state.psi, &state.a, b)?,
            (1.0 + b + kappa * kappa) * l2,
        ),
        EstimateEntry::new(
            "caf1",
            norm(&cm1, &NormSpec::holder(0, alpha).with_corner_exclusion(ce))?,
            m * l2 * sup,
        )
        .alpha(alpha, ce),
        EstimateEntry::new(
            "caf2",
            norm(&cm1, &NormSpec::w1p(p).with_corner_exclusion(ce))?,
            m * l2 * sup,
        )
        .p(p, ce),
        EstimateEntry::new("a2", w2p_norm(&amf, p, ce)?, m * l2 * sup).p(p, ce),
        EstimateEntry::new(
            "af1",
            norm(&amf, &NormSpec::holder(1, alpha).with_corner_exclusion(ce))?,
            m * l2 * sup,
        )
        .alpha(alpha, ce),
    ];
    entries.append(&mut rep.entries);
    rep.entries = entries;
    rep.residuals = Some(res);
    Ok(rep)
}

/// The blow-up estimates, the sup-norm decay near `κ/H = Θ₀` and the
/// boundary concentration of the maximum. A vanishing order parameter sets
/// `degenerate` and leaves the scale-free entries indeterminate.
pub fn evaluate_asymptotic(state: &GLState, regime: &Regime) -> Result<EstimateReport> {
    regime.validate()?;
    let (kappa, b) = (state.kappa, state.b());
    let rho = kappa / state.h;
    let sup = state.psi.sup_norm();
    let l2 = lp_nodes_complex(&state.psi, 2.0);
    let degenerate = sup == 0.0;
    let rb = b.sqrt();

    let cm1 = curl(&state.a).map(|c| c - 1.0);
    let grad_sup = covariant_gradient_modulus(&state.psi, &state.a, b)?
        .into_iter()
        .fold(0.0, f64::max);
    let blow = regime.blowup(kappa, rho);
    let dist = if degenerate {
        0.0
    } else {
        argmax_distance(&state.psi)?.1
    };
    let entries = vec![
        EstimateEntry::new("first", grad_sup, rb * sup).regime(blow),
        EstimateEntry::new("second", norm(&cm1, &NormSpec::c1())?, sup * sup / rb).regime(blow),
        EstimateEntry::new("third", norm(&cm1, &NormSpec::c2())?, sup * sup).regime(blow),
        EstimateEntry::new("prop41", sup, 1.0).regime(regime.near_theta0(rho)),
        EstimateEntry::new("prop44", dist, if degenerate { 0.0 } else { 1.0 / rb })
            .regime(regime.surface(kappa, rho)),
    ];
    Ok(EstimateReport {
        kappa,
        h: state.h,
        grid_n: state.grid().nx(),
        sup_psi: sup,
        l2_psi: l2,
        degenerate,
        residuals: None,
        entries,
    })
}
