//! Boundary coordinates `Φ(s, t) = γ(s) + t ν(s)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Arc-length parametrised boundary piece with inward normal `ν`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BoundaryChart {
    /// Straight side through `origin` with unit tangent `tau`; `ν = τ⊥`
    /// rotated a quarter turn counter-clockwise.
    Flat { origin: (f64, f64), tau: (f64, f64) },
    /// Circle of radius `r0` about the origin traversed counter-clockwise, so
    /// the inward normal points to the centre and the curvature is `1/r0`.
    Circle { r0: f64 },
}

impl BoundaryChart {
    pub fn circle(r0: f64) -> Result<Self> {
        if !(r0 > 0.0) {
            return Err(Error::Chart(format!("radius must be positive, got {r0}")));
        }
        if r0.is_infinite() {
            return Ok(Self::straight());
        }
        Ok(BoundaryChart::Circle { r0 })
    }

    /// The x-axis with inward normal `e₂`.
    pub fn straight() -> Self {
        BoundaryChart::Flat {
            origin: (0.0, 0.0),
            tau: (1.0, 0.0),
        }
    }

    pub fn curvature(&self, _s: f64) -> f64 {
        match self {
            BoundaryChart::Flat { .. } => 0.0,
            BoundaryChart::Circle { r0 } => 1.0 / r0,
        }
    }

    pub fn gamma(&self, s: f64) -> (f64, f64) {
        match *self {
            BoundaryChart::Flat { origin, tau } => (origin.0 + s * tau.0, origin.1 + s * tau.1),
            BoundaryChart::Circle { r0 } => (r0 * (s / r0).cos(), r0 * (s / r0).sin()),
        }
    }

    pub fn tangent(&self, s: f64) -> (f64, f64) {
        match *self {
            BoundaryChart::Flat { tau, .. } => tau,
            BoundaryChart::Circle { r0 } => (-(s / r0).sin(), (s / r0).cos()),
        }
    }

    pub fn normal(&self, s: f64) -> (f64, f64) {
        match *self {
            BoundaryChart::Flat { tau, .. } => (-tau.1, tau.0),
            BoundaryChart::Circle { r0 } => (-(s / r0).cos(), -(s / r0).sin()),
        }
    }

    pub fn phi(&self, s: f64, t: f64) -> (f64, f64) {
        let (gx, gy) = self.gamma(s);
        let (nx, ny) = self.normal(s);
        (gx + t * nx, gy + t * ny)
    }

    /// Columns `∂_s Φ = (1 − t k) γ'` and `∂_t Φ = ν`.
    pub fn jacobian(&self, s: f64, t: f64) -> ((f64, f64), (f64, f64)) {
        let f = 1.0 - t * self.curvature(s);
        let (tx, ty) = self.tangent(s);
        ((f * tx, f * ty), self.normal(s))
    }

    /// Errors unless `t_max · sup k < 1`, i.e. the chart stays injective.
    pub fn check_extent(&self, t_max: f64) -> Result<()> {
        let k = self.curvature(0.0);
        if !(t_max >= 0.0) || t_max * k >= 1.0 {
            return Err(Error::Chart(format!(
                "normal extent {t_max} reaches the focal distance {}",
                1.0 / k
            )));
        }
        Ok(())
    }

    /// Pull-back `Ã = (DΦ)ᵗ (A ∘ Φ)`.
    pub fn pull_back(&self, a: impl Fn(f64, f64) -> (f64, f64), s: f64, t: f64) -> (f64, f64) {
        let (x, y) = self.phi(s, t);
        let (a1, a2) = a(x, y);
        let (ds, dt) = self.jacobian(s, t);
        (ds.0 * a1 + ds.1 * a2, dt.0 * a1 + dt.1 * a2)
    }
}
