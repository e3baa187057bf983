//! TOML run configuration. Every section rejects unknown keys; command-line
//! flags are applied on top after loading.

use std::path::{Path, PathBuf};

use gl_lab::estimates::{EstimateNorms, Regime};
use gl_lab::gl::SolveOptions;
use gl_lab::spectral::{Geometry, ProbeOptions};
use gl_lab::sweep::SweepConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub solve: SolveSection,
    pub norms: EstimateNorms,
    pub regime: Regime,
    pub sweep: SweepConfig,
    pub spectral: SpectralSection,
    pub blowup: BlowupSection,
    pub identity: IdentitySection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveSection {
    pub kappa: f64,
    pub h: f64,
    /// Cells per side; the resolution rule decides when absent.
    pub n: Option<usize>,
    pub side: f64,
    pub per_length: f64,
    pub min_n: usize,
    pub options: SolveOptions,
}

impl Default for SolveSection {
    fn default() -> Self {
        SolveSection {
            kappa: 4.0,
            h: 4.0,
            n: None,
            side: 1.0,
            per_length: 6.0,
            min_n: 64,
            options: SolveOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralSection {
    pub tol: f64,
    /// Fiber truncation length and cell count for the μ table.
    pub t: f64,
    pub n: usize,
    pub xi_min: f64,
    pub xi_max: f64,
    pub xi_points: usize,
    pub landau_count: usize,
    pub landau_t: f64,
    pub landau_n: usize,
    pub r_small: f64,
    pub r_large: f64,
    pub per_unit: usize,
    pub probe_s: f64,
    pub probe_r: f64,
    pub probe_geometry: Geometry,
    pub probe: ProbeOptions,
}

impl Default for SpectralSection {
    fn default() -> Self {
        SpectralSection {
            tol: 1e-6,
            t: 12.0,
            n: 2000,
            xi_min: 0.0,
            xi_max: 2.0,
            xi_points: 41,
            landau_count: 3,
            landau_t: 12.0,
            landau_n: 4000,
            r_small: 10.0,
            r_large: 20.0,
            per_unit: 8,
            probe_s: 1.0,
            probe_r: 8.0,
            probe_geometry: Geometry::Halfplane,
            probe: ProbeOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlowupSection {
    /// Frame radius in magnetic lengths.
    pub r: f64,
    /// Extra point to rescale at, besides the maximum of `|ψ|`.
    pub point: Option<[f64; 2]>,
}

impl Default for BlowupSection {
    fn default() -> Self {
        BlowupSection { r: 2.0, point: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentitySection {
    pub p1: f64,
    pub p2: f64,
    pub r0: f64,
    pub t_max: f64,
    pub field: String,
    pub steps: Vec<f64>,
}

impl Default for IdentitySection {
    fn default() -> Self {
        IdentitySection {
            p1: 2.0,
            p2: 2.0,
            r0: 1.0,
            t_max: 0.25,
            field: "wavy".into(),
            steps: vec![1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0],
        }
    }
}

pub fn load(path: Option<&Path>) -> Result<RunConfig, String> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))
}
