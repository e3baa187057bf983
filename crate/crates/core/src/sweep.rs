//! (κ, H) sweeps: one solve per grid point, the estimate report of each, and
//! aggregate verdicts on boundedness and trends of the ratio families.
//!
//! Rows are sorted by (κ, ρ) with ρ = κ/H and solved independently; row `k`
//! uses seed `config.seed + k`. Output is a pure function of the config, so
//! the thread count never changes a byte of it.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimates::{
    evaluate, EstimateEntry, EstimateNorms, EstimateReport, Regime, BLOWUP_FAMILIES,
    ELLIPTIC_FAMILIES, IDS,
};
use crate::gl::{grid_for, solve, GLState, SolveOptions};
use crate::io::{write_checkpoint, CheckpointMeta};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// A ratio family is bounded when max/min stays below this over the rows.
pub const SPREAD_BOUND: f64 = 10.0;
/// Bound on `√(κH)·dist(argmax|ψ|, ∂Ω)`.
pub const CONCENTRATION_BOUND: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    /// File stem for every output.
    pub prefix: String,
    pub checkpoints: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            prefix: "sweep".into(),
            checkpoints: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub kappas: Vec<f64>,
    /// Values of ρ = κ/H.
    pub rhos: Vec<f64>,
    /// Nodes per magnetic length `1/√(κH)`.
    pub per_length: f64,
    pub min_n: usize,
    /// Side of the square domain.
    pub side: f64,
    pub solve: SolveOptions,
    pub norms: EstimateNorms,
    pub regime: Regime,
    /// Let non-converged rows enter the verdicts.
    pub include_unconverged: bool,
    pub seed: u64,
    pub outputs: OutputSpec,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            kappas: Vec::new(),
            rhos: vec![1.0],
            per_length: 6.0,
            min_n: 64,
            side: 1.0,
            solve: SolveOptions::default(),
            norms: EstimateNorms::default(),
            regime: Regime::default(),
            include_unconverged: false,
            seed: 0,
            outputs: OutputSpec::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if let Some(k) = self.kappas.iter().find(|k| !(k.is_finite() && **k > 0.0)) {
            return cfg(format!("kappas: {k} is not positive"));
        }
        if let Some(r) = self.rhos.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return cfg(format!("rhos: {r} is not positive"));
        }
        if !(self.per_length >= 6.0 && self.per_length.is_finite()) {
            return cfg(format!("per_length must be at least 6, got {}", self.per_length));
        }
        if !(self.side > 0.0 && self.side.is_finite()) {
            return cfg(format!("side must be positive, got {}", self.side));
        }
        if self.min_n < 4 {
            return cfg(format!("min_n must be at least 4, got {}", self.min_n));
        }
        if self.outputs.prefix.is_empty() || self.outputs.prefix.contains(['/', '\\']) {
            return cfg(format!("outputs.prefix {:?} is not a file stem", self.outputs.prefix));
        }
        let wrap = |e: Error| Error::Config(e.to_string());
        self.solve.validate().map_err(wrap)?;
        self.norms.validate().map_err(wrap)?;
        self.regime.validate().map_err(wrap)
    }

    /// (κ, ρ) pairs in row order.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = self
            .kappas
            .iter()
            .flat_map(|&k| self.rhos.iter().map(move |&r| (k, r)))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        pts.dedup();
        pts
    }
}

/// SHA-256 of the canonical JSON form of `config`, output naming excluded.
pub fn config_hash(config: &SweepConfig) -> String {
    let mut c = config.clone();
    c.outputs = OutputSpec::default();
    json_hash(&c)
}

/// SHA-256 (hex) of the compact JSON serialisation of `v`.
pub fn json_hash<T: Serialize>(v: &T) -> String {
    let json = serde_json::to_string(v).expect("value serialises");
    Sha256::digest(json.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// First line of every output file.
pub fn provenance_line(hash: &str, seed: u64) -> String {
    format!("# gl-lab {VERSION} config_sha256={hash} seed={seed}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub kappa: f64,
    pub h: f64,
    pub rho: f64,
    pub grid_n: usize,
    pub seed: u64,
    pub converged: bool,
    pub iterations: usize,
    pub errored: Option<String>,
    pub report: Option<EstimateReport>,
}

impl SweepRow {
    fn usable(&self, include_unconverged: bool) -> Option<&EstimateReport> {
        if self.errored.is_some() || !(self.converged || include_unconverged) {
            return None;
        }
        self.report.as_ref()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// Too few rows in the regime to judge.
    NotApplicable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub status: Status,
    /// max/min of the ratio family, or the measured maximum for the
    /// concentration bound.
    pub value: Option<f64>,
    pub rows: usize,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    pub elliptic: Vec<Verdict>,
    pub blowup: Vec<Verdict>,
    pub sup_trend: Verdict,
    pub concentration: Verdict,
}

impl Verdicts {
    pub fn all(&self) -> impl Iterator<Item = &Verdict> {
        self.elliptic
            .iter()
            .chain(&self.blowup)
            .chain([&self.sup_trend, &self.concentration])
    }
    pub fn passed(&self) -> bool {
        self.all().all(|v| v.status != Status::Fail)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepResult {
    pub config_hash: String,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
    pub verdicts: Verdicts,
    /// Final states by row, kept for checkpoints.
    #[serde(skip)]
    pub states: Vec<Option<GLState>>,
}

fn spread_verdict(name: &str, ratios: &[f64]) -> Verdict {
    if ratios.is_empty() {
        return Verdict {
            name: name.into(),
            status: Status::NotApplicable,
            value: None,
            rows: 0,
            detail: "no determinate ratios".into(),
        };
    }
    let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = if min > 0.0 { max / min } else { f64::INFINITY };
    let ok = spread <= SPREAD_BOUND;
    Verdict {
        name: name.into(),
        status: if ok { Status::Pass } else { Status::Fail },
        value: spread.is_finite().then_some(spread),
        rows: ratios.len(),
        detail: format!("min {min:.4e} max {max:.4e} max/min {spread:.3}"),
    }
}

fn family(rows: &[SweepRow], id: &str, incl: bool, gated: bool) -> Vec<f64> {
    rows.iter()
        .filter_map(|r| r.usable(incl))
        .filter_map(|rep| rep.get(id))
        .filter(|e| !gated || e.in_regime)
        .filter_map(|e| e.ratio)
        .collect()
}

/// Verdicts over the usable rows (converged, not errored, unless
/// `include_unconverged`).
pub fn aggregate(rows: &[SweepRow], include_unconverged: bool) -> Verdicts {
    let incl = include_unconverged;
    let elliptic = ELLIPTIC_FAMILIES
        .iter()
        .map(|id| spread_verdict(id, &family(rows, id, incl, false)))
        .collect();
    let blowup = BLOWUP_FAMILIES
        .iter()
        .map(|id| spread_verdict(id, &family(rows, id, incl, true)))
        .collect();

    // ‖ψ‖∞ strictly decreasing in κ along each ρ in the Θ₀ band.
    let mut groups: Vec<(f64, Vec<(f64, f64)>)> = Vec::new();
    for r in rows {
        let Some(rep) = r.usable(incl) else { continue };
        let Some(e) = rep.get("prop41").filter(|e| e.in_regime) else { continue };
        match groups.iter_mut().find(|g| g.0 == r.rho) {
            Some(g) => g.1.push((r.kappa, e.lhs)),
            None => groups.push((r.rho, vec![(r.kappa, e.lhs)])),
        }
    }
    groups.retain(|g| g.1.len() >= 2);
    let sup_trend = if groups.is_empty() {
        Verdict {
            name: "prop41".into(),
            status: Status::NotApplicable,
            value: None,
            rows: 0,
            detail: "fewer than two rows near κ/H = Θ₀".into(),
        }
    } else {
        let mut ok = true;
        let mut detail = Vec::new();
        let mut n = 0;
        for (rho, mut pts) in groups {
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            n += pts.len();
            ok &= pts.windows(2).all(|w| w[1].1 < w[0].1);
            let seq: Vec<String> = pts.iter().map(|(k, s)| format!("{k}:{s:.4e}")).collect();
            detail.push(format!("rho {rho}: {}", seq.join(" ")));
        }
        Verdict {
            name: "prop41".into(),
            status: if ok { Status::Pass } else { Status::Fail },
            value: None,
            rows: n,
            detail: detail.join("; "),
        }
    };

    let conc = family(rows, "prop44", incl, true);
    let concentration = if conc.is_empty() {
        Verdict {
            name: "prop44".into(),
            status: Status::NotApplicable,
            value: None,
            rows: 0,
            detail: "no rows in the surface band".into(),
        }
    } else {
        let max = conc.iter().cloned().fold(0.0, f64::max);
        Verdict {
            name: "prop44".into(),
            status: if max <= CONCENTRATION_BOUND { Status::Pass } else { Status::Fail },
            value: Some(max),
            rows: conc.len(),
            detail: format!("max sqrt(kH)*dist {max:.4}"),
        }
    };
    Verdicts {
        elliptic,
        blowup,
        sup_trend,
        concentration,
    }
}

fn run_row(config: &SweepConfig, index: usize, kappa: f64, rho: f64) -> (SweepRow, Option<GLState>) {
    let h = kappa / rho;
    let seed = config.seed.wrapping_add(index as u64);
    let mut row = SweepRow {
        index,
        kappa,
        h,
        rho,
        grid_n: 0,
        seed,
        converged: false,
        iterations: 0,
        errored: None,
        report: None,
    };
    let work = || -> Result<(usize, bool, usize, EstimateReport, GLState)> {
        let grid = grid_for(kappa, h, config.side, config.per_length, config.min_n)?;
        let opts = SolveOptions {
            seed,
            ..config.solve
        };
        let (state, res, stats) = solve(grid, kappa, h, &opts)?;
        let rep = evaluate(&state, Some(&res), &config.norms, &config.regime)?;
        Ok((grid.nx(), stats.converged, stats.iterations, rep, state))
    };
    match catch_unwind(AssertUnwindSafe(work)) {
        Ok(Ok((n, conv, it, rep, state))) => {
            row.grid_n = n;
            row.converged = conv;
            row.iterations = it;
            row.report = Some(rep);
            (row, Some(state))
        }
        Ok(Err(e)) => {
            row.errored = Some(e.to_string());
            (row, None)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            row.errored = Some(format!("panicked: {msg}"));
            (row, None)
        }
    }
}

/// Runs every row on the current rayon pool and folds the verdicts.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let pts = config.points();
    let out: Vec<(SweepRow, Option<GLState>)> = pts
        .par_iter()
        .enumerate()
        .map(|(i, &(k, r))| run_row(config, i, k, r))
        .collect();
    let (rows, states): (Vec<_>, Vec<_>) = out.into_iter().unzip();
    let verdicts = aggregate(&rows, config.include_unconverged);
    Ok(SweepResult {
        config_hash: config_hash(config),
        seed: config.seed,
        rows,
        verdicts,
        states,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_header() -> Vec<String> {
    let mut h: Vec<String> = [
        "kappa", "H", "rho", "grid_n", "converged", "errored", "iterations", "seed", "sup_psi", "l2_psi",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for id in IDS {
        for f in ["lhs", "rhs", "ratio", "in_regime"] {
            h.push(format!("{id}_{f}"));
        }
    }
    h
}

pub fn write_csv(path: &Path, rows: &[SweepRow], provenance: &str) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "{provenance}")?;
    let mut w = csv::Writer::from_writer(f);
    let io = |e: csv::Error| Error::Io(e.into());
    w.write_record(csv_header()).map_err(io)?;
    for r in rows {
        let rep = r.report.as_ref();
        let mut rec = vec![
            r.kappa.to_string(),
            r.h.to_string(),
            r.rho.to_string(),
            r.grid_n.to_string(),
            r.converged.to_string(),
            r.errored.is_some().to_string(),
            r.iterations.to_string(),
            r.seed.to_string(),
            fmt_opt(rep.map(|p| p.sup_psi)),
            fmt_opt(rep.map(|p| p.l2_psi)),
        ];
        for id in IDS {
            let e = rep.and_then(|p| p.get(id));
            rec.push(fmt_opt(e.map(|e| e.lhs)));
            rec.push(fmt_opt(e.map(|e| e.rhs)));
            rec.push(fmt_opt(e.and_then(|e| e.ratio)));
            rec.push(e.map(|e| e.in_regime.to_string()).unwrap_or_default());
        }
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows back from a CSV written by [`write_csv`]. Norm metadata and
/// error messages are not part of the CSV and come back empty.
pub fn read_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut rd = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let header = rd
        .headers()
        .map_err(|e| Error::Format(e.to_string()))?
        .clone();
    let want = csv_header();
    if header.iter().collect::<Vec<_>>() != want.iter().map(|s| s.as_str()).collect::<Vec<_>>() {
        return Err(Error::Format(format!("{}: unexpected columns", path.display())));
    }
    let bad = |what: &str, v: &str| Error::Format(format!("{}: bad {what} {v:?}", path.display()));
    let mut rows = Vec::new();
    for (index, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        let num = |k: usize| -> Result<f64> { rec[k].parse::<f64>().map_err(|_| bad(&want[k], &rec[k])) };
        let opt = |k: usize| -> Result<Option<f64>> {
            if rec[k].is_empty() {
                Ok(None)
            } else {
                num(k).map(Some)
            }
        };
        let flag = |k: usize| -> Result<bool> { rec[k].parse::<bool>().map_err(|_| bad(&want[k], &rec[k])) };
        let errored = flag(5)?;
        let (kappa, h) = (num(0)?, num(1)?);
        let report = match (opt(8)?, opt(9)?) {
            (Some(sup), Some(l2)) => {
                let mut entries = Vec::new();
                for (n, id) in IDS.iter().enumerate() {
                    let c = 10 + 4 * n;
                    let ratio = opt(c + 2)?;
                    entries.push(EstimateEntry {
                        id: id.to_string(),
                        lhs: num(c)?,
                        rhs: num(c + 1)?,
                        ratio,
                        indeterminate: ratio.is_none(),
                        in_regime: flag(c + 3)?,
                        alpha: None,
                        p: None,
                        corner_exclusion: false,
                    });
                }
                Some(EstimateReport {
                    kappa,
                    h,
                    grid_n: num(3)? as usize,
                    sup_psi: sup,
                    l2_psi: l2,
                    degenerate: sup == 0.0,
                    residuals: None,
                    entries,
                })
            }
            _ => None,
        };
        rows.push(SweepRow {
            index,
            kappa,
            h,
            rho: num(2)?,
            grid_n: num(3)? as usize,
            seed: num(7)? as u64,
            converged: flag(4)?,
            iterations: num(6)? as usize,
            errored: errored.then(|| "errored".to_string()),
            report,
        });
    }
    Ok(rows)
}

#[derive(Serialize)]
struct JsonReport<'a> {
    tool: &'static str,
    version: &'static str,
    config_sha256: &'a str,
    seed: u64,
    passed: bool,
    verdicts: &'a Verdicts,
    rows: &'a [SweepRow],
}

pub fn write_json(path: &Path, result: &SweepResult) -> Result<()> {
    let rep = JsonReport {
        tool: "gl-lab",
        version: VERSION,
        config_sha256: &result.config_hash,
        seed: result.seed,
        passed: result.verdicts.passed(),
        verdicts: &result.verdicts,
        rows: &result.rows,
    };
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, &rep)?;
    writeln!(f)?;
    Ok(f.flush()?)
}

/// One `.dat` per ratio family (`kappa H rho grid_n ratio lhs rhs`, usable
/// rows only) and a gnuplot script drawing them against κ.
pub fn write_plot_files(
    dir: &Path,
    prefix: &str,
    rows: &[SweepRow],
    provenance: &str,
    include_unconverged: bool,
) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for id in IDS {
        let p = dir.join(format!("{prefix}_{id}.dat"));
        let mut f = BufWriter::new(File::create(&p)?);
        writeln!(f, "{provenance}")?;
        writeln!(f, "# kappa H rho grid_n ratio lhs rhs")?;
        for r in rows {
            let Some(e) = r.usable(include_unconverged).and_then(|rep| rep.get(id)) else { continue };
            if let Some(q) = e.ratio {
                writeln!(f, "{} {} {} {} {} {} {}", r.kappa, r.h, r.rho, r.grid_n, q, e.lhs, e.rhs)?;
            }
        }
        f.flush()?;
        out.push(p);
    }
    let gp = dir.join(format!("{prefix}.gp"));
    let mut f = BufWriter::new(File::create(&gp)?);
    writeln!(f, "{provenance}")?;
    writeln!(f, "set terminal pngcairo size 1200,900")?;
    writeln!(f, "set output '{prefix}_ratios.png'")?;
    writeln!(f, "set logscale xy")?;
    writeln!(f, "set xlabel 'kappa'")?;
    writeln!(f, "set ylabel 'LHS/RHS'")?;
    writeln!(f, "set key outside right")?;
    let plots: Vec<String> = ELLIPTIC_FAMILIES
        .iter()
        .chain(&BLOWUP_FAMILIES)
        .map(|id| format!("'{prefix}_{id}.dat' using 1:5 with linespoints title '{id}'"))
        .collect();
    writeln!(f, "plot {}", plots.join(", \\\n     "))?;
    f.flush()?;
    out.push(gp);
    Ok(out)
}

/// Writes CSV, JSON, plot data and (if configured) checkpoints into `dir`.
pub fn write_outputs(result: &SweepResult, config: &SweepConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let prefix = &config.outputs.prefix;
    let prov = provenance_line(&result.config_hash, result.seed);
    let csv = dir.join(format!("{prefix}.csv"));
    write_csv(&csv, &result.rows, &prov)?;
    let json = dir.join(format!("{prefix}.json"));
    write_json(&json, result)?;
    let mut out = vec![csv, json];
    out.extend(write_plot_files(dir, prefix, &result.rows, &prov, config.include_unconverged)?);
    if config.outputs.checkpoints {
        for (row, state) in result.rows.iter().zip(&result.states) {
            let Some(state) = state else { continue };
            let p = dir.join(format!("{prefix}_row{}.ckpt", row.index));
            let meta = CheckpointMeta {
                kappa: row.kappa,
                h: row.h,
                options: SolveOptions {
                    seed: row.seed,
                    ..config.solve
                },
                seed: row.seed,
                stats: None,
            };
            write_checkpoint(&p, state, &meta)?;
            out.push(p);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_sweep_is_vacuous() {
        let r = run_sweep(&SweepConfig::default()).unwrap();
        assert!(r.rows.is_empty());
        assert!(r.verdicts.passed());
        assert!(r.verdicts.all().all(|v| v.status == Status::NotApplicable));
    }

    #[test]
    fn invalid_config_is_a_config_error() {
        for c in [
            SweepConfig {
                kappas: vec![-1.0],
                ..SweepConfig::default()
            },
            SweepConfig {
                rhos: vec![0.0],
                ..SweepConfig::default()
            },
            SweepConfig {
                per_length: 5.0,
                ..SweepConfig::default()
            },
        ] {
            assert!(matches!(run_sweep(&c), Err(Error::Config(_))));
        }
    }

    #[test]
    fn rows_are_sorted_and_deduplicated() {
        let c = SweepConfig {
            kappas: vec![4.0, 2.0, 4.0],
            rhos: vec![1.0, 0.8],
            ..SweepConfig::default()
        };
        assert_eq!(c.points(), vec![(2.0, 0.8), (2.0, 1.0), (4.0, 0.8), (4.0, 1.0)]);
    }

    #[test]
    fn hash_ignores_output_naming() {
        let a = SweepConfig::default();
        let mut b = a.clone();
        b.outputs.prefix = "other".into();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.seed = 1;
        assert_ne!(config_hash(&a), config_hash(&b));
    }

    #[test]
    fn spread_verdicts() {
        assert_eq!(spread_verdict("x", &[1.0, 9.9]).status, Status::Pass);
        assert_eq!(spread_verdict("x", &[1.0, 10.1]).status, Status::Fail);
        assert_eq!(spread_verdict("x", &[0.0, 1.0]).status, Status::Fail);
        assert_eq!(spread_verdict("x", &[]).status, Status::NotApplicable);
    }
}
