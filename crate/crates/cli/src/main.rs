mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gl_lab::blowup::{frame_curl, limit_residual, rescale, BlowupFrame};
use gl_lab::estimates::{evaluate, EstimateReport};
use gl_lab::gl::{grid_for, residuals, solve, GLState, Init, ResidualReport, SolveStats};
use gl_lab::grid::Grid;
use gl_lab::identity::{curl_transform_check, ibp_identity, lemma_intparts, AnalyticField};
use gl_lab::io::{read_checkpoint, write_checkpoint, write_frame, CheckpointMeta};
use gl_lab::norms::argmax_distance;
use gl_lab::spectral::{
    halfplane_extrapolated, landau_levels, mu_table, nonlinear_limit_probe, theta0_with, write_mu_csv,
    Geometry,
};
use gl_lab::sweep::{aggregate, json_hash, read_csv, run_sweep, write_outputs, Status, Verdict, Verdicts, VERSION};
use serde_json::{json, Value};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "gl-lab", version, about = "Ginzburg-Landau solves, estimate sweeps and spectral checks")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory (default: out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Minimise the energy at one (κ, H) and evaluate every estimate.
    Solve(SolveArgs),
    /// Solve over a (κ, κ/H) grid and aggregate the ratio families.
    Sweep(SweepArgs),
    /// Θ₀, Landau levels, μ(ξ) table, half-plane ground state, limit probes.
    Spectral(SpectralArgs),
    /// Blow-up frames at the maximum of |ψ| (and optionally at a point).
    Blowup(BlowupArgs),
    /// Integration-by-parts identity, the second-derivative inequality and
    /// the curl transformation on a circular chart.
    CheckIdentity(IdentityArgs),
    /// Re-aggregate verdicts from sweep CSV files.
    Report(ReportArgs),
}

#[derive(Args, Debug, Default)]
struct StateArgs {
    #[arg(long)]
    kappa: Option<f64>,
    /// Applied field H.
    #[arg(long = "h")]
    h: Option<f64>,
    /// Cells per side.
    #[arg(long)]
    n: Option<usize>,
    /// normal, uniform or seeded-noise.
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    grad_tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Start from a checkpoint instead of solving.
    #[arg(long)]
    from: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    state: StateArgs,
    /// Also write the final state as a checkpoint.
    #[arg(long)]
    checkpoint: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Comma-separated κ values.
    #[arg(long, value_delimiter = ',')]
    kappas: Option<Vec<f64>>,
    /// Comma-separated ρ = κ/H values.
    #[arg(long, value_delimiter = ',')]
    rhos: Option<Vec<f64>>,
    #[arg(long)]
    per_length: Option<f64>,
    #[arg(long)]
    min_n: Option<usize>,
    #[arg(long)]
    prefix: Option<String>,
    #[arg(long)]
    checkpoints: bool,
}

#[derive(Args, Debug)]
struct SpectralArgs {
    #[arg(long)]
    theta0: bool,
    /// Number of Landau levels to compute.
    #[arg(long)]
    landau: Option<usize>,
    #[arg(long)]
    mu_table: bool,
    #[arg(long)]
    halfplane: bool,
    /// Run the nonlinear limit probe at this λ.
    #[arg(long)]
    probe: Option<f64>,
    #[arg(long)]
    probe_r: Option<f64>,
    #[arg(long)]
    probe_s: Option<f64>,
    /// plane or halfplane.
    #[arg(long)]
    geometry: Option<String>,
}

#[derive(Args, Debug)]
struct BlowupArgs {
    #[command(flatten)]
    state: StateArgs,
    /// Frame radius in magnetic lengths.
    #[arg(long)]
    r: Option<f64>,
    /// Extra point "x,y".
    #[arg(long, value_delimiter = ',')]
    point: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct IdentityArgs {
    #[command(flatten)]
    state: StateArgs,
    #[arg(long)]
    p1: Option<f64>,
    #[arg(long)]
    p2: Option<f64>,
    #[arg(long)]
    r0: Option<f64>,
    /// symmetric or wavy.
    #[arg(long)]
    field: Option<String>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Sweep CSV files.
    #[arg(required = true)]
    csv: Vec<PathBuf>,
    #[arg(long)]
    include_unconverged: bool,
}

/// Exit codes: 0 verdicts pass, 1 a verdict failed, 2 usage or config
/// error, 3 solver or eigensolver did not converge.
enum Outcome {
    Pass,
    Fail,
    NotConverged,
}

struct CliError {
    code: u8,
    msg: String,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError { code: 2, msg: msg.into() }
    }
}

impl From<gl_lab::Error> for CliError {
    fn from(e: gl_lab::Error) -> Self {
        let code = match e {
            gl_lab::Error::Solver { .. } | gl_lab::Error::Eigen { .. } => 3,
            _ => 2,
        };
        CliError { code, msg: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::usage(e.to_string())
    }
}

type CmdResult = Result<Outcome, CliError>;

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    hash: String,
    seed: u64,
}

impl Ctx {
    fn provenance(&self) -> String {
        gl_lab::sweep::provenance_line(&self.hash, self.seed)
    }

    fn path(&self, name: &str) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(&self.out)?;
        Ok(self.out.join(name))
    }

    fn write_json(&self, name: &str, payload: Value) -> Result<PathBuf, CliError> {
        let mut doc = json!({
            "tool": "gl-lab",
            "version": VERSION,
            "config_sha256": self.hash,
            "seed": self.seed,
        });
        if let (Value::Object(d), Value::Object(p)) = (&mut doc, payload) {
            d.extend(p);
        }
        let path = self.path(name)?;
        let mut f = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut f, &doc).map_err(|e| CliError::usage(e.to_string()))?;
        writeln!(f)?;
        f.flush()?;
        Ok(path)
    }
}

fn parse_init(s: &str) -> Result<Init, CliError> {
    match s {
        "normal" => Ok(Init::Normal),
        "uniform" => Ok(Init::Uniform),
        "seeded-noise" => Ok(Init::SeededNoise),
        _ => Err(CliError::usage(format!(
            "--init: unknown value '{s}' (expected normal, uniform or seeded-noise)"
        ))),
    }
}

fn parse_geometry(s: &str) -> Result<Geometry, CliError> {
    match s {
        "plane" => Ok(Geometry::Plane),
        "halfplane" => Ok(Geometry::Halfplane),
        _ => Err(CliError::usage(format!("--geometry: unknown value '{s}' (expected plane or halfplane)"))),
    }
}

fn apply_state_flags(cfg: &mut RunConfig, a: &StateArgs, seed: Option<u64>) -> Result<(), CliError> {
    let s = &mut cfg.solve;
    if let Some(v) = a.kappa {
        s.kappa = v;
    }
    if let Some(v) = a.h {
        s.h = v;
    }
    if a.n.is_some() {
        s.n = a.n;
    }
    if let Some(v) = &a.init {
        s.options.init = parse_init(v)?;
    }
    if let Some(v) = a.noise {
        s.options.noise_amp = v;
    }
    if let Some(v) = a.grad_tol {
        s.options.grad_tol = v;
    }
    if let Some(v) = a.max_iter {
        s.options.max_iter = v;
    }
    if let Some(v) = seed {
        s.options.seed = v;
    }
    Ok(())
}

/// State from a checkpoint, or from a fresh solve per the `[solve]` section.
fn obtain_state(ctx: &Ctx, from: Option<&Path>) -> Result<(GLState, ResidualReport, Option<SolveStats>), CliError> {
    if let Some(p) = from {
        let (state, meta) = read_checkpoint(p)?;
        let res = residuals(&state);
        return Ok((state, res, meta.stats));
    }
    let s = &ctx.cfg.solve;
    let grid = match s.n {
        Some(n) => Grid::square(n, s.side)?,
        None => grid_for(s.kappa, s.h, s.side, s.per_length, s.min_n)?,
    };
    let (state, res, stats) = solve(grid, s.kappa, s.h, &s.options)?;
    Ok((state, res, Some(stats)))
}

fn print_report(rep: &EstimateReport) {
    println!("{:<13} {:>13} {:>13} {:>13}", "estimate", "lhs", "rhs", "ratio");
    for e in &rep.entries {
        let ratio = e.ratio.map(|r| format!("{r:.6e}")).unwrap_or_else(|| "indeterminate".into());
        let gate = if e.in_regime { "" } else { "  (out of regime)" };
        println!("{:<13} {:>13.6e} {:>13.6e} {:>13}{gate}", e.id, e.lhs, e.rhs, ratio);
    }
}

fn cmd_solve(ctx: &Ctx, args: &SolveArgs) -> CmdResult {
    let (state, res, stats) = obtain_state(ctx, args.state.from.as_deref())?;
    let rep = evaluate(&state, Some(&res), &ctx.cfg.norms, &ctx.cfg.regime)?;
    let converged = stats.as_ref().map_or(true, |s| s.converged);
    if let Some(s) = &stats {
        println!(
            "kappa {} H {} grid {}  iterations {} converged {} energy {:.10e}",
            state.kappa,
            state.h,
            state.grid().nx(),
            s.iterations,
            s.converged,
            s.energy
        );
    }
    print_report(&rep);
    let infini = rep.ratio("infini").unwrap_or(0.0);
    let cine = rep.ratio("cine").unwrap_or(0.0);
    let ok = infini <= 1.0 + 1e-6 && cine <= 1.0 + 1e-3;
    ctx.write_json(
        "solve.json",
        json!({"stats": stats, "residuals": res, "report": rep, "contracts_hold": ok}),
    )?;
    if args.checkpoint {
        let meta = CheckpointMeta {
            kappa: state.kappa,
            h: state.h,
            options: ctx.cfg.solve.options,
            seed: ctx.seed,
            stats,
        };
        write_checkpoint(&ctx.path("solve.ckpt")?, &state, &meta)?;
    }
    Ok(if !converged {
        Outcome::NotConverged
    } else if ok {
        Outcome::Pass
    } else {
        Outcome::Fail
    })
}

fn print_verdicts(v: &Verdicts) {
    for x in v.all() {
        print_verdict(x);
    }
}

fn print_verdict(v: &Verdict) {
    let tag = match v.status {
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
        Status::NotApplicable => "N/A ",
    };
    println!("{tag} {:<8} rows {:>3}  {}", v.name, v.rows, v.detail);
}

fn cmd_sweep(ctx: &Ctx) -> CmdResult {
    let cfg = &ctx.cfg.sweep;
    let result = run_sweep(cfg)?;
    for r in &result.rows {
        let state = match (&r.errored, r.converged) {
            (Some(e), _) => format!("errored: {e}"),
            (None, true) => "converged".into(),
            (None, false) => "not converged".into(),
        };
        println!(
            "kappa {:<6} rho {:<8} H {:<10.6} grid {:<4} iterations {:<6} {state}",
            r.kappa, r.rho, r.h, r.grid_n, r.iterations
        );
    }
    print_verdicts(&result.verdicts);
    for p in write_outputs(&result, cfg, &ctx.out)? {
        println!("wrote {}", p.display());
    }
    Ok(if !result.verdicts.passed() {
        Outcome::Fail
    } else if result.rows.iter().any(|r| r.errored.is_some() || !r.converged) {
        Outcome::NotConverged
    } else {
        Outcome::Pass
    })
}

fn cmd_spectral(ctx: &Ctx, args: &SpectralArgs) -> CmdResult {
    let s = &ctx.cfg.spectral;
    let none = !args.theta0 && args.landau.is_none() && !args.mu_table && !args.halfplane && args.probe.is_none();
    let mut out = serde_json::Map::new();
    if args.theta0 || none {
        let r = theta0_with(s.tol, s.t, s.n, 2 * s.n)?;
        println!("theta0 {:.9} xi_opt {:.9}", r.theta0, r.xi_opt);
        out.insert("theta0".into(), json!({"theta0": r.theta0, "xi_opt": r.xi_opt, "t": r.t, "n_coarse": r.n_coarse, "n_fine": r.n_fine}));
    }
    if args.theta0 || args.mu_table || none {
        if s.xi_points < 2 || !(s.xi_max > s.xi_min) {
            return Err(CliError::usage("spectral: need xi_points ≥ 2 and xi_max > xi_min"));
        }
        let step = (s.xi_max - s.xi_min) / (s.xi_points - 1) as f64;
        let xis: Vec<f64> = (0..s.xi_points).map(|k| s.xi_min + k as f64 * step).collect();
        let rows = mu_table(&xis, s.t, s.n)?;
        let p = ctx.path("mu_table.csv")?;
        let mut f = BufWriter::new(File::create(&p)?);
        writeln!(f, "{}", ctx.provenance())?;
        write_mu_csv(&mut f, &rows, s.t, s.n)?;
        f.flush()?;
        println!("wrote {}", p.display());
    }
    if let Some(count) = args.landau {
        let lv = landau_levels(count, s.landau_t, s.landau_n)?;
        println!("landau {}", lv.iter().map(|v| format!("{v:.8}")).collect::<Vec<_>>().join(" "));
        out.insert("landau".into(), json!(lv));
    }
    if args.halfplane {
        let e = halfplane_extrapolated(s.r_small, s.r_large, s.per_unit)?;
        println!(
            "halfplane R={} {:.7}  R={} {:.7}  extrapolated {:.7}",
            e.r_small, e.lambda_small, e.r_large, e.lambda_large, e.extrapolated
        );
        out.insert("halfplane".into(), json!(e));
    }
    if let Some(lambda) = args.probe {
        let geometry = match &args.geometry {
            Some(g) => parse_geometry(g)?,
            None => s.probe_geometry,
        };
        let r = args.probe_r.unwrap_or(s.probe_r);
        let sv = args.probe_s.unwrap_or(s.probe_s);
        let p = nonlinear_limit_probe(lambda, sv, r, geometry, &s.probe)?;
        println!(
            "probe lambda {lambda} S {sv} R {r}: sup {:.6e} energy {:.6e} edge fraction {:.4} zero_state {} converged {}",
            p.sup_norm, p.energy, p.edge_mass_fraction, p.zero_state, p.converged
        );
        out.insert("probe".into(), json!({"lambda": lambda, "s": sv, "r": r, "geometry": geometry, "result": p}));
        if !p.converged && !p.zero_state {
            ctx.write_json("spectral.json", Value::Object(out))?;
            return Ok(Outcome::NotConverged);
        }
    }
    ctx.write_json("spectral.json", Value::Object(out))?;
    Ok(Outcome::Pass)
}

fn frame_summary(name: &str, frame: &BlowupFrame) -> Result<Value, CliError> {
    let res = limit_residual(frame)?;
    let (curl_mean, curl_dev) = frame_curl(frame)?;
    println!(
        "{name}: P ({:.6}, {:.6}) {:?} S {:.6} Lambda {:.6} residual {:.6e} curl {:.6} ± {:.2e}",
        frame.p.0, frame.p.1, frame.case, frame.s, frame.lambda, res, curl_mean, curl_dev
    );
    Ok(json!({"frame": frame, "limit_residual": res, "curl_mean": curl_mean, "curl_max_deviation": curl_dev}))
}

fn cmd_blowup(ctx: &Ctx, args: &BlowupArgs) -> CmdResult {
    let (state, _, stats) = obtain_state(ctx, args.state.from.as_deref())?;
    let b = &ctx.cfg.blowup;
    let r = args.r.unwrap_or(b.r);
    let point = match &args.point {
        Some(v) if v.len() == 2 => Some([v[0], v[1]]),
        Some(_) => return Err(CliError::usage("--point takes two coordinates, x,y")),
        None => b.point,
    };
    let (pmax, _) = argmax_distance(&state.psi)?;
    let mut out = serde_json::Map::new();
    let f = rescale(&state, pmax, r)?;
    out.insert("argmax".into(), frame_summary("argmax", &f)?);
    write_frame(&ctx.path("frame_argmax.bin")?, &f)?;
    if let Some([x, y]) = point {
        let f = rescale(&state, (x, y), r)?;
        out.insert("point".into(), frame_summary("point", &f)?);
        write_frame(&ctx.path("frame_point.bin")?, &f)?;
    }
    ctx.write_json("blowup.json", Value::Object(out))?;
    Ok(match stats {
        Some(s) if !s.converged => Outcome::NotConverged,
        _ => Outcome::Pass,
    })
}

fn cmd_identity(ctx: &Ctx, args: &IdentityArgs) -> CmdResult {
    let (state, _, stats) = obtain_state(ctx, args.state.from.as_deref())?;
    let c = &ctx.cfg.identity;
    let (p1, p2) = (args.p1.unwrap_or(c.p1), args.p2.unwrap_or(c.p2));
    let r0 = args.r0.unwrap_or(c.r0);
    let field = AnalyticField::by_name(args.field.as_deref().unwrap_or(&c.field))?;

    let ibp = ibp_identity(&state, ctx.cfg.solve.options.grad_tol)?;
    println!(
        "identity: lhs {:.6e} rhs {:.6e} relative gap {:.4e}{}{}",
        ibp.lhs,
        ibp.rhs,
        ibp.gap,
        if ibp.degenerate { " (degenerate)" } else { "" },
        if ibp.bc_flagged { " (boundary residual above gate)" } else { "" }
    );
    let lemma = lemma_intparts(&state.psi, &state.a, state.b(), p1, p2)?;
    println!("inequality (p1 {p1}, p2 {p2}): lhs {:.6e} rhs {:.6e} ratio {:.4}", lemma.lhs, lemma.rhs, lemma.ratio);
    if c.steps.is_empty() {
        return Err(CliError::usage("identity.steps must not be empty"));
    }
    let mut study = Vec::new();
    for &h in &c.steps {
        let d = curl_transform_check(r0, c.t_max, &field, h)?;
        println!("curl transform ({}, R0 {r0}) h {h:.6e}: deviation {d:.4e}", field.name);
        study.push(json!({"h": h, "deviation": d}));
    }
    let finest = curl_transform_check(r0, c.t_max, &field, c.steps.iter().cloned().fold(f64::INFINITY, f64::min))?;
    let gap_ok = ibp.degenerate || ibp.bc_flagged || ibp.gap <= 0.05;
    let ok = gap_ok && lemma.ratio <= 1.0 && finest <= 1e-4;
    ctx.write_json(
        "identity.json",
        json!({"identity": ibp, "inequality": lemma, "p1": p1, "p2": p2,
               "curl_transform": {"field": field.name, "r0": r0, "t_max": c.t_max, "steps": study}}),
    )?;
    Ok(match stats {
        Some(s) if !s.converged => Outcome::NotConverged,
        _ if ok => Outcome::Pass,
        _ => Outcome::Fail,
    })
}

fn cmd_report(ctx: &Ctx, args: &ReportArgs) -> CmdResult {
    let mut rows = Vec::new();
    for p in &args.csv {
        rows.extend(read_csv(p)?);
    }
    rows.sort_by(|a, b| a.kappa.total_cmp(&b.kappa).then(a.rho.total_cmp(&b.rho)));
    for (i, r) in rows.iter_mut().enumerate() {
        r.index = i;
    }
    let incl = args.include_unconverged || ctx.cfg.sweep.include_unconverged;
    let v = aggregate(&rows, incl);
    print_verdicts(&v);
    let inputs: Vec<String> = args.csv.iter().map(|p| p.display().to_string()).collect();
    ctx.write_json(
        "report.json",
        json!({"inputs": inputs, "rows": rows.len(), "passed": v.passed(), "verdicts": v}),
    )?;
    Ok(if v.passed() { Outcome::Pass } else { Outcome::Fail })
}

fn run(cli: Cli) -> CmdResult {
    let mut cfg = config::load(cli.config.as_deref()).map_err(CliError::usage)?;
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    let seed_flag = cli.seed.or(cfg.seed);
    let out = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    match &cli.cmd {
        Cmd::Solve(a) => apply_state_flags(&mut cfg, &a.state, seed_flag)?,
        Cmd::Blowup(a) => apply_state_flags(&mut cfg, &a.state, seed_flag)?,
        Cmd::CheckIdentity(a) => apply_state_flags(&mut cfg, &a.state, seed_flag)?,
        Cmd::Sweep(a) => {
            let s = &mut cfg.sweep;
            if let Some(v) = &a.kappas {
                s.kappas = v.clone();
            }
            if let Some(v) = &a.rhos {
                s.rhos = v.clone();
            }
            if let Some(v) = a.per_length {
                s.per_length = v;
            }
            if let Some(v) = a.min_n {
                s.min_n = v;
            }
            if let Some(v) = &a.prefix {
                s.outputs.prefix = v.clone();
            }
            s.outputs.checkpoints |= a.checkpoints;
            if let Some(v) = seed_flag {
                s.seed = v;
            }
        }
        Cmd::Spectral(_) | Cmd::Report(_) => {}
    }
    cfg.solve.options.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let seed = match &cli.cmd {
        Cmd::Sweep(_) => cfg.sweep.seed,
        Cmd::Spectral(_) | Cmd::Report(_) => seed_flag.unwrap_or(0),
        _ => cfg.solve.options.seed,
    };
    cfg.seed = Some(seed);
    cfg.out = None;
    let hash = match &cli.cmd {
        Cmd::Sweep(_) => gl_lab::sweep::config_hash(&cfg.sweep),
        _ => json_hash(&cfg),
    };
    let ctx = Ctx { cfg, out, hash, seed };
    match &cli.cmd {
        Cmd::Solve(a) => cmd_solve(&ctx, a),
        Cmd::Sweep(_) => cmd_sweep(&ctx),
        Cmd::Spectral(a) => cmd_spectral(&ctx, a),
        Cmd::Blowup(a) => cmd_blowup(&ctx, a),
        Cmd::CheckIdentity(a) => cmd_identity(&ctx, a),
        Cmd::Report(a) => cmd_report(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Ok(Outcome::NotConverged) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {}", e.msg);
            ExitCode::from(e.code)
        }
    }
}
