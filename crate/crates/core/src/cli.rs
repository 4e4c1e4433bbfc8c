//! Command-line front end: `solve`, `verify`, `oracle`, `sweep`, `identities`.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

use crate::config::RunConfig;
use crate::degenerate::sweep;
use crate::identities::{run_battery, IdentityConfig};
use crate::measure::{BarenblattMeasure, EllipsoidSpec, SpecJson};
use crate::oracle::{compare_with_spec, direct_convolution, particle_minimize, write_energy_csv};
use crate::potential::{exterior_grid, interior_grid, PotentialField};
use crate::solver::homotopy_solve;
use crate::squad::build_rule;
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_POSITIVITY: i32 = 2;
pub const EXIT_CONTINUATION: i32 = 3;
pub const EXIT_EL: i32 = 4;
pub const EXIT_IDENTITY: i32 = 5;
pub const EXIT_ORACLE: i32 = 6;

pub const LOG_ENV: &str = "RIESZ_ELLIPSOID_LOG";

#[derive(Debug, Parser)]
#[command(name = "riesz-ellipsoid", version, about = "Ellipsoidal minimisers of anisotropic Riesz energies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// run configuration (JSON)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory, overrides the config
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// worker threads
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// RNG seed, overrides the config
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// homotopy solve for the support ellipsoid
    Solve,
    /// Euler-Lagrange check of a solved spec
    Verify {
        /// spec JSON written by `solve` (default: <out>/spec.json)
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// physical-space convolution and particle cross-checks
    Oracle {
        #[arg(long)]
        spec: Option<PathBuf>,
        /// also run the interacting-particle descent
        #[arg(long)]
        particles: bool,
    },
    /// eps-lifted sweep of a degenerate profile
    Sweep,
    /// special-function identity battery
    Identities,
}

/// A command failure carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::PositivityAuditFailed { .. } => EXIT_POSITIVITY,
            Error::StepUnderflow { .. } | Error::MaxIterations { .. } | Error::LostPositivity(_) => EXIT_CONTINUATION,
            _ => EXIT_CONFIG,
        };
        Self { code, message: e.to_string() }
    }
}

type CmdResult = std::result::Result<Vec<PathBuf>, Failure>;

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    package: &'static str,
    version: &'static str,
    config_path: Option<&'a Path>,
    config: Option<&'a RunConfig>,
    identities: Option<&'a IdentityConfig>,
    seed: u64,
    threads: Option<usize>,
    inputs: Vec<PathBuf>,
    out: &'a Path,
    /// relative to `out`
    outputs: Vec<PathBuf>,
    exit_code: i32,
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).try_init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return EXIT_CONFIG;
        }
        // a second call in the same process (tests) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cli: &Cli) -> std::result::Result<(), Failure> {
    let name = match &cli.command {
        Command::Solve => "solve",
        Command::Verify { .. } => "verify",
        Command::Oracle { .. } => "oracle",
        Command::Sweep => "sweep",
        Command::Identities => "identities",
    };
    let cfg = match (&cli.config, &cli.command) {
        (Some(p), _) => {
            let mut c = RunConfig::load(p).map_err(|e| Failure::new(EXIT_CONFIG, format!("config {}: {e}", p.display())))?;
            if let Some(o) = &cli.out {
                c.out = o.clone();
            }
            if let Some(s) = cli.seed {
                c.seed = s;
            }
            Some(c)
        }
        (None, Command::Identities) => None,
        (None, _) => return Err(Failure::new(EXIT_CONFIG, format!("`{name}` needs --config <path>"))),
    };
    let out = cfg.as_ref().map(|c| c.out.clone()).or_else(|| cli.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out).map_err(|e| Failure::new(EXIT_CONFIG, format!("output directory {}: {e}", out.display())))?;
    let spec_path = |s: &Option<PathBuf>| s.clone().unwrap_or_else(|| out.join("spec.json"));
    let mut inputs: Vec<PathBuf> = cli.config.iter().cloned().collect();
    let result = match (&cli.command, &cfg) {
        (Command::Solve, Some(c)) => cmd_solve(c, &out),
        (Command::Verify { spec }, Some(c)) => {
            inputs.push(spec_path(spec));
            cmd_verify(c, &spec_path(spec), &out)
        }
        (Command::Oracle { spec, particles }, Some(c)) => {
            inputs.push(spec_path(spec));
            cmd_oracle(c, &spec_path(spec), *particles, &out)
        }
        (Command::Sweep, Some(c)) => cmd_sweep(c, &out),
        (Command::Identities, c) => {
            let ic = c.as_ref().map(|c| c.identities.clone()).unwrap_or_default();
            cmd_identities(&ic, &out)
        }
        _ => unreachable!("config presence checked above"),
    };
    let (outputs, code) = match &result {
        Ok(o) => (o.iter().map(|p| p.strip_prefix(&out).unwrap_or(p).to_path_buf()).collect(), EXIT_OK),
        Err(f) => (Vec::new(), f.code),
    };
    let default_ids = IdentityConfig::default();
    let manifest = Manifest {
        command: name,
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config_path: cli.config.as_deref(),
        config: cfg.as_ref(),
        identities: if cfg.is_none() { Some(&default_ids) } else { None },
        seed: cfg.as_ref().map(|c| c.seed).or(cli.seed).unwrap_or(0),
        threads: cli.threads,
        inputs,
        out: &out,
        outputs,
        exit_code: code,
    };
    write_json(&out.join(format!("{name}.manifest.json")), &manifest)?;
    result.map(|_| ())
}

fn io_fail(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::new(EXIT_CONFIG, format!("{}: {e}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> std::result::Result<(), Failure> {
    let text = serde_json::to_string_pretty(v).map_err(|e| io_fail(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_fail(path, e))
}

fn read_spec(path: &Path) -> std::result::Result<(SpecJson, EllipsoidSpec), Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_fail(path, e))?;
    let js: SpecJson = serde_json::from_str(&text).map_err(|e| io_fail(path, e))?;
    let spec = js.to_spec().map_err(|e| io_fail(path, e))?;
    Ok((js, spec))
}

fn check_spec_matches(cfg: &RunConfig, js: &SpecJson) -> std::result::Result<(), Failure> {
    if js.d != cfg.problem.d || js.s != cfg.problem.s {
        return Err(Failure::new(
            EXIT_CONFIG,
            format!("spec is for (d, s) = ({}, {}) but the config has ({}, {})", js.d, js.s, cfg.problem.d, cfg.problem.s),
        ));
    }
    Ok(())
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|&x| format!("{:.12}", if x.abs() < 5e-13 { 0.0 } else { x })).collect::<Vec<_>>().join(" ")
}

fn cmd_solve(cfg: &RunConfig, out: &Path) -> CmdResult {
    let h = cfg.homogeneity()?;
    let profile = cfg.build_profile()?;
    let sol = match homotopy_solve(&profile, &cfg.solver) {
        Ok(s) => s,
        Err(Error::StepUnderflow { t, last_m }) => {
            return Err(Failure::new(
                EXIT_CONTINUATION,
                format!("continuation step underflow; last good t = {t}, M = {last_m:?}"),
            ))
        }
        Err(e) => return Err(e.into()),
    };
    let spec_path = out.join("spec.json");
    write_json(&spec_path, &sol.spec.to_json(&h))?;
    let trace_path = out.join("trace.csv");
    sol.trace.write_csv(&trace_path)?;
    let density_path = out.join("density.csv");
    write_density_slice(&sol.spec, &h, cfg, &density_path)?;

    let d = h.d;
    let mut summary = String::new();
    summary += "riesz-ellipsoid solve\n";
    summary += &format!("d = {d}, s = {}\n", h.s);
    for w in &sol.warnings {
        summary += &format!("warning: {w}\n");
    }
    if !h.theorem_range() && !sol.warnings.iter().any(|w| w.contains("outside theorem range")) {
        summary += "warning: outside theorem range\n";
    }
    let amax = sol.spec.a.iter().cloned().fold(0.0, f64::max);
    let amin = sol.spec.a.iter().cloned().fold(f64::INFINITY, f64::min);
    if amax - amin <= 1e-10 * amax {
        summary += &format!("isotropic support: ball of radius r_d = {:.12}\n", sol.spec.a[0]);
    } else {
        summary += &format!("semi-axes a = {}\n", fmt_vec(&sol.spec.a));
    }
    for i in 0..d {
        let row: Vec<f64> = (0..d).map(|j| sol.spec.r[(i, j)]).collect();
        summary += &format!("R[{i}] = {}\n", fmt_vec(&row));
    }
    summary += &format!("residual |L(1, M)|_inf = {:.3e}\n", sol.residual);
    summary += &format!("sphere rule order = {}\n", sol.order);
    summary += &format!("continuation points = {}\n", sol.trace.points.len());
    let ok = sol.residual <= cfg.solver.refine_tol;
    summary += &format!("status: {}\n", if ok { "converged" } else { "residual above tolerance" });
    let summary_path = out.join("summary.txt");
    fs::write(&summary_path, &summary).map_err(|e| io_fail(&summary_path, e))?;
    print!("{summary}");
    let _ = std::io::stdout().flush();
    if !ok {
        return Err(Failure::new(
            EXIT_CONTINUATION,
            format!("final residual {:.3e} above {:.1e}", sol.residual, cfg.solver.refine_tol),
        ));
    }
    Ok(vec![spec_path, trace_path, density_path, summary_path])
}

/// Cell-centred grid on the plane of the two longest axes, `(u, v)` in semi-axis units.
fn slice_points(spec: &EllipsoidSpec, n: usize, extent: f64) -> Vec<(f64, f64, Vec<f64>)> {
    let d = spec.d();
    let step = 2.0 * extent / n as f64;
    let mut pts = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let u = -extent + (i as f64 + 0.5) * step;
            let v = -extent + (j as f64 + 0.5) * step;
            let mut y = vec![0.0; d];
            y[0] = u;
            y[1] = v;
            pts.push((u, v, spec.from_unit(&y)));
        }
    }
    pts
}

fn write_density_slice(
    spec: &EllipsoidSpec,
    h: &crate::specfun::Homogeneity,
    cfg: &RunConfig,
    path: &Path,
) -> std::result::Result<(), Failure> {
    let m = BarenblattMeasure::new(spec.clone(), *h)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| io_fail(path, e))?;
    let mut header = vec!["u".to_string(), "v".to_string()];
    header.extend((1..=spec.d()).map(|i| format!("x{i}")));
    header.push("density".into());
    w.write_record(&header).map_err(|e| io_fail(path, e))?;
    for (u, v, x) in slice_points(spec, cfg.verify.slice_points, 1.25) {
        let mut rec = vec![format!("{u:.6}"), format!("{v:.6}")];
        rec.extend(x.iter().map(|c| format!("{c:.12e}")));
        rec.push(format!("{:.12e}", m.density(&x)));
        w.write_record(&rec).map_err(|e| io_fail(path, e))?;
    }
    w.flush().map_err(|e| io_fail(path, e))
}

fn cmd_verify(cfg: &RunConfig, spec_path: &Path, out: &Path) -> CmdResult {
    let h = cfg.homogeneity()?;
    let (js, spec) = read_spec(spec_path)?;
    check_spec_matches(cfg, &js)?;
    let profile = cfg.build_profile()?;
    let field = PotentialField::new(BarenblattMeasure::new(spec.clone(), h)?, &profile, cfg.potential.clone())?;
    let interior = interior_grid(&spec, cfg.verify.interior_points)?;
    let exterior = exterior_grid(&spec, cfg.verify.exterior_order)?;
    let report = field.verify_el(&interior, &exterior)?;
    let report_path = out.join("el_report.json");
    write_json(&report_path, &report)?;
    let grid_path = out.join("pe_grid.csv");
    let pts = slice_points(&spec, cfg.verify.slice_points, cfg.verify.slice_extent);
    use rayon::prelude::*;
    let vals: Vec<f64> = pts.par_iter().map(|(_, _, x)| field.p_field(x)).collect::<crate::Result<_>>()?;
    let mut w = csv::Writer::from_path(&grid_path).map_err(|e| io_fail(&grid_path, e))?;
    let mut header = vec!["u".to_string(), "v".to_string()];
    header.extend((1..=spec.d()).map(|i| format!("x{i}")));
    header.extend(["p_e".to_string(), "p_e_minus_c".to_string(), "inside".to_string()]);
    w.write_record(&header).map_err(|e| io_fail(&grid_path, e))?;
    for ((u, v, x), p) in pts.iter().zip(&vals) {
        let mut rec = vec![format!("{u:.6}"), format!("{v:.6}")];
        rec.extend(x.iter().map(|c| format!("{c:.12e}")));
        rec.push(format!("{p:.15e}"));
        rec.push(format!("{:.6e}", p - report.constant_c));
        rec.push(((spec.unit_radius2(x) <= 1.0) as u8).to_string());
        w.write_record(&rec).map_err(|e| io_fail(&grid_path, e))?;
    }
    w.flush().map_err(|e| io_fail(&grid_path, e))?;
    println!(
        "EL1: max |P_E - C| = {:.3e} (C = {:.12}, tol {:.1e} |C|) {}",
        report.el1_max_deviation,
        report.constant_c,
        cfg.potential.el1_tol,
        if report.el1_ok { "ok" } else { "VIOLATED" }
    );
    println!(
        "EL2: min (P_E - C) = {:.3e}, via cap integral {:.3e} (tol -{:.1e}) {}",
        report.el2_min_margin,
        report.el2_min_decomposed,
        cfg.potential.el2_tol,
        if report.el2_ok { "ok" } else { "VIOLATED" }
    );
    if !(report.el1_ok && report.el2_ok) {
        return Err(Failure::new(EXIT_EL, "Euler-Lagrange conditions violated beyond tolerance"));
    }
    Ok(vec![report_path, grid_path])
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleRow {
    pub kind: &'static str,
    pub x: Vec<f64>,
    pub potential: f64,
    pub direct: f64,
    pub direct_error: f64,
    pub rel_error: f64,
}

/// `n_in` points inside `E` and `n_out` outside, on fixed directions.
pub fn oracle_points(spec: &EllipsoidSpec, n_in: usize, n_out: usize) -> crate::Result<Vec<(&'static str, Vec<f64>)>> {
    let d = spec.d();
    let dirs = build_rule(d, 5)?;
    let nd = dirs.len();
    let mut out = Vec::with_capacity(n_in + n_out);
    for k in 0..n_in {
        let r = 0.9 * k as f64 / n_in.max(1) as f64;
        let w = dirs.node((3 * k + 1) % nd);
        out.push(("interior", spec.from_unit(&w.iter().map(|v| r * v).collect::<Vec<_>>())));
    }
    let scales = [1.2, 1.5, 2.0, 3.0, 5.0];
    for k in 0..n_out {
        let lam = scales[k % scales.len()];
        let w = dirs.node((5 * k + 2) % nd);
        out.push(("exterior", spec.from_unit(&w.iter().map(|v| lam * v).collect::<Vec<_>>())));
    }
    Ok(out)
}

pub fn oracle_rows(field: &PotentialField, cfg: &RunConfig, spec: &EllipsoidSpec) -> crate::Result<Vec<OracleRow>> {
    use rayon::prelude::*;
    let pts = oracle_points(spec, cfg.oracle.interior_points, cfg.oracle.exterior_points)?;
    pts.par_iter()
        .map(|(kind, x)| {
            let pot = field.convolve(x)?;
            let dir = direct_convolution(&field.measure, &field.profile, x, &cfg.oracle.convolution)?;
            Ok(OracleRow {
                kind,
                x: x.clone(),
                potential: pot,
                direct: dir.value,
                direct_error: dir.error,
                rel_error: (pot - dir.value).abs() / dir.value.abs(),
            })
        })
        .collect()
}

fn cmd_oracle(cfg: &RunConfig, spec_path: &Path, particles: bool, out: &Path) -> CmdResult {
    let h = cfg.homogeneity()?;
    let (js, spec) = read_spec(spec_path)?;
    check_spec_matches(cfg, &js)?;
    let profile = cfg.build_profile()?;
    let field = PotentialField::new(BarenblattMeasure::new(spec.clone(), h)?, &profile, cfg.potential.clone())?;
    let rows = oracle_rows(&field, cfg, &spec)?;
    let csv_path = out.join("oracle.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| io_fail(&csv_path, e))?;
    let mut header = vec!["kind".to_string()];
    header.extend((1..=h.d).map(|i| format!("x{i}")));
    header.extend(["potential", "direct", "direct_error", "rel_error"].map(String::from));
    w.write_record(&header).map_err(|e| io_fail(&csv_path, e))?;
    for r in &rows {
        let mut rec = vec![r.kind.to_string()];
        rec.extend(r.x.iter().map(|c| format!("{c:.12e}")));
        rec.extend([r.potential, r.direct, r.direct_error, r.rel_error].iter().map(|v| format!("{v:.15e}")));
        w.write_record(&rec).map_err(|e| io_fail(&csv_path, e))?;
    }
    w.flush().map_err(|e| io_fail(&csv_path, e))?;
    let worst = rows.iter().map(|r| r.rel_error).fold(0.0, f64::max);
    println!("convolution agreement: max relative error {worst:.3e} over {} points (tol {:.1e})", rows.len(), cfg.oracle.rel_tol);
    let mut outputs = vec![csv_path];
    let mut failed = worst > cfg.oracle.rel_tol;
    if particles {
        let pc = cfg.oracle.particles.clone().unwrap_or_default();
        info!("particle descent: n = {}, steps = {}", pc.n, pc.steps);
        let outcome = particle_minimize(&profile, cfg.seed, &pc)?;
        let cmp = compare_with_spec(&outcome.ensemble, &spec, field.measure.m2(), &profile)?;
        let p_path = out.join("particles.csv");
        outcome.ensemble.write_csv(&p_path, outcome.trace.last().map(|r| r.step).unwrap_or(0))?;
        let e_path = out.join("particle_energy.csv");
        write_energy_csv(&e_path, &outcome.trace)?;
        let c_path = out.join("particles.json");
        #[derive(Serialize)]
        struct P<'a> {
            comparison: &'a crate::oracle::ParticleComparison,
            continuum_energy: f64,
            converged: bool,
            steps: usize,
        }
        write_json(
            &c_path,
            &P { comparison: &cmp, continuum_energy: field.energy(), converged: outcome.converged, steps: outcome.trace.len() - 1 },
        )?;
        let angle = cmp.axis_angles_deg.iter().cloned().fold(0.0, f64::max);
        println!(
            "particles: eigenvalue-ratio error {:.3e}, max axis angle {angle:.2} deg, inside 1.05 E {:.4}",
            cmp.ratio_max_rel_error, cmp.inside_fraction
        );
        if cmp.ratio_max_rel_error > cfg.oracle.particle_ratio_tol
            || angle > cfg.oracle.particle_angle_tol_deg
            || cmp.inside_fraction < cfg.oracle.particle_inside_min
        {
            failed = true;
        }
        outputs.extend([p_path, e_path, c_path]);
    }
    let json_path = out.join("oracle.json");
    write_json(&json_path, &rows)?;
    outputs.push(json_path);
    if failed {
        return Err(Failure::new(EXIT_ORACLE, "oracle disagreement beyond tolerance"));
    }
    Ok(outputs)
}

fn cmd_sweep(cfg: &RunConfig, out: &Path) -> CmdResult {
    let profile = cfg.build_profile()?;
    let res = sweep(&profile, &cfg.sweep.schedule, &cfg.sweep_config())?;
    let csv_path = out.join("sweep.csv");
    res.write_csv(&csv_path)?;
    let json_path = out.join("sweep.json");
    write_json(&json_path, &res)?;
    for w in &res.warnings {
        warn!("{w}");
    }
    for p in &res.points {
        match &p.semi_axes {
            Some(a) => println!("eps = {:<8} a = {}  iters {}", p.eps, fmt_vec(a), p.iterations),
            None => println!("eps = {:<8} failed: {}", p.eps, p.failure.as_deref().unwrap_or("")),
        }
    }
    println!("classification: {} (support dimension >= {})", res.classification, res.dimension_lower_bound);
    Ok(vec![csv_path, json_path])
}

fn cmd_identities(ic: &IdentityConfig, out: &Path) -> CmdResult {
    let report = run_battery(ic)?;
    let csv_path = out.join("identities.csv");
    report.write_csv(&csv_path)?;
    let json_path = out.join("identities.json");
    write_json(&json_path, &report)?;
    for c in &report.checks {
        println!("[{}] {:<48} {:.3e} <= {:.1e}  {}", c.group, c.name, c.max_error, c.tolerance, if c.pass { "pass" } else { "FAIL" });
    }
    if !report.all_pass {
        return Err(Failure::new(EXIT_IDENTITY, "identity battery reported violations"));
    }
    Ok(vec![csv_path, json_path])
}
