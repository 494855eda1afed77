//! `massrd`: check, simulate and analyze stochastic reaction-diffusion runs.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 assumption-check
//! failure, 3 numerical fault.

mod report;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use massrd::config::{kernel_check_times, validate, Prepared, RunConfig, ValidationReport};
use massrd::montecarlo::{
    coupled_summaries, holder_ensemble, EnsembleOptions, ExponentRecord, MomentTable,
};
use massrd::output::{self, RunManifest, MANIFEST_SCHEMA};
use massrd::solver::{continue_path, initial_state, mass, nonnegativity_report, PathState};
use massrd::spectral::verify_kernel_singularity;
use massrd::truncation::TruncationLevel;
use massrd::Error;

#[derive(Parser, Debug)]
#[command(name = "massrd", version, about = "Stochastic reaction-diffusion laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Certify the structural assumptions and the noise kernel.
    Check(CheckArgs),
    /// Run one path and dump its trajectory.
    Simulate(SimulateArgs),
    /// Moment table over coupled truncation levels.
    Moments(EnsembleArgs),
    /// Blow-up probabilities with the Markov comparison.
    Blowup(EnsembleArgs),
    /// Measured kernel exponent, Hölder exponents and the exponent `a`.
    Regularity(RegularityArgs),
    /// Summarize output directories and write plot data.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Run config (`massrd/1`) or a manifest written by a previous run. A
    /// manifest of the same command also supplies any omitted arguments.
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, short, default_value = "massrd-out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config noise amplitude.
    #[arg(long)]
    noise_amplitude: Option<f64>,
    /// Run even if an assumption check fails.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Snapshot stride in steps (overrides the config).
    #[arg(long)]
    dump: Option<usize>,
    /// Path id (default 0).
    #[arg(long)]
    path_id: Option<u64>,
    /// Continue from a saved `state.json` instead of starting at t = 0.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EnsembleArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated truncation levels.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    levels: Vec<f64>,
    /// Number of paths (default 100).
    #[arg(long)]
    paths: Option<usize>,
    /// Moment exponent (defaults to the config's `moment_p`).
    #[arg(short, long)]
    p: Option<f64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, env = "MASSRD_THREADS")]
    threads: Option<usize>,
    /// Wall-clock budget; paths not started in time are skipped and the table is flagged partial.
    #[arg(long)]
    budget_seconds: Option<f64>,
}

#[derive(Args, Debug)]
struct RegularityArgs {
    #[command(flatten)]
    common: Common,
    /// Number of paths (default 50).
    #[arg(long)]
    paths: Option<usize>,
    /// Moment exponent for the exponent record.
    #[arg(short, long)]
    p: Option<f64>,
    /// Species whose snapshots are regressed (0-based, default 0).
    #[arg(long)]
    species: Option<usize>,
    #[arg(long, env = "MASSRD_THREADS")]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Output directories (or manifest files) of earlier runs.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, short, default_value = "massrd-report")]
    out: PathBuf,
}

/// Failure categories mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Assumptions(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NumericalFault { .. } => Failure::Numerical(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Usage(format!("json: {e}"))
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Check(a) => cmd_check(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Moments(a) => cmd_ensemble(a, "moments"),
        Command::Blowup(a) => cmd_ensemble(a, "blowup"),
        Command::Regularity(a) => cmd_regularity(a),
        Command::Report(a) => report::run(&a.inputs, &a.out).map_err(Failure::from),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Assumptions(m)) => {
            eprintln!("assumption check failed: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical fault: {m}");
            ExitCode::from(3)
        }
    }
}

/// Arguments recorded by an earlier run of the same command.
struct Recorded(BTreeMap<String, serde_json::Value>);

impl Recorded {
    fn get<T: serde::de::DeserializeOwned>(&self, key: &str) -> Option<T> {
        self.0.get(key).and_then(|v| serde_json::from_value(v.clone()).ok())
    }
}

/// Load a config, or the config recorded in a manifest, and apply flag
/// overrides. A manifest written by `command` also returns its arguments.
fn load_config(common: &Common, command: &str) -> Result<(RunConfig, Recorded), Failure> {
    let text = fs::read_to_string(&common.config)
        .map_err(|e| Failure::Usage(format!("{}: {e}", common.config.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let (mut cfg, recorded) = if value.get("schema").and_then(|s| s.as_str()) == Some(MANIFEST_SCHEMA) {
        let m = RunManifest::from_json(&text)?;
        let args = if m.command == command { m.arguments } else { BTreeMap::new() };
        (m.config, Recorded(args))
    } else {
        (RunConfig::load(&common.config)?, Recorded(BTreeMap::new()))
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(a) = common.noise_amplitude {
        cfg.noise_amplitude = a;
    }
    Ok((cfg.inlined()?, recorded))
}

/// Prepare and validate; failed checks abort unless `--force`.
fn prepare(common: &Common, cfg: RunConfig) -> Result<(Prepared, ValidationReport), Failure> {
    let prep = cfg.prepare()?;
    let report = validate(&prep)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if !report.passed() {
        let msg = report.failures().join("; ");
        if common.force {
            eprintln!("warning: continuing despite failed checks (--force): {msg}");
        } else {
            return Err(Failure::Assumptions(msg));
        }
    }
    Ok((prep, report))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn finish_manifest(dir: &Path, mut manifest: RunManifest, started: Instant) -> Outcome {
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    fs::write(dir.join("manifest.json"), manifest.to_json()? + "\n")?;
    Ok(())
}

fn print_checks(report: &ValidationReport) {
    for r in &report.assumptions.reports {
        let mut line = format!("{:<24} {:?}", format!("{:?}", r.assumption), r.verdict);
        if !r.note.is_empty() {
            line.push_str(&format!("  ({})", r.note));
        }
        if let Some(w) = r.witnesses.first() {
            line.push_str(&format!("  witness {:?} violation {:.3e}", w.point, w.violation));
        }
        println!("{line}");
    }
    let k = &report.kernel;
    println!(
        "{:<24} {:?}  eta_hat {:.4} (declared {:.4}), sup int L {:.4}",
        format!("kernel {}", k.kernel),
        if report.kernel.eta_conservative { k.positivity } else { massrd::checks::Verdict::Fail },
        k.eta_hat,
        k.eta_declared,
        k.integrability_sup
    );
}

fn cmd_check(args: CheckArgs) -> Outcome {
    let started = Instant::now();
    let (cfg, _) = load_config(&args.common, "check")?;
    let prep = cfg.prepare()?;
    let report = validate(&prep)?;
    print_checks(&report);
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    fs::create_dir_all(&args.common.out)?;
    write_json(&args.common.out.join("checks.json"), &report)?;
    let mut manifest = RunManifest::new("check", cfg);
    manifest.checks = Some(report.clone());
    manifest.outputs.insert("checks".into(), "checks.json".into());
    finish_manifest(&args.common.out, manifest, started)?;
    if report.passed() {
        Ok(())
    } else if args.common.force {
        eprintln!("warning: failed checks downgraded by --force: {}", report.failures().join("; "));
        Ok(())
    } else {
        Err(Failure::Assumptions(report.failures().join("; ")))
    }
}

fn cmd_simulate(args: SimulateArgs) -> Outcome {
    let started = Instant::now();
    let (mut cfg, recorded) = load_config(&args.common, "simulate")?;
    if let Some(stride) = args.dump {
        cfg.dump_stride = Some(stride);
    }
    let resume = args.resume.clone().or_else(|| recorded.get::<PathBuf>("resume"));
    let path_id = args.path_id.or_else(|| recorded.get("path_id")).unwrap_or(0);
    let (prep, checks) = prepare(&args.common, cfg.clone())?;
    let sim = &prep.simulation;
    let state = match &resume {
        Some(p) => serde_json::from_str::<PathState>(&fs::read_to_string(p)?)?,
        None => initial_state(sim, path_id)?,
    };
    let out = continue_path(sim, state)?;
    let dir = &args.common.out;
    fs::create_dir_all(dir)?;
    let mut manifest = RunManifest::new("simulate", cfg);
    manifest.checks = Some(checks);
    manifest.forced = args.common.force;
    manifest.arguments.insert("path_id".into(), json!(out.state.path_id));
    if let Some(p) = &resume {
        manifest.arguments.insert("resume".into(), json!(p));
    }
    if let Some(traj) = &out.trajectory {
        output::write_trajectory_csv(traj, BufWriter::new(File::create(dir.join("trajectory.csv"))?))?;
        manifest.outputs.insert("trajectory".into(), "trajectory.csv".into());
    }
    output::write_history_csv(&out.state.history, BufWriter::new(File::create(dir.join("history.csv"))?))?;
    output::write_xy_csv("time", "mass", &mass(&out.state), BufWriter::new(File::create(dir.join("mass.csv"))?))?;
    write_json(&dir.join("state.json"), &out.state)?;
    manifest.outputs.insert("history".into(), "history.csv".into());
    manifest.outputs.insert("mass".into(), "mass.csv".into());
    manifest.outputs.insert("state".into(), "state.json".into());
    let max_u0 = sim.initial.iter().flatten().fold(0f64, |m, v| m.max(*v));
    let nonneg = nonnegativity_report(&out.state, 1e-3 * max_u0);
    manifest.results.insert("stop".into(), json!(out.state.stop));
    manifest.results.insert("nonnegativity".into(), json!(nonneg));
    manifest.results.insert("running_sup".into(), json!(out.state.running_sup));
    println!(
        "t = {}  sup|u| = {:.6}  min u = {:.6}  tau_n = {}",
        out.state.time,
        out.state.running_sup,
        out.state.running_min,
        out.state.tau().map_or("not reached".to_string(), |t| t.to_string())
    );
    finish_manifest(dir, manifest, started)
}

fn ensemble_options(paths: usize, threads: Option<usize>, budget: Option<f64>) -> Result<EnsembleOptions, Failure> {
    if paths == 0 {
        return Err(Failure::Usage("--paths must be positive".into()));
    }
    if threads == Some(0) {
        return Err(Failure::Usage("--threads must be positive".into()));
    }
    Ok(EnsembleOptions {
        paths,
        first_path: 0,
        threads,
        budget: budget.map(Duration::from_secs_f64),
    })
}

fn cmd_ensemble(args: EnsembleArgs, command: &str) -> Outcome {
    let started = Instant::now();
    let (cfg, recorded) = load_config(&args.common, command)?;
    let raw_levels = if args.levels.is_empty() { recorded.get("levels").unwrap_or_default() } else { args.levels.clone() };
    if raw_levels.is_empty() {
        return Err(Failure::Usage("--levels needs at least one truncation level".into()));
    }
    let levels = raw_levels.iter().map(|&n| TruncationLevel::new(n)).collect::<Result<Vec<_>, _>>()?;
    let paths = args.paths.or_else(|| recorded.get("paths")).unwrap_or(100);
    let p = args.p.or_else(|| recorded.get("p")).unwrap_or(cfg.moment_p);
    if !(p >= 1.0) {
        return Err(Failure::Usage(format!("-p must be at least 1, got {p}")));
    }
    let (prep, checks) = prepare(&args.common, cfg.clone())?;
    let opts = ensemble_options(paths, args.threads, args.budget_seconds)?;
    let run = coupled_summaries(&prep.simulation, &levels, &opts)?;
    let mut table =
        MomentTable::from_summaries(&levels, &run.results, p, prep.simulation.horizon, prep.simulation.seed, run.partial);
    let eta = checks.kernel.eta_declared.max(checks.kernel.eta_hat);
    table.exponent = Some(ExponentRecord::new(p, eta, prep.simulation.basis.domain().dim()));

    let dir = &args.common.out;
    fs::create_dir_all(dir)?;
    let mut manifest = RunManifest::new(command, cfg);
    manifest.checks = Some(checks);
    manifest.forced = args.common.force;
    manifest.arguments.insert("levels".into(), json!(raw_levels));
    manifest.arguments.insert("paths".into(), json!(paths));
    manifest.arguments.insert("p".into(), json!(p));
    if let Some(b) = args.budget_seconds {
        manifest.arguments.insert("budget_seconds".into(), json!(b));
    }
    output::write_moment_csv(&table, BufWriter::new(File::create(dir.join(format!("{command}.csv")))?))?;
    write_json(&dir.join(format!("{command}.json")), &table)?;
    manifest.outputs.insert(command.into(), format!("{command}.csv"));
    manifest.outputs.insert(format!("{command}_json"), format!("{command}.json"));
    manifest.results.insert("flatness".into(), json!(table.flatness));
    manifest.results.insert("markov_ok".into(), json!(table.markov_ok()));
    manifest.results.insert("partial".into(), json!(table.partial));

    println!("{:>8} {:>6} {:>14} {:>12} {:>10} {:>10} {:>14}", "n", "paths", "E sup^p", "+-", "P(tau<=T)", "+-", "E sup^p / n^p");
    for r in &table.rows {
        println!(
            "{:>8} {:>6} {:>14.6e} {:>12.4e} {:>10.4} {:>10.4} {:>14.6e}{}",
            r.n,
            r.paths,
            r.moment,
            r.half_width,
            r.blowup,
            r.blowup_half_width,
            r.markov_bound,
            if r.markov_ok { "" } else { "  markov comparison violated" }
        );
    }
    println!("flatness {:.4} (pooled half-widths){}", table.flatness, if table.partial { "  PARTIAL" } else { "" });
    finish_manifest(dir, manifest, started)
}

fn cmd_regularity(args: RegularityArgs) -> Outcome {
    let started = Instant::now();
    let (cfg, recorded) = load_config(&args.common, "regularity")?;
    let p = args.p.or_else(|| recorded.get("p")).unwrap_or(cfg.moment_p);
    let paths = args.paths.or_else(|| recorded.get("paths")).unwrap_or(50);
    let species = args.species.or_else(|| recorded.get("species")).unwrap_or(0);
    let (prep, checks) = prepare(&args.common, cfg.clone())?;
    let sim = &prep.simulation;
    if species >= sim.system.species() {
        return Err(Failure::Usage(format!("species index {species} out of range")));
    }
    let opts = ensemble_options(paths, args.threads, None)?;
    let holder = holder_ensemble(sim, &opts, species)?;
    let d = sim.basis.domain().dim();
    let record = ExponentRecord::new(p, checks.kernel.eta_hat, d);
    let dmin = sim.system.diffusion().iter().cloned().fold(f64::INFINITY, f64::min);
    let heat = verify_kernel_singularity(&sim.basis, dmin, &kernel_check_times(&sim.basis, dmin))?;

    let dir = &args.common.out;
    fs::create_dir_all(dir)?;
    let summary = json!({
        "eta_hat": checks.kernel.eta_hat,
        "eta_declared": checks.kernel.eta_declared,
        "kernel_times": checks.kernel.times,
        "kernel_convolution": checks.kernel.convolution,
        "kernel_residuals": checks.kernel.residuals,
        "holder": holder,
        "exponent": record,
        "heat_kernel_slope": heat.slope,
    });
    write_json(&dir.join("regularity.json"), &summary)?;
    let log_points: Vec<(f64, f64)> = heat.times.iter().zip(&heat.values).map(|(t, g)| (t.ln(), g.ln())).collect();
    output::write_xy_csv("log_t", "log_sup_G", &log_points, BufWriter::new(File::create(dir.join("heat_kernel.csv"))?))?;
    let mut manifest = RunManifest::new("regularity", cfg);
    manifest.checks = Some(checks.clone());
    manifest.forced = args.common.force;
    manifest.arguments.insert("paths".into(), json!(paths));
    manifest.arguments.insert("p".into(), json!(p));
    manifest.arguments.insert("species".into(), json!(species));
    manifest.outputs.insert("regularity".into(), "regularity.json".into());
    manifest.outputs.insert("heat_kernel".into(), "heat_kernel.csv".into());
    manifest.results = BTreeMap::from([
        ("eta_hat".to_string(), json!(checks.kernel.eta_hat)),
        ("theta_z".to_string(), json!(holder.mean_theta_z)),
        ("theta_u".to_string(), json!(holder.mean_theta_u)),
        ("a".to_string(), json!(record.a)),
    ]);
    println!("eta_hat   {:.4} (declared {:.4})", checks.kernel.eta_hat, checks.kernel.eta_declared);
    println!("theta_Z   {:.4}", holder.mean_theta_z);
    println!("theta_u   {:.4}", holder.mean_theta_u);
    if holder.damping > 1.0 {
        eprintln!(
            "warning: d alpha_max dt = {:.3} > 1; fine modes are under-noised and theta is biased upward (reduce dt or modes)",
            holder.damping
        );
    }
    println!(
        "a         {:.4} (p = {}, d = {}){}",
        record.a,
        p,
        d,
        if record.useful { "" } else { "  outside the useful regime a > -1" }
    );
    finish_manifest(dir, manifest, started)
}
