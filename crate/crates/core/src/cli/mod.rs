//! Command-line entry point: parses a JSON config, runs one experiment and
//! writes its artifacts.
//!
//! Exit status: 0 when every check passes, 1 when a check fails, 2 on a
//! configuration error (including unreadable config or unwritable output),
//! 3 on a numerical failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::experiments::{
    self, convergence_report, default_mu_grid, delay_comparison, evaluate_trace, plots, smoothing_experiment,
    synthetic_exponential, Check, DelayInequalityCase, DelayOutcome, ExperimentReport, SmoothingConfig,
};
use crate::flow::{self, run_flow, FlowConfig, FlowTrace, InitialData, Profile};
use crate::functionals::{monitor_csv, monitor_records};
use crate::geometry;
use crate::spectral::{self, SpectrumResult};

/// Overrides `--out` when set to a non-empty path.
pub const OUTPUT_ENV: &str = "KRFLOW_OUTPUT_DIR";
const DEFAULT_OUTPUT: &str = "krflow-out";
/// Significant digits kept in JSON output.
const JSON_DIGITS: usize = 12;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "krflow", version, about = "Kähler–Ricci flow on symmetric metrics on CP¹")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    /// Output directory (the KRFLOW_OUTPUT_DIR environment variable takes precedence).
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,
    /// Repeat for more detail on stdout.
    #[arg(long, short, action = ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Seed for randomized initial profiles; overrides the seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    pub plots: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the flow and write the trace.
    Run { config: PathBuf },
    /// Eigenvalues of both operators at one metric.
    Spectrum { config: PathBuf },
    /// Short-time smoothing scan over ε.
    Smoothing { config: PathBuf },
    /// Delay-inequality certificate.
    Certify { config: PathBuf },
    /// Full convergence report.
    Report { config: PathBuf },
    /// Several convergence reports in parallel.
    Sweep { config: PathBuf },
}

fn default_spectrum_nodes() -> usize {
    64
}
fn default_kmax() -> usize {
    spectral::DEFAULT_KMAX
}
fn default_grid_size() -> usize {
    200
}
fn reference_initial() -> InitialData {
    InitialData::reference()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    #[serde(default = "default_spectrum_nodes")]
    pub node_count: usize,
    #[serde(default = "reference_initial")]
    pub initial: InitialData,
    #[serde(default = "default_kmax")]
    pub kmax: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticShape {
    /// `Y = e^{−t}`.
    Exponential,
    /// `Y = 1`.
    Constant,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertifySource {
    Synthetic {
        shape: SyntheticShape,
        end: f64,
        cadence: f64,
        lambda: f64,
        delays: Vec<u32>,
        weights: Vec<f64>,
        k0: f64,
    },
    /// Run the flow, take `λ` as the infimum of the sampled vector-field
    /// eigenvalue after the transient, and certify the measured `Y`.
    Run { flow: FlowConfig },
    Case(DelayInequalityCase),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyConfig {
    pub source: CertifySource,
    #[serde(default = "default_grid_size")]
    pub mu_grid_size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepEntry {
    /// Path to a flow config, relative to the sweep file.
    Path(PathBuf),
    Inline(Box<FlowConfig>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub runs: Vec<SweepEntry>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("krflow: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Io(_) | Error::Json(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

pub fn output_dir(flag: Option<&Path>) -> PathBuf {
    match std::env::var_os(OUTPUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => flag.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT)),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("cli", format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::config("cli", format!("{}: {e}", path.display())))
}

/// Rounds every float to `JSON_DIGITS` significant digits so reports are
/// stable across platforms.
pub fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                let r: f64 = format!("{:.*e}", JSON_DIGITS - 1, x).parse().unwrap_or(x);
                if let Some(m) = serde_json::Number::from_f64(r) {
                    *n = m;
                }
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_floats),
        Value::Object(o) => o.values_mut().for_each(round_floats),
        _ => {}
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_floats(&mut v);
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn new(dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir)
            .map_err(|e| Error::config("cli", format!("output directory {} not writable: {e}", dir.display())))?;
        Ok(Output { dir })
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, contents)
            .map_err(|e| Error::config("cli", format!("cannot write {}: {e}", path.display())))
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        self.write(name, &to_json(value)?)
    }
}

fn apply_seed(initial: &mut InitialData, seed: Option<u64>) {
    if let (Some(s), Profile::Random { seed, .. }) = (seed, &mut initial.profile) {
        *seed = s;
    }
}

fn verdict(checks: &[Check]) -> i32 {
    if checks.iter().all(|c| c.pass) {
        EXIT_PASS
    } else {
        for c in checks.iter().filter(|c| !c.pass) {
            eprintln!("krflow: check failed in {}/{}: {}", c.module, c.monitor, c.detail);
        }
        EXIT_CHECK_FAILED
    }
}

fn execute(cli: &RunConfig) -> Result<i32> {
    match &cli.command {
        Command::Run { config } => cmd_run(cli, config),
        Command::Spectrum { config } => cmd_spectrum(cli, config),
        Command::Smoothing { config } => cmd_smoothing(cli, config),
        Command::Certify { config } => cmd_certify(cli, config),
        Command::Report { config } => cmd_report(cli, config),
        Command::Sweep { config } => cmd_sweep(cli, config),
    }
}

fn load_flow_config(cli: &RunConfig, path: &Path) -> Result<FlowConfig> {
    let mut cfg: FlowConfig = read_json(path)?;
    apply_seed(&mut cfg.initial, cli.seed);
    cfg.validate()?;
    Ok(cfg)
}

fn write_trace(out: &Output, prefix: &str, trace: &FlowTrace) -> Result<()> {
    out.write(&format!("{prefix}trace.csv"), &trace.to_csv())?;
    out.write(&format!("{prefix}monitors.csv"), &monitor_csv(&monitor_records(trace)))?;
    for (i, s) in trace.snapshots.iter().enumerate() {
        out.json(&format!("{prefix}snapshots/snapshot_{i:03}.json"), s)?;
    }
    Ok(())
}

/// Invariants every run must satisfy regardless of whether it converges.
fn run_invariants(trace: &FlowTrace) -> Vec<Check> {
    const KEEP: [&str; 6] = [
        "y_nonnegative",
        "b_monotone",
        "mabuchi_monotone",
        "norm_chain",
        "average_bound",
        "futaki",
    ];
    let (checks, ..) = evaluate_trace(trace);
    checks
        .into_iter()
        .filter(|c| (c.module == "flow" && c.monitor != "a_priori_bound") || KEEP.contains(&c.monitor.as_str()))
        .collect()
}

#[derive(Serialize)]
struct RunSummary<'a> {
    config: &'a FlowConfig,
    amplitude: f64,
    initial_offset: f64,
    accepted_steps: usize,
    rejected_steps: usize,
    final_record: Option<&'a flow::FlowRecord>,
    checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    failure: Option<String>,
}

fn cmd_run(cli: &RunConfig, path: &Path) -> Result<i32> {
    let cfg = load_flow_config(cli, path)?;
    let out = Output::new(output_dir(cli.out.as_deref()))?;
    let (trace, failure) = match run_flow(&cfg) {
        Ok(t) => (t, None),
        Err(f) if f.error.is_config() => return Err(f.error),
        Err(f) => (*f.trace, Some(f.error)),
    };
    write_trace(&out, "", &trace)?;
    let checks = if trace.records.is_empty() { Vec::new() } else { run_invariants(&trace) };
    let summary = RunSummary {
        config: &cfg,
        amplitude: trace.amplitude,
        initial_offset: trace.initial_offset,
        accepted_steps: trace.accepted_steps,
        rejected_steps: trace.rejected_steps,
        final_record: trace.records.last(),
        failure: failure.as_ref().map(|e| e.to_string()),
        checks: checks.clone(),
    };
    out.json("run.json", &summary)?;
    if let Some(e) = failure {
        eprintln!("krflow: {e}");
        return Ok(exit_code(&e));
    }
    if cli.verbose > 0 {
        if let Some(r) = trace.records.last() {
            println!("t = {}  Y = {:.3e}  |R-1| = {:.3e}  b = {:.3e}", r.t, r.y, r.rn_c0, r.b);
        }
    }
    Ok(verdict(&checks))
}

#[derive(Serialize)]
struct SpectrumOutput {
    config: SpectrumConfig,
    amplitude: f64,
    vector_laplacian: SpectrumResult,
    poincare: SpectrumResult,
    checks: Vec<Check>,
}

fn cmd_spectrum(cli: &RunConfig, path: &Path) -> Result<i32> {
    let mut cfg: SpectrumConfig = read_json(path)?;
    apply_seed(&mut cfg.initial, cli.seed);
    let out = Output::new(output_dir(cli.out.as_deref()))?;
    let grid = geometry::build_grid(cfg.node_count)?;
    let (state, amplitude) = flow::initial_state(&cfg.initial, &grid)?;
    let u = flow::ricci_potential(&state)?;
    let v = spectral::vector_laplacian_spectrum(&state, cfg.kmax)?;
    let p = spectral::poincare_mu(&state, &u, cfg.kmax)?;
    let checks = vec![
        Check {
            module: "spectral".into(),
            monitor: "vector_kernel".into(),
            pass: v.kernel_dimension == 3,
            value: Some(v.kernel_dimension as f64),
            threshold: Some(3.0),
            detail: format!("kernel dimension {}, λ = {:.10}", v.kernel_dimension, v.lambda_min_positive),
        },
        Check {
            module: "spectral".into(),
            monitor: "poincare".into(),
            pass: p.kernel_dimension == 1 && p.lambda_min_positive >= 1.0 - 1e-3,
            value: Some(p.lambda_min_positive),
            threshold: Some(1.0 - 1e-3),
            detail: format!("kernel dimension {}, μ = {:.10}", p.kernel_dimension, p.lambda_min_positive),
        },
    ];
    if cli.verbose > 0 {
        println!("λ = {:.12}  μ = {:.12}", v.lambda_min_positive, p.lambda_min_positive);
    }
    let code = verdict(&checks);
    out.json(
        "spectrum.json",
        &SpectrumOutput {
            config: cfg,
            amplitude,
            vector_laplacian: v,
            poincare: p,
            checks,
        },
    )?;
    Ok(code)
}

fn cmd_smoothing(cli: &RunConfig, path: &Path) -> Result<i32> {
    let cfg: SmoothingConfig = read_json(path)?;
    let out = Output::new(output_dir(cli.out.as_deref()))?;
    let report = smoothing_experiment(&cfg)?;
    out.json("smoothing.json", &report)?;
    let mut text = format!("smoothing: {}  K spread = {:.4}\n", if report.pass { "PASS" } else { "FAIL" }, report.k_spread);
    for c in &report.cases {
        text.push_str(&format!(
            "  eps = {:<8} K = {:.5}  |û| {:.3e}/{:.3e}  |∇û|² {:.3e}/{:.3e}  H {:.3e}  K' {:.3e} / {:.3e}  |Δû| {:.3e}/{:.3e}  {}\n",
            c.epsilon,
            c.k_measured,
            c.hat_u_max,
            c.hat_u_bound,
            c.grad_sq_max,
            c.grad_sq_bound,
            c.h_max,
            c.k_quantity_max,
            c.h_bound,
            c.lap_hat_u,
            c.lap_bound,
            if c.pass { "ok" } else { "FAIL" }
        ));
    }
    out.write("smoothing.txt", &text)?;
    if cli.verbose > 0 {
        print!("{text}");
    }
    if report.pass {
        Ok(EXIT_PASS)
    } else {
        eprintln!("krflow: check failed in experiments/smoothing");
        Ok(EXIT_CHECK_FAILED)
    }
}

#[derive(Serialize)]
struct CertifyOutput<'a> {
    config: &'a CertifyConfig,
    lambda: f64,
    outcome: DelayOutcome,
}

fn cmd_certify(cli: &RunConfig, path: &Path) -> Result<i32> {
    let mut cfg: CertifyConfig = read_json(path)?;
    if let CertifySource::Run { flow } = &mut cfg.source {
        apply_seed(&mut flow.initial, cli.seed);
    }
    let out = Output::new(output_dir(cli.out.as_deref()))?;
    let case = match &cfg.source {
        CertifySource::Synthetic {
            shape,
            end,
            cadence,
            lambda,
            delays,
            weights,
            k0,
        } => {
            if !(*cadence > 0.0 && *end > 0.0) {
                return Err(Error::config("cli", "synthetic end and cadence must be positive"));
            }
            let (times, exp) = synthetic_exponential(*end, *cadence);
            let values = match shape {
                SyntheticShape::Exponential => exp,
                SyntheticShape::Constant => vec![1.0; times.len()],
            };
            DelayInequalityCase {
                times,
                values,
                lambda: *lambda,
                delays: delays.clone(),
                weights: weights.clone(),
                k0: *k0,
            }
        }
        CertifySource::Run { flow } => {
            flow.validate()?;
            let trace = run_flow(flow)?;
            let (_, summary, ..) = evaluate_trace(&trace);
            let lambda = summary
                .lambda_inf
                .ok_or_else(|| Error::config("cli", "the run has no spectral samples after the transient"))?;
            let k0 = flow.transient.max(experiments::report::ITERATION_LAG);
            experiments::measured_delay_case(&trace, lambda, k0)
                .ok_or_else(|| Error::config("cli", "Y reaches the round-off floor before the delay window"))?
        }
        CertifySource::Case(c) => c.clone(),
    };
    let outcome = delay_comparison(&case, &default_mu_grid(case.lambda, cfg.mu_grid_size))?;
    let code = match &outcome {
        DelayOutcome::Certificate { certificate, .. } => {
            if cli.verbose > 0 {
                println!("certificate: Y ≤ {:.6e} e^(-{:.6} t)", certificate.amplitude, certificate.rate);
            }
            EXIT_PASS
        }
        DelayOutcome::Violation(v) => {
            eprintln!(
                "krflow: check failed in experiments/delay_precheck: Ẏ = {:.3e} exceeds {:.3e} at t = {}",
                v.derivative, v.bound, v.t
            );
            EXIT_CHECK_FAILED
        }
        DelayOutcome::NoCertificate { reason } => {
            eprintln!("krflow: check failed in experiments/delay_certificate: {reason}");
            EXIT_CHECK_FAILED
        }
    };
    out.json(
        "certificate.json",
        &CertifyOutput {
            config: &cfg,
            lambda: case.lambda,
            outcome,
        },
    )?;
    Ok(code)
}

fn write_report(cli: &RunConfig, out: &Output, prefix: &str, report: &ExperimentReport) -> Result<()> {
    out.json(&format!("{prefix}report.json"), report)?;
    out.write(&format!("{prefix}summary.txt"), &report.text())?;
    if let Some(trace) = &report.trace {
        write_trace(out, prefix, trace)?;
    }
    if cli.plots {
        for (name, svg) in plots::report_plots(report) {
            out.write(&format!("{prefix}{name}"), &svg)?;
        }
    }
    Ok(())
}

fn report_code(report: &ExperimentReport) -> i32 {
    if report.failure.is_some() {
        EXIT_NUMERICAL
    } else if report.pass {
        EXIT_PASS
    } else {
        EXIT_CHECK_FAILED
    }
}

fn cmd_report(cli: &RunConfig, path: &Path) -> Result<i32> {
    let cfg = load_flow_config(cli, path)?;
    let out = Output::new(output_dir(cli.out.as_deref()))?;
    let report = convergence_report(&cfg)?;
    write_report(cli, &out, "", &report)?;
    if cli.verbose > 0 {
        print!("{}", report.text());
    }
    let code = report_code(&report);
    if code == EXIT_NUMERICAL {
        eprintln!("krflow: {}", report.failure.as_deref().unwrap_or("run failed"));
    } else {
        verdict(&report.checks);
    }
    Ok(code)
}

#[derive(Serialize)]
struct SweepOutput<'a> {
    reports: &'a [ExperimentReport],
    pass: bool,
}

fn cmd_sweep(cli: &RunConfig, path: &Path) -> Result<i32> {
    let cfg: SweepConfig = read_json(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut configs = Vec::new();
    for entry in &cfg.runs {
        let mut c = match entry {
            SweepEntry::Path(p) => read_json::<FlowConfig>(&base.join(p))?,
            SweepEntry::Inline(c) => (**c).clone(),
        };
        apply_seed(&mut c.initial, cli.seed);
        configs.push(c);
    }
    let out = Output::new(output_dir(cli.out.as_deref()))?;
    let reports = experiments::sweep(&configs)?;
    for (i, r) in reports.iter().enumerate() {
        write_report(cli, &out, &format!("run_{i:02}_{}/", r.name), r)?;
        if cli.verbose > 0 {
            print!("{}", r.text());
        }
    }
    let pass = reports.iter().all(|r| r.pass);
    out.json("sweep.json", &SweepOutput { reports: &reports, pass })?;
    let code = reports.iter().map(report_code).max().unwrap_or(EXIT_PASS);
    for r in &reports {
        for c in r.failing() {
            eprintln!("krflow: {}: check failed in {}/{}: {}", r.name, c.module, c.monitor, c.detail);
        }
    }
    Ok(code)
}
