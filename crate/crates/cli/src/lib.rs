//! Command-line runner: reads a preset or a JSON model description, runs one
//! analysis command and writes a versioned JSON report, CSV tables and a
//! plain-text summary.

pub mod config;
pub mod error;
pub mod expr;
pub mod output;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use ss_yield_core::conditions::{self, Verdict};
use ss_yield_core::diffusion::{build_scale_speed, classify_boundary, Endpoint};
use ss_yield_core::functionals::evaluate_policy;
use ss_yield_core::optimizer::{self, OptimizationResult, OptimizerOptions, OptimizerWarning, SearchBox};
use ss_yield_core::problem::ProblemSpec;
use ss_yield_core::simulator::{self, SimulationConfig};

pub use config::{CommandOptions, ConfigDoc, Format, ModelSource, OutputSection};
pub use error::CliError;
use output::{fmt9, object, to_json};

pub const DEFAULT_SEED: u64 = 20_240_901;
pub const DEFAULT_OUT: &str = "ss-yield-out";
pub const THREADS_ENV: &str = "SS_YIELD_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Subcommand)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Feller classification of both endpoints.
    Classify,
    /// Optimize, then check every standing condition.
    Verify,
    /// Long-run cost and renewal statistics of one policy.
    Evaluate,
    /// Minimize the long-run average cost.
    Optimize,
    /// Cost on a rectangular (y, z) lattice.
    Scan,
    /// Monte Carlo simulation of one policy.
    Simulate,
    /// Simulated against analytic renewal quantities.
    Compare,
    /// Classification, optimum, conditions and asymptotics together.
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::Verify => "verify",
            Command::Evaluate => "evaluate",
            Command::Optimize => "optimize",
            Command::Scan => "scan",
            Command::Simulate => "simulate",
            Command::Compare => "compare",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ss-yield", version, about = "Optimal (s,S) policies for diffusion inventories with random yield")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Built-in model.
    #[arg(long, global = true, value_name = "NAME")]
    pub preset: Option<String>,
    /// Override a preset parameter or inline-model constant.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub y: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub z: Option<f64>,
    /// Lattice points per axis for `scan`.
    #[arg(long, global = true)]
    pub resolution: Option<usize>,
    /// Scan the non-deficient cost F0 instead of H0.
    #[arg(long, global = true)]
    pub f0: bool,
    #[arg(long, global = true, value_name = "LO,HI", value_delimiter = ',', allow_hyphen_values = true)]
    pub y_range: Option<Vec<f64>>,
    #[arg(long, global = true, value_name = "LO,HI", value_delimiter = ',', allow_hyphen_values = true)]
    pub z_range: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub coarse: Option<usize>,
    #[arg(long, global = true)]
    pub starts: Option<usize>,
    /// Also run a brute-force scan of this resolution next to the optimizer.
    #[arg(long, global = true)]
    pub oracle_resolution: Option<usize>,
    #[arg(long, global = true)]
    pub replications: Option<usize>,
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    #[arg(long, global = true)]
    pub time_step: Option<f64>,
    #[arg(long, global = true)]
    pub burn_in: Option<f64>,
    #[arg(long, global = true, value_parser = parse_trigger)]
    pub trigger: Option<simulator::TriggerMode>,
}

fn parse_trigger(s: &str) -> Result<simulator::TriggerMode, String> {
    serde_json::from_value(Value::String(s.into()))
        .map_err(|_| format!("unknown trigger '{s}' (grid_level or continuous_crossing)"))
}

impl Cli {
    fn flag_options(&self) -> Result<CommandOptions, CliError> {
        let pair = |key: &str, v: &Option<Vec<f64>>| match v.as_deref() {
            None => Ok(None),
            Some(&[lo, hi]) => Ok(Some([lo, hi])),
            Some(_) => Err(CliError::Config(format!("--{key}: expected LO,HI"))),
        };
        Ok(CommandOptions {
            y: self.y,
            z: self.z,
            resolution: self.resolution,
            f0: self.f0.then_some(true),
            y_range: pair("y-range", &self.y_range)?,
            z_range: pair("z-range", &self.z_range)?,
            coarse: self.coarse,
            starts: self.starts,
            oracle_resolution: self.oracle_resolution,
            replications: self.replications,
            horizon: self.horizon,
            time_step: self.time_step,
            burn_in: self.burn_in,
            trigger: self.trigger,
        })
    }

    fn sets(&self) -> Result<Vec<(String, f64)>, CliError> {
        self.set
            .iter()
            .map(|kv| {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| CliError::Config(format!("--set {kv}: expected KEY=VALUE")))?;
                let v = expr::eval_constant(v, &Default::default())
                    .map_err(|e| CliError::Config(format!("--set {k}: {e}")))?;
                Ok((k.trim().to_string(), v))
            })
            .collect()
    }
}

/// A fully resolved invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub source: ModelSource,
    pub options: CommandOptions,
    pub out_dir: PathBuf,
    pub format: Format,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_cli(cli: &Cli) -> Result<Self, CliError> {
        let doc = match &cli.config {
            Some(p) => ConfigDoc::load(p)?,
            None => ConfigDoc::default(),
        };
        let source = ModelSource::resolve(&doc, cli.preset.as_deref(), &cli.sets()?)?;
        let mut options = doc.command.clone().unwrap_or_default();
        options.merge(&cli.flag_options()?);
        let out = doc.output.clone().unwrap_or_default();
        Ok(RunConfig {
            command: cli.command,
            source,
            options,
            out_dir: cli
                .out
                .clone()
                .or(out.dir.map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
            format: cli.format.or(out.format).unwrap_or(Format::Both),
            seed: cli.seed.or(doc.seed).unwrap_or(DEFAULT_SEED),
        })
    }

    /// A config document that reproduces this run.
    pub fn to_doc(&self) -> ConfigDoc {
        let mut doc = self.source.to_doc();
        doc.command = Some(self.options.clone());
        doc.seed = Some(self.seed);
        doc.output = Some(OutputSection {
            dir: Some(self.out_dir.display().to_string()),
            format: Some(self.format),
        });
        doc
    }
}

/// What a finished command produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: i32,
    pub report: Value,
    pub summary: String,
    pub files: Vec<PathBuf>,
}

struct Table {
    name: &'static str,
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

#[derive(Default)]
struct Computed {
    result: Value,
    summary: String,
    tables: Vec<Table>,
    warnings: Vec<String>,
    condition_failure: Option<String>,
}

fn header(cfg: &RunConfig, label: &str) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("schema".into(), json!(output::SCHEMA));
    m.insert("schema_version".into(), json!(output::SCHEMA_VERSION));
    m.insert("tool_version".into(), json!(env!("CARGO_PKG_VERSION")));
    m.insert("command".into(), json!(cfg.command.name()));
    m.insert("seed".into(), json!(cfg.seed));
    m.insert("model".into(), json!({"label": label, "params": to_json(&cfg.source.params())}));
    m.insert("config".into(), cfg.to_doc().to_json());
    m
}

/// Runs the command and writes its artifacts.
pub fn execute(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spec = cfg.source.build()?;
    let c = compute(cfg, &spec)?;
    let status = if c.condition_failure.is_some() {
        "condition_failure"
    } else if c.warnings.is_empty() {
        "ok"
    } else {
        "warning"
    };
    let mut report = header(cfg, spec.label());
    report.insert("status".into(), json!(status));
    report.insert("warnings".into(), json!(c.warnings));
    report.insert("result".into(), c.result);
    let report = Value::Object(report);

    let mut summary = format!("ss-yield {} [{}] seed {}\n", cfg.command.name(), spec.label(), cfg.seed);
    summary.push_str(&c.summary);
    for w in &c.warnings {
        let _ = writeln!(summary, "warning: {w}");
    }
    if let Some(f) = &c.condition_failure {
        let _ = writeln!(summary, "condition failure: {f}");
    }

    let name = cfg.command.name();
    let dir = &cfg.out_dir;
    let mut files = Vec::new();
    if cfg.format.json() {
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        files.push(output::write_atomic(dir, &format!("{name}.json"), text.as_bytes())?);
    }
    if cfg.format.csv() {
        let rows = output::flatten(&report["result"]).into_iter().map(|(k, v)| vec![k, v]);
        files.push(output::write_atomic(dir, &format!("{name}.csv"), &output::csv_bytes(&["key", "value"], rows))?);
    }
    for t in c.tables {
        let bytes = output::csv_bytes(&t.header, t.rows);
        files.push(output::write_atomic(dir, &format!("{}.csv", t.name), &bytes)?);
    }
    files.push(output::write_atomic(dir, &format!("{name}.txt"), summary.as_bytes())?);
    Ok(Outcome {
        exit_code: if c.condition_failure.is_some() { 2 } else { 0 },
        report,
        summary,
        files,
    })
}

/// Writes an error report next to where the normal report would go.
fn write_error_report(cfg: &RunConfig, err: &CliError) {
    let label = match &cfg.source {
        ModelSource::Preset { id, .. } => id.name().to_string(),
        ModelSource::Inline { model, .. } => model.label.clone().unwrap_or_else(|| "inline".into()),
    };
    let mut report = header(cfg, &label);
    report.insert("status".into(), json!("error"));
    report.insert(
        "error".into(),
        json!({"kind": err.kind(), "exit_code": err.exit_code(), "message": err.to_string()}),
    );
    if cfg.format.json() {
        let text = serde_json::to_string_pretty(&Value::Object(report)).expect("report serializes");
        let _ = output::write_atomic(&cfg.out_dir, &format!("{}.json", cfg.command.name()), text.as_bytes());
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV}: expected a positive integer, got '{v}'")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    let cfg = match RunConfig::from_cli(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    match execute(&cfg) {
        Ok(out) => {
            print!("{}", out.summary);
            out.exit_code
        }
        Err(e) => {
            write_error_report(&cfg, &e);
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn compute(cfg: &RunConfig, spec: &ProblemSpec) -> Result<Computed, CliError> {
    match cfg.command {
        Command::Classify => classify(spec),
        Command::Evaluate => evaluate(cfg, spec),
        Command::Optimize => optimize(cfg, spec),
        Command::Scan => scan(cfg, spec),
        Command::Verify => verify(cfg, spec),
        Command::Simulate => simulate(cfg, spec, false),
        Command::Compare => simulate(cfg, spec, true),
        Command::Report => report(cfg, spec),
    }
}

fn core<T>(r: ss_yield_core::Result<T>) -> Result<T, CliError> {
    r.map_err(CliError::from_core)
}

fn search_box(o: &CommandOptions) -> Result<Option<SearchBox>, CliError> {
    match (o.y_range, o.z_range) {
        (None, None) => Ok(None),
        (Some(y), Some(z)) => SearchBox::new((y[0], y[1]), (z[0], z[1]))
            .map(Some)
            .map_err(|e| CliError::Config(format!("command.y_range: {e}"))),
        (None, Some(_)) => Err(CliError::Config("command.y_range: needed together with z_range".into())),
        (Some(_), None) => Err(CliError::Config("command.z_range: needed together with y_range".into())),
    }
}

fn optimizer_options(o: &CommandOptions) -> Result<OptimizerOptions, CliError> {
    let d = OptimizerOptions::default();
    Ok(OptimizerOptions {
        coarse: o.coarse.unwrap_or(d.coarse),
        starts: o.starts.unwrap_or(d.starts),
        search_box: search_box(o)?,
        oracle_resolution: o.oracle_resolution,
        ..d
    })
}

/// `(y, z)` from the options; both or neither must be given.
fn policy(o: &CommandOptions) -> Result<Option<(f64, f64)>, CliError> {
    match (o.y, o.z) {
        (Some(y), Some(z)) => {
            if y >= z || y.is_nan() || z.is_nan() {
                return Err(CliError::Config(format!(
                    "command.y: ({}, {}) is a diagonal or inverted policy; y < z is required",
                    fmt9(y),
                    fmt9(z)
                )));
            }
            Ok(Some((y, z)))
        }
        (None, None) => Ok(None),
        (None, Some(_)) => Err(CliError::Config("command.y: --z was given without --y".into())),
        (Some(_), None) => Err(CliError::Config("command.z: --y was given without --z".into())),
    }
}

fn warning_text(w: &OptimizerWarning) -> String {
    match w {
        OptimizerWarning::BoxAtBoundary { edge, y, z } => {
            format!("optimum ({}, {}) sits on the {edge} edge of the search box", fmt9(*y), fmt9(*z))
        }
        OptimizerWarning::NotConverged { y, z } => {
            format!("optimizer did not converge; best point ({}, {})", fmt9(*y), fmt9(*z))
        }
    }
}

fn run_optimizer(cfg: &RunConfig, spec: &ProblemSpec, c: &mut Computed) -> Result<OptimizationResult, CliError> {
    let opt = core(optimizer::minimize_h0(spec, &optimizer_options(&cfg.options)?))?;
    c.warnings.extend(opt.warnings.iter().map(warning_text));
    Ok(opt)
}

fn optimum_summary(spec: &ProblemSpec, opt: &OptimizationResult, s: &mut String) -> Result<Value, CliError> {
    let ev = core(evaluate_policy(spec, opt.y_star, opt.z_star))?;
    let _ = writeln!(s, "y* = {}", fmt9(opt.y_star));
    let _ = writeln!(s, "z* = {}", fmt9(opt.z_star));
    let _ = writeln!(s, "H0* = {}", fmt9(opt.h0_star));
    let _ = writeln!(s, "expected cycle length = {}", fmt9(ev.hat_bzeta));
    let _ = writeln!(s, "order frequency = {}", fmt9(ev.kappa_hat));
    let _ = writeln!(s, "mean supply = {}", fmt9(ev.mean_supply));
    if let Some(q) = &opt.qvi {
        let _ = writeln!(
            s,
            "QVI: interior residual {}, min (BU0)^+c1^ {}, value at optimum {}",
            fmt9(q.interior_residual_max),
            fmt9(q.min_hat_bu0_plus_c1),
            fmt9(q.value_at_optimum)
        );
    }
    if let Some((y, z)) = opt.grid_argmin {
        let _ = writeln!(s, "oracle grid argmin = ({}, {})", fmt9(y), fmt9(z));
    }
    Ok(json!({
        "optimum": to_json(opt),
        "evaluation": to_json(&ev),
        "cycle_length": output::round9(ev.hat_bzeta),
    }))
}

fn classify(spec: &ProblemSpec) -> Result<Computed, CliError> {
    let mut c = Computed::default();
    let model = spec.diffusion();
    let (a, b) = model.interval();
    let mdg = spec.yields().check_mdg();
    let declared = json!({"left": model.left_behavior(), "right": model.right_behavior()});
    let _ = writeln!(c.summary, "interval = ({}, {})", fmt9(a), fmt9(b));
    let endpoints = if model.is_deterministic() {
        c.warnings
            .push("deterministic model: the Feller classification needs a positive dispersion".into());
        Value::Null
    } else {
        let ss = core(build_scale_speed(model))?;
        let mut out = Vec::new();
        for e in [Endpoint::Left, Endpoint::Right] {
            let cl = core(classify_boundary(model, &ss, e))?;
            let _ = writeln!(
                c.summary,
                "{} endpoint: {}{}",
                e.name(),
                cl.feller_class,
                if cl.attracting { ", attracting" } else { "" }
            );
            out.push(to_json(&cl));
        }
        Value::Array(out)
    };
    let _ = writeln!(c.summary, "MDG: {}", if mdg.pass { "pass" } else { "fail" });
    c.result = object([
        ("interval", json!([output::round9(a), output::round9(b)])),
        ("declared", declared),
        ("endpoints", endpoints),
        ("mdg", to_json(&mdg)),
    ]);
    Ok(c)
}

fn evaluate(cfg: &RunConfig, spec: &ProblemSpec) -> Result<Computed, CliError> {
    let (y, z) = policy(&cfg.options)?
        .ok_or_else(|| CliError::Config("command.y: evaluate needs --y and --z".into()))?;
    let ev = core(evaluate_policy(spec, y, z))?;
    let mut c = Computed::default();
    let _ = writeln!(c.summary, "H0({}, {}) = {}", fmt9(y), fmt9(z), fmt9(ev.h0));
    let _ = writeln!(c.summary, "F0({}, {}) = {}", fmt9(y), fmt9(z), fmt9(ev.f0_at_yz));
    let _ = writeln!(c.summary, "expected cycle length = {}", fmt9(ev.hat_bzeta));
    let _ = writeln!(c.summary, "order frequency = {}", fmt9(ev.kappa_hat));
    let _ = writeln!(c.summary, "mean supply = {}", fmt9(ev.mean_supply));
    c.result = to_json(&ev);
    Ok(c)
}

fn optimize(cfg: &RunConfig, spec: &ProblemSpec) -> Result<Computed, CliError> {
    let mut c = Computed::default();
    let opt = run_optimizer(cfg, spec, &mut c)?;
    c.result = optimum_summary(spec, &opt, &mut c.summary)?;
    Ok(c)
}

fn scan(cfg: &RunConfig, spec: &ProblemSpec) -> Result<Computed, CliError> {
    let o = &cfg.options;
    let n = o.resolution.unwrap_or(100);
    if n < 2 {
        return Err(CliError::Config("command.resolution: at least 2 points per axis".into()));
    }
    let bx = match search_box(o)? {
        Some(b) => b,
        None => core(optimizer::auto_box(spec))?,
    };
    let f0 = o.f0.unwrap_or(false);
    let grid = if f0 {
        core(optimizer::grid_scan_f0(spec, n, bx))?
    } else {
        core(optimizer::grid_scan(spec, n, bx))?
    };
    let quantity = if f0 { "F0" } else { "H0" };
    let mut c = Computed::default();
    let filled = grid.values.iter().filter(|v| v.is_some()).count();
    let _ = writeln!(
        c.summary,
        "{n}x{n} lattice on y in [{}, {}], z in [{}, {}]: {filled} admissible cells",
        fmt9(bx.y_lo),
        fmt9(bx.y_hi),
        fmt9(bx.z_lo),
        fmt9(bx.z_hi)
    );
    if let Some(m) = grid.argmin {
        let _ = writeln!(c.summary, "grid min {quantity} = {} at ({}, {})", fmt9(m.h0), fmt9(m.y), fmt9(m.z));
    }
    c.result = json!({
        "quantity": quantity,
        "resolution": n,
        "search_box": to_json(&bx),
        "cell": to_json(&grid.cell()),
        "admissible_cells": filled,
        "argmin": to_json(&grid.argmin),
        "csv": "scan.csv",
    });
    c.tables.push(Table {
        name: "scan",
        header: vec!["y", "z", quantity],
        rows: grid
            .rows()
            .map(|(y, z, v)| vec![fmt9(y), fmt9(z), v.map(fmt9).unwrap_or_default()])
            .collect(),
    });
    Ok(c)
}

fn verify_into(spec: &ProblemSpec, opt: &OptimizationResult, c: &mut Computed) -> Result<Value, CliError> {
    let reports = core(conditions::verify_all(spec, Some(opt)))?;
    let mut failed = Vec::new();
    for r in &reports {
        let id = serde_json::to_value(r.condition_id).expect("id serializes");
        let id = id.as_str().unwrap_or_default().to_string();
        let verdict = match r.verdict {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        };
        let _ = writeln!(c.summary, "{id}: {verdict}");
        match r.verdict {
            Verdict::Fail => failed.push(id),
            Verdict::Inconclusive => c.warnings.push(format!("{id} is inconclusive: {}", r.notes)),
            Verdict::Pass => {}
        }
    }
    if !failed.is_empty() {
        c.condition_failure = Some(format!("failed conditions: {}", failed.join(", ")));
    }
    Ok(to_json(&reports))
}

fn verify(cfg: &RunConfig, spec: &ProblemSpec) -> Result<Computed, CliError> {
    let mut c = Computed::default();
    let opt = run_optimizer(cfg, spec, &mut c)?;
    let _ = writeln!(
        c.summary,
        "optimum ({}, {}), H0* = {}",
        fmt9(opt.y_star),
        fmt9(opt.z_star),
        fmt9(opt.h0_star)
    );
    let conditions = verify_into(spec, &opt, &mut c)?;
    c.result = json!({"optimum": to_json(&opt), "conditions": conditions});
    Ok(c)
}

fn simulate(cfg: &RunConfig, spec: &ProblemSpec, compare: bool) -> Result<Computed, CliError> {
    let mut c = Computed::default();
    let o = &cfg.options;
    let (y, z) = match policy(o)? {
        Some(p) => p,
        None => {
            let opt = run_optimizer(cfg, spec, &mut c)?;
            let _ = writeln!(c.summary, "policy: optimum ({}, {})", fmt9(opt.y_star), fmt9(opt.z_star));
            (opt.y_star, opt.z_star)
        }
    };
    let mut sc = SimulationConfig::new(y, z);
    sc.seed = cfg.seed;
    sc.horizon = o.horizon.unwrap_or(sc.horizon);
    sc.time_step = o.time_step.unwrap_or(sc.time_step);
    sc.replications = o.replications.unwrap_or(sc.replications);
    sc.trigger = o.trigger.unwrap_or(sc.trigger);
    sc.burn_in = o.burn_in.or(sc.burn_in);
    let _ = writeln!(
        c.summary,
        "{} replications, horizon {}, step {}",
        sc.replications,
        fmt9(sc.horizon),
        fmt9(sc.time_step)
    );
    let sim = if compare {
        let rep = simulator::compare_sim_vs_analytic(spec, &sc).map_err(CliError::from_sim)?;
        for r in &rep.rows {
            let _ = writeln!(
                c.summary,
                "{}: analytic {}, simulated {} (se {}, z {})",
                r.quantity,
                fmt9(r.analytic),
                fmt9(r.simulated),
                fmt9(r.se),
                fmt9(r.z_score)
            );
            if r.flagged {
                c.warnings.push(format!(
                    "{} differs from its analytic value by {} standard errors",
                    r.quantity,
                    fmt9(r.z_score)
                ));
            }
        }
        c.tables.push(Table {
            name: "compare",
            header: vec!["quantity", "analytic", "simulated", "se", "z_score", "flagged"],
            rows: rep
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.quantity.clone(),
                        fmt9(r.analytic),
                        fmt9(r.simulated),
                        fmt9(r.se),
                        fmt9(r.z_score),
                        r.flagged.to_string(),
                    ]
                })
                .collect(),
        });
        c.result = json!({"y": y, "z": z, "rows": to_json(&rep.rows), "any_flagged": rep.any_flagged});
        rep.simulation
    } else {
        let sim = simulator::simulate(spec, &sc).map_err(CliError::from_sim)?;
        for (name, e) in [
            ("J", sim.j_estimate),
            ("cycle_length", sim.mean_cycle_length),
            ("order_frequency", sim.order_frequency),
            ("mean_supply", sim.mean_supply),
        ] {
            let _ = writeln!(c.summary, "{name}: {} (se {})", fmt9(e.mean), fmt9(e.se));
        }
        c.result = json!({"y": y, "z": z});
        sim
    };
    if sim.flagged_replications > 0 {
        c.warnings.push(format!(
            "{} replication(s) needed step halving near a boundary",
            sim.flagged_replications
        ));
    }
    c.result["y"] = json!(output::round9(y));
    c.result["z"] = json!(output::round9(z));
    c.result["simulation"] = to_json(&sim);
    c.result["simulation_config"] = to_json(&sc);
    Ok(c)
}

fn report(cfg: &RunConfig, spec: &ProblemSpec) -> Result<Computed, CliError> {
    let mut c = classify(spec)?;
    let classification = std::mem::take(&mut c.result);
    let opt = run_optimizer(cfg, spec, &mut c)?;
    let optimum = optimum_summary(spec, &opt, &mut c.summary)?;
    let conditions = verify_into(spec, &opt, &mut c)?;
    let asymptotics = match conditions::asymptotics_report(spec) {
        Ok(a) => {
            for s in a.left.iter().chain(&a.right) {
                let _ = writeln!(
                    c.summary,
                    "asymptotic ratio ({}): target {}, relative error {}",
                    s.kind,
                    fmt9(s.target),
                    fmt9(s.relative_error_at_finest)
                );
            }
            to_json(&a)
        }
        Err(e) => {
            c.warnings.push(format!("asymptotics: {e}"));
            Value::Null
        }
    };
    c.result = json!({
        "classification": classification,
        "optimization": optimum,
        "conditions": conditions,
        "asymptotics": asymptotics,
    });
    Ok(c)
}
