//! The `honeycomb` command line.
//!
//! Exit codes: 0 success, 2 invalid input, 3 I/O failure, 4 resource limit,
//! 1 anything else.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::environment::{parse_table, EnvError, Environment, EnvironmentSpec, Orientation};
use crate::experiments::{diagnostic_csv, run_experiment, ExperimentConfig, ExperimentError};
use crate::lattice_walk::{simulate_walk_with, WalkOptions};
use crate::oracle::{self, OracleError};
use crate::output::{fmt_f64, RunManifest};
use crate::rng::derive_seed;
use crate::skeleton::llt_table_csv;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("{0}")]
    Resource(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Io(_) => 3,
            CliError::Resource(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl From<EnvError> for CliError {
    fn from(e: EnvError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::ResourceLimit { .. } => CliError::Resource(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Oracle(o) => o.into(),
            ExperimentError::ZeroAcceptance(_) => CliError::Other(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Parser, Debug)]
#[command(name = "honeycomb", version, about = "Random walks on oriented honeycomb lattices")]
pub struct Cli {
    /// Worker threads (results do not depend on this)
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write an environment file, optionally with materialized rows
    Env(EnvArgs),
    /// Simulate independent walks and stream per-walk summaries as JSON lines
    Simulate(SimulateArgs),
    /// Exact quantities from the dynamic programs, as CSV
    Exact(ExactArgs),
    /// Run an experiment described by a JSON config file
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug, Serialize)]
#[group(id = "regime", required = true, multiple = false)]
struct RegimeFlags {
    #[arg(long, group = "regime")]
    rademacher: bool,
    #[arg(long, group = "regime")]
    periodic: bool,
    #[arg(long, group = "regime")]
    perturbed: bool,
}

#[derive(Args, Debug, Serialize)]
struct EnvArgs {
    #[command(flatten)]
    regime: RegimeFlags,
    /// Period of the table (default 2, or the length of --f)
    #[arg(long = "Q")]
    q: Option<usize>,
    /// Orientation table, e.g. `+1,-1` (default alternating)
    #[arg(long = "f", allow_hyphen_values = true)]
    f: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    c: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Environment JSON destination (stdout when omitted and nothing is materialized)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Level range `lo:hi` to write as CSV
    #[arg(long, allow_hyphen_values = true)]
    materialize: Option<String>,
    /// Destination of the materialized CSV (stdout when omitted)
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    env: PathBuf,
    /// Steps per walk; accepts forms like `1e6`
    #[arg(long, value_parser = parse_count)]
    steps: u64,
    #[arg(long, value_parser = parse_count)]
    walks: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
enum What {
    Pn,
    Yreturn,
    Wbar,
    Fullwalk,
}

#[derive(Args, Debug, Serialize)]
struct ExactArgs {
    #[arg(long, value_enum)]
    what: What,
    /// One or more horizons, comma separated
    #[arg(long, value_parser = parse_count, value_delimiter = ',', required = true)]
    n: Vec<u64>,
    #[arg(long)]
    env: Option<PathBuf>,
    #[arg(long = "Q", default_value_t = 2)]
    q: usize,
    #[arg(long = "tail-tol", default_value_t = 1e-12)]
    tail_tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// CSV destination (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary JSON destination (stderr when omitted)
    #[arg(long)]
    summary: Option<PathBuf>,
}

/// Integer counts, also written as `1e6` or `1_000`.
pub fn parse_count(s: &str) -> Result<u64, String> {
    let t = s.trim().replace('_', "");
    if let Ok(v) = t.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = t.parse().map_err(|_| format!("not a count: {s:?}"))?;
    if f.is_finite() && f >= 0.0 && f.fract() == 0.0 && f <= 9.007_199_254_740_992e15 {
        Ok(f as u64)
    } else {
        Err(format!("not a non-negative integer: {s:?}"))
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if code == 0 { write!(stdout, "{e}") } else { write!(stderr, "{e}") };
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.workers.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return 1;
        }
    };
    // commands write into buffers so the closure can be sent to the pool
    let (result, out, err) = pool.install(|| {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let r = dispatch(&cli.command, &mut out, &mut err);
        (r, out, err)
    });
    let flushed = stdout.write_all(&out).and_then(|_| stderr.write_all(&err));
    let result = result.and_then(|()| flushed.map_err(|e| CliError::Io(format!("stdout: {e}"))));
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: &Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::Env(a) => cmd_env(a, stdout),
        Command::Simulate(a) => cmd_simulate(a, stdout),
        Command::Exact(a) => cmd_exact(a, stdout),
        Command::Experiment(a) => cmd_experiment(a, stdout, stderr),
    }
}

fn emit(path: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| io_err(p, e)),
        None => stdout.write_all(text.as_bytes()).map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}

fn config_text<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("arguments serialize")
}

fn alternating(q: usize) -> Vec<Orientation> {
    (0..q).map(|i| if i % 2 == 0 { Orientation::Right } else { Orientation::Left }).collect()
}

fn env_spec(a: &EnvArgs) -> Result<EnvironmentSpec, CliError> {
    let table = |a: &EnvArgs| -> Result<(usize, Vec<Orientation>), CliError> {
        let f = match &a.f {
            Some(s) => parse_table(s).map_err(|e| CliError::Invalid(format!("InvalidPeriod: {e}")))?,
            None => alternating(a.q.unwrap_or(2)),
        };
        Ok((a.q.unwrap_or(f.len()), f))
    };
    let spec = if a.regime.rademacher {
        EnvironmentSpec::rademacher(a.seed)
    } else if a.regime.periodic {
        let (q, f) = table(a)?;
        EnvironmentSpec { period: q, ..EnvironmentSpec::periodic(f) }
    } else {
        let (q, f) = table(a)?;
        EnvironmentSpec { period: q, ..EnvironmentSpec::perturbed(a.seed, f, a.c, a.beta) }
    };
    spec.validate()?;
    Ok(spec)
}

fn parse_range(s: &str) -> Result<(i64, i64), CliError> {
    let (lo, hi) =
        s.split_once(':').ok_or_else(|| CliError::Invalid(format!("RangeError: expected lo:hi, got {s:?}")))?;
    let p = |t: &str| t.trim().parse::<i64>().map_err(|_| CliError::Invalid(format!("RangeError: bad level {t:?}")));
    Ok((p(lo)?, p(hi)?))
}

#[derive(Serialize)]
struct EnvFile<'a> {
    manifest: &'a RunManifest,
    environment: &'a EnvironmentSpec,
}

fn cmd_env(a: &EnvArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let spec = env_spec(a)?;
    let env = Environment::new(spec.clone())?;
    let manifest = RunManifest::new("env", &config_text(&spec), spec.seed);
    let json =
        serde_json::to_string_pretty(&EnvFile { manifest: &manifest, environment: &spec }).expect("serializes") + "\n";
    let table = match &a.materialize {
        Some(r) => {
            let (lo, hi) = parse_range(r)?;
            Some(env.materialize(lo, hi)?)
        }
        None => None,
    };
    if a.out.is_some() || table.is_none() {
        emit(a.out.as_deref(), &json, stdout)?;
    }
    if let Some(t) = table {
        let text = manifest.csv_comment() + &t.to_csv();
        emit(a.csv.as_deref(), &text, stdout)?;
    }
    Ok(())
}

/// Reads an environment file written by `env`, or a bare spec.
pub fn load_env(path: &Path) -> Result<EnvironmentSpec, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    let (inner, prefix) = match value.get("environment") {
        Some(v) => (v.clone(), "environment."),
        None => (value, ""),
    };
    let spec: EnvironmentSpec = serde_path_to_error::deserialize(inner)
        .map_err(|e| CliError::Invalid(format!("{}: field {prefix}{}: {}", path.display(), e.path(), e.inner())))?;
    spec.validate()?;
    Ok(spec)
}

#[derive(Serialize)]
struct WalkLine {
    task: u64,
    seed: u64,
    n_steps: u64,
    n_returns: u64,
    first_return: Option<u64>,
    n_vertical: u64,
    final_x: i64,
    final_y: i64,
}

fn cmd_simulate(a: &SimulateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let spec = load_env(&a.env)?;
    let env = Environment::new(spec.clone())?;
    let config = serde_json::json!({ "environment": spec, "steps": a.steps, "walks": a.walks });
    let manifest = RunManifest::new("simulate", &config.to_string(), a.seed);
    let opts = WalkOptions { detail_limit: 0 };
    let lines: Vec<String> = (0..a.walks)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(a.seed, i);
            let t = simulate_walk_with(&env, a.steps, seed, &opts);
            let s = t.summary;
            let line = WalkLine {
                task: i,
                seed,
                n_steps: s.n_steps,
                n_returns: s.n_returns,
                first_return: s.first_return,
                n_vertical: s.n_vertical,
                final_x: t.final_position.x,
                final_y: t.final_position.y,
            };
            serde_json::to_string(&line).expect("serializes")
        })
        .collect();
    let mut text = manifest.json_line();
    text.push('\n');
    for l in lines {
        text.push_str(&l);
        text.push('\n');
    }
    emit(a.out.as_deref(), &text, stdout)
}

fn usize_n(n: u64) -> Result<usize, CliError> {
    usize::try_from(n).map_err(|_| CliError::Invalid(format!("n = {n} is too large")))
}

fn cmd_exact(a: &ExactArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let spec = match &a.env {
        Some(p) => Some(load_env(p)?),
        None => None,
    };
    let config = serde_json::json!({ "args": a, "environment": spec });
    let manifest = RunManifest::new("exact", &config.to_string(), spec.as_ref().map_or(0, |s| s.seed));
    let mut body = String::new();
    let ns: Vec<usize> = a.n.iter().map(|&n| usize_n(n)).collect::<Result<_, _>>()?;
    let need_env = || -> Result<Environment, CliError> {
        let s = spec.clone().ok_or_else(|| CliError::Invalid("--env is required for this quantity".into()))?;
        Ok(Environment::new(s)?)
    };
    match a.what {
        What::Yreturn => {
            if ns.contains(&0) {
                return Err(CliError::Invalid("n must be at least 1".into()));
            }
            body.push_str(&llt_table_csv(&ns));
        }
        What::Pn => {
            let env = need_env()?;
            let n_max = *ns.iter().max().expect("at least one n");
            let series = oracle::joint_pn_series(&env, n_max, a.tail_tol)?;
            body.push_str("n,p,y_return,deficit,env_digest\n");
            for &n in &ns {
                if n == 0 {
                    return Err(CliError::Invalid("n must be at least 1".into()));
                }
                let r = series[n - 1];
                body.push_str(&format!(
                    "{n},{},{},{},{}\n",
                    fmt_f64(r.p),
                    fmt_f64(r.y_return),
                    fmt_f64(r.deficit),
                    env.digest()
                ));
            }
        }
        What::Wbar => {
            body.push_str("n,ybar,nu,ybar_next,nu_next,p_n,p_n1,averaged,stationary,tv_to_pi\n");
            for &n in &ns {
                let law = oracle::wbar_distribution_exact(a.q, n)?;
                for (i, s) in law.states.iter().enumerate() {
                    body.push_str(&format!(
                        "{n},{},{},{},{},{},{},{},{},{}\n",
                        s.ybar,
                        s.nu,
                        s.ybar_next,
                        s.nu_next,
                        fmt_f64(law.law_n[i]),
                        fmt_f64(law.law_n1[i]),
                        fmt_f64(law.averaged[i]),
                        fmt_f64(law.stationary[i]),
                        fmt_f64(law.tv)
                    ));
                }
            }
        }
        What::Fullwalk => {
            let env = need_env()?;
            let t_max = *ns.iter().max().expect("at least one n");
            let p = oracle::full_walk_distribution(&env, t_max)?;
            body.push_str("t,p\n");
            for (t, v) in p.iter().enumerate() {
                body.push_str(&format!("{t},{}\n", fmt_f64(*v)));
            }
        }
    }
    emit(a.out.as_deref(), &(manifest.csv_comment() + &body), stdout)
}

fn cmd_experiment(a: &ExperimentArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let text = fs::read_to_string(&a.config).map_err(|e| io_err(&a.config, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de)
        .map_err(|e| CliError::Invalid(format!("{}: field {}: {}", a.config.display(), e.path(), e.inner())))?;
    let manifest = RunManifest::new("experiment", &config_text(&cfg), cfg.master_seed);
    let out = run_experiment(&cfg)?;
    let csv = manifest.csv_comment() + &diagnostic_csv(&out.rows);
    emit(a.out.as_deref(), &csv, stdout)?;
    let summary = serde_json::json!({ "manifest": manifest, "summary": out.summary });
    let text = serde_json::to_string_pretty(&summary).expect("serializes") + "\n";
    match &a.summary {
        Some(p) => fs::write(p, text).map_err(|e| io_err(p, e)),
        None => stderr.write_all(text.as_bytes()).map_err(|e| CliError::Io(format!("stderr: {e}"))),
    }
}
