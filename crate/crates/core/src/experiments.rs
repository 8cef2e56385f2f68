//! Path events, the periodic functionals `S_e`, `S_o`, the pair-return event
//! `Z_n`, and decay-exponent diagnostics for `p_n`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedded::{path_stats, simulate_embedded_from};
use crate::environment::{residue, EnvError, Environment, EnvironmentSpec, Orientation, Regime};
use crate::oracle::{self, BridgeEnd, OracleError, SkeletonBridge};
use crate::output::fmt_f64;
use crate::rng::{derive_seed, BitSource, TAG_JUMPS, TAG_SKELETON};
use crate::skeleton::{occupation_prefix, simulate_skeleton_from, SkeletonState};
use crate::stats::{binomial_stderr, fit_power_law, median, PowerFit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("ZeroAcceptance: no path out of {0} hit the pair-return event")]
    ZeroAcceptance(u64),
    #[error("LTooSmall: level {level} is perturbed but L = {l}")]
    LTooSmall { level: i64, l: u64 },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Environment(#[from] EnvError),
}

/// Exponents of the path events and the functional scale `C`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventConfig {
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    #[serde(rename = "C", default = "default_c")]
    pub c: f64,
}

fn default_c() -> f64 {
    4.0
}

impl Default for EventConfig {
    fn default() -> Self {
        Self { delta1: 0.1, delta2: 0.1, delta3: 0.15, c: 4.0 }
    }
}

impl EventConfig {
    pub fn new(delta1: f64, delta2: f64, delta3: f64, c: f64) -> Result<Self, ExperimentError> {
        let cfg = Self { delta1, delta2, delta3, c };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        for (name, v) in [("delta1", self.delta1), ("delta2", self.delta2), ("delta3", self.delta3), ("C", self.c)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ExperimentError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if 2.0 * self.delta3 + self.delta1 >= 0.5 {
            return Err(ExperimentError::InvalidConfig(format!(
                "2 delta3 + delta1 = {} must be below 1/2",
                2.0 * self.delta3 + self.delta1
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub n: usize,
    pub a1: bool,
    pub a2: bool,
    pub b: bool,
    pub drift: f64,
    pub max_abs_y: u64,
    pub max_eta: u64,
}

fn half_horizon(path: &[SkeletonState]) -> Result<usize, ExperimentError> {
    let t = path.len().saturating_sub(1);
    if t == 0 || t % 2 == 1 {
        return Err(ExperimentError::InvalidConfig(format!("path horizon must be even and positive, got {t}")));
    }
    Ok(t / 2)
}

/// Indicators of `A_{n,1}` (small range), `A_{n,2}` (small local time) and
/// `B_n` (additionally a large drift) for a path of horizon `2n`.
pub fn classify_events(
    path: &[SkeletonState],
    env: &Environment,
    cfg: &EventConfig,
) -> Result<EventRecord, ExperimentError> {
    let n = half_horizon(path)?;
    let nf = n as f64;
    let max_abs_y = path.iter().map(|s| s.y.unsigned_abs()).max().unwrap_or(0);
    // local times up to 2n - 1
    let occ = occupation_prefix(path, 2 * n);
    let max_eta = occ.max_eta();
    let drift = path_stats(path, env).drift();
    let a1 = (max_abs_y as f64) < nf.powf(0.5 + cfg.delta1);
    let a2 = (max_eta as f64) < nf.powf(0.5 + cfg.delta2);
    let b = a1 && a2 && drift.abs() > nf.powf(0.5 + cfg.delta3);
    Ok(EventRecord { n, a1, a2, b, drift, max_abs_y, max_eta })
}

fn f_at(f_table: &[Orientation], y: i64) -> i64 {
    f_table[residue(y, f_table.len())].sign()
}

/// `(S_e, S_o)`: step `i` adds `f(Y_{i-1} mod Q)` to `S_o` when it keeps
/// the direction and to `S_e` when it reverses it.
pub fn s_functionals(path: &[SkeletonState], f_table: &[Orientation]) -> (i64, i64) {
    let (mut se, mut so) = (0i64, 0i64);
    for w in path.windows(2) {
        let f = f_at(f_table, w[0].y);
        if w[0].nu == w[1].nu {
            so += f;
        } else {
            se += f;
        }
    }
    (se, so)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbedFunctionals {
    pub s_bar_e: i64,
    pub s_bar_o: i64,
    pub s_e: i64,
    pub s_o: i64,
    /// steps `i` with `|Y_{i-1}| <= L`
    pub low_level_visits: u64,
}

impl PerturbedFunctionals {
    /// `|S̄_e| <= 2 visits + |S_e|` and the same for the odd part.
    pub fn cutoff_holds(&self) -> bool {
        let v = 2 * self.low_level_visits as i64;
        self.s_bar_e.abs() <= v + self.s_e.abs() && self.s_bar_o.abs() <= v + self.s_o.abs()
    }
}

/// `S̄` uses the realized orientations, `S` the periodic table. Every level
/// with `|y| > L` visited by the path must be unperturbed.
pub fn s_functionals_perturbed(
    path: &[SkeletonState],
    env: &Environment,
    l: u64,
) -> Result<PerturbedFunctionals, ExperimentError> {
    let table = env
        .table()
        .ok_or_else(|| ExperimentError::InvalidConfig("perturbed functionals need a periodic table".into()))?;
    let mut out = PerturbedFunctionals { s_bar_e: 0, s_bar_o: 0, s_e: 0, s_o: 0, low_level_visits: 0 };
    let lo = path.iter().map(|s| s.y).min().unwrap_or(0);
    let hi = path.iter().map(|s| s.y).max().unwrap_or(0);
    let signs = env.signs(lo, hi);
    let flags = env.perturbed_flags(lo, hi);
    for w in path.windows(2) {
        let y = w[0].y;
        let i = (y - lo) as usize;
        let low = y.unsigned_abs() <= l;
        if low {
            out.low_level_visits += 1;
        } else if flags[i] {
            return Err(ExperimentError::LTooSmall { level: y, l });
        }
        let f = f_at(table, y);
        let e = signs[i] as i64;
        if w[0].nu == w[1].nu {
            out.s_o += f;
            out.s_bar_o += e;
        } else {
            out.s_e += f;
            out.s_bar_e += e;
        }
    }
    Ok(out)
}

/// `W_{2n} = W_0`: the path ends with the step `(-1, -1) -> (0, +1)`.
pub fn in_pair_return(path: &[SkeletonState]) -> bool {
    let t = path.len().saturating_sub(1);
    t >= 2 && t.is_multiple_of(2) && path[t - 1] == SkeletonState::at(-1, -1) && path[t] == SkeletonState::at(0, 1)
}

/// The reduced form: `W̄_{2n} = W̄_0` and `Y_{2n} = 0`.
pub fn in_reduced_pair_return(path: &[SkeletonState], q: usize) -> bool {
    let t = path.len().saturating_sub(1);
    if t < 2 || t % 2 == 1 {
        return false;
    }
    let (a, b) = (path[t - 1], path[t]);
    residue(a.y, q) == q - 1 && a.nu.sign() == -1 && residue(b.y, q) == 0 && b.nu.sign() == 1 && b.y == 0
}

/// Membership in the constrained set: pair return and `|S_e| + |S_o| <= C sqrt(n)`.
pub fn constrained_path_filter(path: &[SkeletonState], f_table: &[Orientation], c: f64) -> bool {
    if !in_pair_return(path) {
        return false;
    }
    let n = (path.len() - 1) / 2;
    let (se, so) = s_functionals(path, f_table);
    ((se.abs() + so.abs()) as f64) <= c * (n as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalEstimate {
    pub estimate: f64,
    pub stderr: f64,
    /// paths in the pair-return event
    pub accepted: u64,
    pub acceptance_rate: f64,
}

/// `P(|S_e| + |S_o| <= C sqrt(n) | Z_n)` by rejection: unconditioned paths of
/// horizon `2n` are drawn and those outside `Z_n` discarded.
pub fn conditional_s_probability(
    f_table: &[Orientation],
    n: usize,
    c: f64,
    n_samples: u64,
    seed: u64,
) -> Result<ConditionalEstimate, ExperimentError> {
    if n == 0 {
        return Err(ExperimentError::InvalidConfig("n must be positive".into()));
    }
    let flags: Vec<Option<bool>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut bits = BitSource::keyed(derive_seed(seed, i), TAG_SKELETON);
            let path = simulate_skeleton_from(2 * n, &mut bits);
            in_pair_return(&path).then(|| constrained_path_filter(&path, f_table, c))
        })
        .collect();
    summarize_conditional(&flags, n_samples)
}

/// Same estimate with paths drawn directly from the bridge on `Z_n`.
pub fn conditional_s_probability_bridge(
    f_table: &[Orientation],
    n: usize,
    c: f64,
    n_samples: u64,
    seed: u64,
) -> Result<ConditionalEstimate, ExperimentError> {
    let bridge = SkeletonBridge::new(2 * n, BridgeEnd::PairReturn)?;
    let flags: Vec<Option<bool>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut bits = BitSource::keyed(derive_seed(seed, i), TAG_SKELETON);
            Some(constrained_path_filter(&bridge.sample(&mut bits), f_table, c))
        })
        .collect();
    let mut est = summarize_conditional(&flags, n_samples)?;
    est.acceptance_rate = bridge.end_probability();
    Ok(est)
}

fn summarize_conditional(flags: &[Option<bool>], n_samples: u64) -> Result<ConditionalEstimate, ExperimentError> {
    let accepted = flags.iter().filter(|f| f.is_some()).count() as u64;
    if accepted == 0 {
        return Err(ExperimentError::ZeroAcceptance(n_samples));
    }
    let hits = flags.iter().filter(|f| **f == Some(true)).count() as u64;
    let estimate = hits as f64 / accepted as f64;
    Ok(ConditionalEstimate {
        estimate,
        stderr: binomial_stderr(estimate, accepted),
        accepted,
        acceptance_rate: accepted as f64 / n_samples as f64,
    })
}

/// `n_samples` paths on `Z_n` that also satisfy the constraint, drawn from
/// the bridge by rejection on the constraint. Sample `i` uses the
/// sub-stream `derive_seed(seed, i)`.
pub fn sample_constrained_paths(
    f_table: &[Orientation],
    n: usize,
    c: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<Vec<SkeletonState>>, ExperimentError> {
    let bridge = SkeletonBridge::new(2 * n, BridgeEnd::PairReturn)?;
    let mut out = Vec::with_capacity(n_paths);
    let mut i = 0u64;
    while out.len() < n_paths {
        if i > 1000 * n_paths as u64 + 1000 {
            return Err(ExperimentError::ZeroAcceptance(i));
        }
        let mut bits = BitSource::keyed(derive_seed(seed, i), TAG_SKELETON);
        let path = bridge.sample(&mut bits);
        if constrained_path_filter(&path, f_table, c) {
            out.push(path);
        }
        i += 1;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    ExactDP,
    MonteCarlo,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::ExactDP => "ExactDP",
            Method::MonteCarlo => "MonteCarlo",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub n: usize,
    pub p: f64,
    /// Monte Carlo standard error, or the truncation deficit for exact runs
    pub stderr: f64,
    pub method: Method,
    pub env_digest: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub rows: Vec<DiagnosticRow>,
    pub fit: Option<PowerFit>,
}

/// Options for [`recurrence_diagnostic`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticOptions {
    pub tail_tol: f64,
    pub samples: u64,
}

impl Default for DiagnosticOptions {
    fn default() -> Self {
        Self { tail_tol: 1e-12, samples: 100_000 }
    }
}

/// `p_n` on `n_grid` and the fitted decay exponent.
pub fn recurrence_diagnostic(
    env: &Environment,
    n_grid: &[usize],
    method: Method,
    seed: u64,
    opts: DiagnosticOptions,
) -> Result<Diagnostic, ExperimentError> {
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[0] >= w[1]) || n_grid[0] == 0 {
        return Err(ExperimentError::InvalidConfig("n_grid must be positive and strictly increasing".into()));
    }
    let n_max = *n_grid.last().expect("non-empty");
    let digest = env.digest();
    let rows: Vec<DiagnosticRow> = match method {
        Method::ExactDP => {
            let series = oracle::joint_pn_series(env, n_max, opts.tail_tol)?;
            n_grid
                .iter()
                .map(|&n| {
                    let r = series[n - 1];
                    DiagnosticRow { n, p: r.p, stderr: r.deficit, method, env_digest: digest.clone() }
                })
                .collect()
        }
        Method::MonteCarlo => {
            let hits: Vec<Vec<bool>> = (0..opts.samples)
                .into_par_iter()
                .map(|i| {
                    let s = derive_seed(seed, i);
                    let mut sb = BitSource::keyed(s, TAG_SKELETON);
                    let mut jb = BitSource::keyed(s, TAG_JUMPS);
                    let path = simulate_skeleton_from(2 * n_max, &mut sb);
                    let xs = simulate_embedded_from(&path, env, &mut jb);
                    n_grid.iter().map(|&n| path[2 * n].y == 0 && xs[2 * n] == 0).collect()
                })
                .collect();
            n_grid
                .iter()
                .enumerate()
                .map(|(j, &n)| {
                    let c = hits.iter().filter(|h| h[j]).count() as u64;
                    let p = c as f64 / opts.samples as f64;
                    DiagnosticRow { n, p, stderr: binomial_stderr(p, opts.samples), method, env_digest: digest.clone() }
                })
                .collect()
        }
    };
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ps: Vec<f64> = rows.iter().map(|r| r.p).collect();
    Ok(Diagnostic { fit: fit_power_law(&ns, &ps), rows })
}

pub fn diagnostic_csv(rows: &[DiagnosticRow]) -> String {
    let mut s = String::from("n,p,stderr,method,env_digest\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.n, fmt_f64(r.p), fmt_f64(r.stderr), r.method.name(), r.env_digest));
    }
    s
}

// ---------------------------------------------------------------- config files

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Recurrence,
    ConditionalS,
}

fn default_method() -> Method {
    Method::ExactDP
}
fn default_tail_tol() -> f64 {
    1e-12
}
fn default_samples() -> u64 {
    10_000
}

/// Experiment description as read from a JSON file.
///
/// For `recurrence`, each entry of `seeds` replaces the environment seed in
/// turn (a list of disorder realizations); an empty list runs `environment` as
/// given. For `conditional_s`, the periodic table of `environment` is used
/// with horizon `2n` and scale `event_config.C`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub environment: EnvironmentSpec,
    #[serde(default)]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
    #[serde(default = "default_samples")]
    pub samples: u64,
    #[serde(default)]
    pub event_config: EventConfig,
    #[serde(default)]
    pub n: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub env_seed: u64,
    pub env_digest: String,
    pub exponent: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentOutput {
    pub rows: Vec<DiagnosticRow>,
    pub summary: serde_json::Value,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    cfg.event_config.validate()?;
    cfg.environment.validate()?;
    match cfg.kind {
        ExperimentKind::Recurrence => run_recurrence(cfg),
        ExperimentKind::ConditionalS => run_conditional(cfg),
    }
}

fn run_recurrence(cfg: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    let specs: Vec<EnvironmentSpec> = if cfg.seeds.is_empty() {
        vec![cfg.environment.clone()]
    } else {
        cfg.seeds.iter().map(|&s| EnvironmentSpec { seed: s, ..cfg.environment.clone() }).collect()
    };
    let opts = DiagnosticOptions { tail_tol: cfg.tail_tol, samples: cfg.samples };
    let results: Vec<Result<(EnvironmentSpec, Diagnostic), ExperimentError>> = specs
        .into_par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let env = Environment::new(spec.clone())?;
            let d = recurrence_diagnostic(&env, &cfg.n_grid, cfg.method, derive_seed(cfg.master_seed, i as u64), opts)?;
            Ok((spec, d))
        })
        .collect();
    let mut rows = Vec::new();
    let mut per_seed = Vec::new();
    for r in results {
        let (spec, d) = r?;
        per_seed.push(SeedResult {
            env_seed: spec.seed,
            env_digest: spec.digest(),
            exponent: d.fit.map(|f| f.exponent),
            ci_low: d.fit.map(|f| f.ci_low),
            ci_high: d.fit.map(|f| f.ci_high),
        });
        rows.extend(d.rows);
    }
    let exps: Vec<f64> = per_seed.iter().filter_map(|s| s.exponent).collect();
    let regime = match cfg.environment.regime {
        Regime::Rademacher => "rademacher",
        Regime::Periodic => "periodic",
        Regime::Perturbed => "perturbed",
    };
    let summary = serde_json::json!({
        "kind": "recurrence",
        "regime": regime,
        "method": cfg.method.name(),
        "per_seed": per_seed,
        "median_exponent": median(&exps),
        "exponent": if per_seed.len() == 1 { per_seed[0].exponent } else { None },
        "ci": if per_seed.len() == 1 { Some([per_seed[0].ci_low, per_seed[0].ci_high]) } else { None },
    });
    Ok(ExperimentOutput { rows, summary })
}

fn run_conditional(cfg: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    let env = Environment::new(cfg.environment.clone())?;
    let table =
        env.table().ok_or_else(|| ExperimentError::InvalidConfig("conditional_s needs a periodic table".into()))?;
    let n = cfg.n.ok_or_else(|| ExperimentError::InvalidConfig("conditional_s needs n".into()))?;
    let c = cfg.event_config.c;
    let est = conditional_s_probability(table, n, c, cfg.samples, cfg.master_seed)?;
    let rows = vec![DiagnosticRow {
        n,
        p: est.estimate,
        stderr: est.stderr,
        method: Method::MonteCarlo,
        env_digest: env.digest(),
    }];
    let summary = serde_json::json!({
        "kind": "conditional_s",
        "n": n,
        "C": c,
        "estimate": est.estimate,
        "stderr": est.stderr,
        "accepted": est.accepted,
        "acceptance_rate": est.acceptance_rate,
    });
    Ok(ExperimentOutput { rows, summary })
}
