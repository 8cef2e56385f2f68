//! The vertical skeleton `(Y_n, ν_n)`.
//!
//! `ν` is a two-state chain that keeps its value with probability
//! [`PERSISTENCE`] = 1/3 and `Y_n = ν_1 + … + ν_n`. The chain starts at
//! `(0, +1)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle;
use crate::output::fmt_f64;
use crate::rng::{BitSource, TAG_SKELETON};

/// Probability that ν keeps its value.
pub const PERSISTENCE: f64 = 1.0 / 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SkeletonError {
    #[error("Overflow: log E(exp(tY)) = {0} exceeds the double range")]
    Overflow(f64),
    #[error("TruncationTooCoarse: tail bound {bound:e} exceeds tolerance {tol:e} at k_max = {k_max}")]
    TruncationTooCoarse { bound: f64, tol: f64, k_max: usize },
    #[error("InvalidArgument: {0}")]
    InvalidArgument(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Down,
    Up,
}

impl Direction {
    #[inline]
    pub fn sign(self) -> i64 {
        match self {
            Direction::Down => -1,
            Direction::Up => 1,
        }
    }

    #[inline]
    pub fn flip(self) -> Self {
        match self {
            Direction::Down => Direction::Up,
            Direction::Up => Direction::Down,
        }
    }

    pub fn from_sign(s: i64) -> Option<Self> {
        match s {
            -1 => Some(Direction::Down),
            1 => Some(Direction::Up),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SkeletonState {
    pub y: i64,
    pub nu: Direction,
}

impl SkeletonState {
    pub const START: SkeletonState = SkeletonState { y: 0, nu: Direction::Up };

    pub fn new(y: i64, nu: Direction) -> Self {
        Self { y, nu }
    }

    /// Shorthand for tests and hand-built paths: `nu` is ±1.
    pub fn at(y: i64, nu: i64) -> Self {
        Self { y, nu: Direction::from_sign(nu).expect("nu must be ±1") }
    }
}

/// Successor states with their probabilities: persisting first, then reversing.
pub fn skeleton_transition(s: SkeletonState) -> [(SkeletonState, f64); 2] {
    let keep = SkeletonState::new(s.y + s.nu.sign(), s.nu);
    let turn = SkeletonState::new(s.y - s.nu.sign(), s.nu.flip());
    [(keep, PERSISTENCE), (turn, 1.0 - PERSISTENCE)]
}

/// Path `(Y_0, ν_0), …, (Y_n, ν_n)` from `(0, +1)`.
pub fn simulate_skeleton(n: usize, seed: u64) -> Vec<SkeletonState> {
    let mut bits = BitSource::keyed(seed, TAG_SKELETON);
    simulate_skeleton_from(n, &mut bits)
}

pub fn simulate_skeleton_from(n: usize, bits: &mut BitSource) -> Vec<SkeletonState> {
    let mut path = Vec::with_capacity(n + 1);
    let mut s = SkeletonState::START;
    path.push(s);
    for _ in 0..n {
        let nu = if bits.one_in_three() { s.nu } else { s.nu.flip() };
        s = SkeletonState::new(s.y + nu.sign(), nu);
        path.push(s);
    }
    path
}

/// Occupation counts of a skeleton path.
///
/// `eta` counts every index `k = 0..=n`; `m_o`/`m_e` count the indices
/// `k < n` whose successor keeps/reverses the direction, so
/// `m_o(y) + m_e(y) = eta(y)` except at the level of the final state, which
/// has no successor.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OccupationStats {
    /// level -> (visits with ν = +1, visits with ν = -1)
    pub eta: BTreeMap<i64, (u64, u64)>,
    pub m_o: BTreeMap<i64, u64>,
    pub m_e: BTreeMap<i64, u64>,
    /// horizon: the path has `n + 1` states
    pub n: usize,
}

impl OccupationStats {
    pub fn eta_total(&self, y: i64) -> u64 {
        self.eta.get(&y).map_or(0, |&(u, d)| u + d)
    }

    pub fn m_o(&self, y: i64) -> u64 {
        self.m_o.get(&y).copied().unwrap_or(0)
    }

    pub fn m_e(&self, y: i64) -> u64 {
        self.m_e.get(&y).copied().unwrap_or(0)
    }

    pub fn max_eta(&self) -> u64 {
        self.eta.values().map(|&(u, d)| u + d).max().unwrap_or(0)
    }
}

pub fn occupation_stats(path: &[SkeletonState]) -> OccupationStats {
    let mut st = OccupationStats { n: path.len().saturating_sub(1), ..Default::default() };
    for s in path {
        let e = st.eta.entry(s.y).or_default();
        match s.nu {
            Direction::Up => e.0 += 1,
            Direction::Down => e.1 += 1,
        }
    }
    for w in path.windows(2) {
        let map = if w[0].nu == w[1].nu { &mut st.m_o } else { &mut st.m_e };
        *map.entry(w[0].y).or_default() += 1;
    }
    st
}

/// Occupation counts over the first `k_end` states only (indices `0..k_end`),
/// with `m` counts using successors inside the path. This is η_{k_end-1}.
pub fn occupation_prefix(path: &[SkeletonState], k_end: usize) -> OccupationStats {
    let end = k_end.min(path.len());
    let mut st = occupation_stats(&path[..end]);
    if end < path.len() && end > 0 {
        let (a, b) = (path[end - 1], path[end]);
        let map = if a.nu == b.nu { &mut st.m_o } else { &mut st.m_e };
        *map.entry(a.y).or_default() += 1;
    }
    st.n = end.saturating_sub(1);
    st
}

/// Exact `P(Y_{2n} = 0)` from `(0, +1)`.
pub fn return_prob_exact(n: usize) -> f64 {
    oracle::level_return_probability(2 * n)
}

/// Eigen-decomposition of the tilted 2×2 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TiltedSpectrum {
    /// Rows are the current direction (+1 first), columns the next.
    pub matrix: [[f64; 2]; 2],
    pub lambda1: f64,
    pub lambda2: f64,
}

/// `[[q e^t, (1-q) e^{-t}], [(1-q) e^t, q e^{-t}]]` and its eigenvalues
/// `q cosh t ± sqrt(q² cosh² t - (2q - 1))`, largest first.
///
/// `λ_1(0) = 1` (the matrix is stochastic at `t = 0`) and
/// `λ_1(t) = 1 + t²/4 + O(t⁴)`.
pub fn tilted_matrix(t: f64) -> TiltedSpectrum {
    let q = PERSISTENCE;
    let (ep, em) = (t.exp(), (-t).exp());
    let matrix = [[q * ep, (1.0 - q) * em], [(1.0 - q) * ep, q * em]];
    let ch = t.cosh();
    let disc = (q * ch).powi(2) - (2.0 * q - 1.0);
    let root = disc.sqrt();
    TiltedSpectrum { matrix, lambda1: q * ch + root, lambda2: q * ch - root }
}

/// `log E(exp(t Y_{2n}))` from `(0, +1)` by `2n` applications of the tilted
/// matrix, renormalizing at every step.
pub fn log_mgf_y(n: usize, t: f64) -> f64 {
    let m = tilted_matrix(t).matrix;
    // w = M^k · 1, kept as scale · w
    let mut w = [1.0f64, 1.0];
    let mut log_scale = 0.0;
    for _ in 0..2 * n {
        let next = [m[0][0] * w[0] + m[0][1] * w[1], m[1][0] * w[0] + m[1][1] * w[1]];
        let norm = next[0].max(next[1]);
        w = [next[0] / norm, next[1] / norm];
        log_scale += norm.ln();
    }
    log_scale + w[0].ln()
}

pub fn mgf_y_exact(n: usize, t: f64) -> Result<f64, SkeletonError> {
    let l = log_mgf_y(n, t);
    if l >= f64::MAX.ln() {
        return Err(SkeletonError::Overflow(l));
    }
    Ok(l.exp())
}

/// `p^{(k)}_{a,a}` for `k = 0..=k_max`, identical for every state `a`.
///
/// Uses the three-term recurrence satisfied by the coefficients of
/// `h(u) = ((1-u)(1-u/9))^{-1/2}`:
/// `p^{(0)} = 1`, `p^{(2m)} = (h_m + h_{m-1}/3)/2`, odd terms vanish, with
/// `h_{m+1} = ((10m + 5) h_m - m h_{m-1}) / (9(m+1))`. The recurrence is
/// forward-stable (the wanted solution dominates). The dynamic-programming
/// route is [`oracle::diagonal_return_dp`].
pub fn diagonal_return_probabilities(k_max: usize) -> Vec<f64> {
    let mut out = vec![0.0; k_max + 1];
    out[0] = 1.0;
    let (mut h_prev, mut h) = (1.0f64, 5.0 / 9.0);
    let mut m = 1usize;
    while 2 * m <= k_max {
        out[2 * m] = 0.5 * (h + h_prev / 3.0);
        let next = ((10 * m + 5) as f64 * h - m as f64 * h_prev) / (9 * (m + 1)) as f64;
        h_prev = h;
        h = next;
        m += 1;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreenValue {
    pub value: f64,
    /// `s^{k_max} / (1 - s)`, an upper bound on the neglected tail
    pub truncation_bound: f64,
    pub k_max: usize,
}

/// Default truncation `ceil(50 / (1 - s))`.
pub fn default_k_max(s: f64) -> usize {
    (50.0 / (1.0 - s)).ceil() as usize
}

/// Truncated `G_{a,a}(s) = Σ_k p^{(k)}_{a,a} s^k`.
pub fn green_function(a: SkeletonState, s: f64, k_max: Option<usize>, tol: f64) -> Result<GreenValue, SkeletonError> {
    let _ = a; // translation and reflection invariance: the same for every state
    if !(0.0..1.0).contains(&s) {
        return Err(SkeletonError::InvalidArgument(format!("s must lie in [0, 1), got {s}")));
    }
    let k_max = k_max.unwrap_or_else(|| default_k_max(s));
    let bound = if s == 0.0 { 0.0 } else { s.powf(k_max as f64) / (1.0 - s) };
    if bound > tol {
        return Err(SkeletonError::TruncationTooCoarse { bound, tol, k_max });
    }
    let p = diagonal_return_probabilities(k_max);
    let s2 = s * s;
    // only even powers contribute
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut pow = 1.0f64;
    for k in (0..=k_max).step_by(2) {
        let term = p[k] * pow;
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
        pow *= s2;
        if pow == 0.0 {
            break;
        }
    }
    Ok(GreenValue { value: sum + comp, truncation_bound: bound, k_max })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FirstReturnLaplace {
    /// `E(exp(-t σ_{a,a})) = 1 - 1/G(e^{-t})`
    pub value: f64,
    /// `-ln(value) / sqrt(t)`
    pub diagnostic: f64,
    pub truncation_bound: f64,
}

pub fn first_return_laplace(a: SkeletonState, t: f64) -> Result<FirstReturnLaplace, SkeletonError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(SkeletonError::InvalidArgument(format!("t must be positive, got {t}")));
    }
    let s = (-t).exp();
    let g = green_function(a, s, None, 1e-12)?;
    let value = 1.0 - 1.0 / g.value;
    Ok(FirstReturnLaplace { value, diagnostic: -value.ln() / t.sqrt(), truncation_bound: g.truncation_bound })
}

/// Indices `k >= 1` with `Y_k = 0`.
pub fn sigma_returns(path: &[SkeletonState]) -> Vec<usize> {
    path.iter().enumerate().skip(1).filter(|(_, s)| s.y == 0).map(|(k, _)| k).collect()
}

/// Rows `n,p_exact,sqrt_n_times_p` for each `n` (with a header line).
pub fn llt_table_csv(ns: &[usize]) -> String {
    let mut out = String::from("n,p_exact,sqrt_n_times_p\n");
    for &n in ns {
        let p = return_prob_exact(n);
        out.push_str(&format!("{n},{},{}\n", fmt_f64(p), fmt_f64((n as f64).sqrt() * p)));
    }
    out
}

/// Rows `t,laplace,diagnostic` of the first-return transform at `a`.
pub fn laplace_table_csv(a: SkeletonState, ts: &[f64]) -> Result<String, SkeletonError> {
    let mut out = String::from("t,laplace,diagnostic\n");
    for &t in ts {
        let l = first_return_laplace(a, t)?;
        out.push_str(&format!("{},{},{}\n", fmt_f64(t), fmt_f64(l.value), fmt_f64(l.diagnostic)));
    }
    Ok(out)
}
