//! The embedded horizontal walk `X_n` and its jump laws.
//!
//! A horizontal run has Geometric(½) length; conditioned on its parity it
//! is *odd geometric* (values `2k+1`) or *even geometric* (values `2k`), both
//! with probability `3/4 · (1/4)^k`. The parity decides whether the skeleton
//! keeps its direction (odd) or reverses it (even).

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::Environment;
use crate::rng::{BitSource, TAG_JUMPS};
use crate::skeleton::{occupation_stats, SkeletonState};

pub const MEAN_ODD: f64 = 5.0 / 3.0;
pub const MEAN_EVEN: f64 = 2.0 / 3.0;
pub const VAR_ODD: f64 = 16.0 / 9.0;
pub const VAR_EVEN: f64 = 16.0 / 9.0;
/// `max(s_o², s_e²)`
pub const VAR_MAX: f64 = 16.0 / 9.0;

const MAX_QUAD: usize = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddedError {
    #[error("DomainError: t = {0} outside (-ln 2, ln 2)")]
    DomainError(f64),
    #[error("DegenerateVariance: B_n = 0")]
    DegenerateVariance,
    #[error("QuadratureNotConverged: last change {delta:e} at {n_quad} nodes")]
    QuadratureNotConverged { n_quad: usize, delta: f64 },
    #[error("InvalidSupport: {0}")]
    InvalidSupport(String),
    #[error("InvalidArgument: {0}")]
    InvalidArgument(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GeomKind {
    Odd,
    Even,
}

impl GeomKind {
    /// The value indexed by `k`: `2k+1` or `2k`.
    pub fn value(self, k: u64) -> u64 {
        match self {
            GeomKind::Odd => 2 * k + 1,
            GeomKind::Even => 2 * k,
        }
    }

    pub fn supports(self, v: u64) -> bool {
        match self {
            GeomKind::Odd => v % 2 == 1,
            GeomKind::Even => v.is_multiple_of(2),
        }
    }
}

/// Probability of [`GeomKind::value`]`(k)`.
pub fn pmf(_kind: GeomKind, k: u64) -> f64 {
    0.75 * 0.25f64.powi(k.min(i32::MAX as u64) as i32)
}

/// Probability of the value `v` itself, zero off the support.
pub fn pmf_at(kind: GeomKind, v: u64) -> f64 {
    if kind.supports(v) {
        pmf(kind, v / 2)
    } else {
        0.0
    }
}

/// `(mean, variance)`
pub fn moments(kind: GeomKind) -> (f64, f64) {
    match kind {
        GeomKind::Odd => (MEAN_ODD, VAR_ODD),
        GeomKind::Even => (MEAN_EVEN, VAR_EVEN),
    }
}

pub fn sample(kind: GeomKind, bits: &mut BitSource) -> u64 {
    kind.value(bits.quarter_geometric())
}

pub fn charfn(kind: GeomKind, theta: f64) -> Complex64 {
    let z2 = Complex64::from_polar(1.0, 2.0 * theta);
    let even = Complex64::new(3.0, 0.0) / (Complex64::new(4.0, 0.0) - z2);
    match kind {
        GeomKind::Even => even,
        GeomKind::Odd => even * Complex64::from_polar(1.0, theta),
    }
}

/// Common modulus `|χ_o(θ)| = |χ_e(θ)| = 3 / sqrt(17 - 8 cos 2θ)`.
pub fn modulus_r(theta: f64) -> f64 {
    3.0 / (17.0 - 8.0 * (2.0 * theta).cos()).sqrt()
}

pub fn mgf(kind: GeomKind, t: f64) -> Result<f64, EmbeddedError> {
    Ok(log_mgf(kind, t)?.exp())
}

pub fn log_mgf(kind: GeomKind, t: f64) -> Result<f64, EmbeddedError> {
    if t.is_nan() || t >= std::f64::consts::LN_2 {
        return Err(EmbeddedError::DomainError(t));
    }
    let even = 3f64.ln() - (4.0 - (2.0 * t).exp()).ln();
    Ok(match kind {
        GeomKind::Even => even,
        GeomKind::Odd => even + t,
    })
}

/// Transition counts of a skeleton path split by jump kind and row sign.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathStats {
    pub n_o_plus: u64,
    pub n_o_minus: u64,
    pub n_e_plus: u64,
    pub n_e_minus: u64,
}

impl PathStats {
    pub fn new(n_o_plus: u64, n_o_minus: u64, n_e_plus: u64, n_e_minus: u64) -> Self {
        Self { n_o_plus, n_o_minus, n_e_plus, n_e_minus }
    }

    pub fn delta_o(&self) -> i64 {
        self.n_o_plus as i64 - self.n_o_minus as i64
    }

    pub fn delta_e(&self) -> i64 {
        self.n_e_plus as i64 - self.n_e_minus as i64
    }

    pub fn sigma_o(&self) -> u64 {
        self.n_o_plus + self.n_o_minus
    }

    pub fn sigma_e(&self) -> u64 {
        self.n_e_plus + self.n_e_minus
    }

    pub fn transitions(&self) -> u64 {
        self.sigma_o() + self.sigma_e()
    }

    /// `m_o Δ_o + m_e Δ_e`, the conditional mean of `X`.
    pub fn drift(&self) -> f64 {
        MEAN_ODD * self.delta_o() as f64 + MEAN_EVEN * self.delta_e() as f64
    }

    /// `s_o² Σ_o + s_e² Σ_e`, the conditional variance of `X`.
    pub fn variance(&self) -> f64 {
        VAR_ODD * self.sigma_o() as f64 + VAR_EVEN * self.sigma_e() as f64
    }
}

/// Counts over the transitions `k -> k+1` of `path`; transition `k` uses the
/// orientation of level `Y_k`, where its horizontal run takes place.
pub fn path_stats(path: &[SkeletonState], env: &Environment) -> PathStats {
    let mut st = PathStats::default();
    for w in path.windows(2) {
        let plus = env.orientation(w[0].y).sign() > 0;
        match (w[0].nu == w[1].nu, plus) {
            (true, true) => st.n_o_plus += 1,
            (true, false) => st.n_o_minus += 1,
            (false, true) => st.n_e_plus += 1,
            (false, false) => st.n_e_minus += 1,
        }
    }
    debug_assert!((st.drift() - occupation_drift(path, env)).abs() <= 1e-9 * (1.0 + st.drift().abs()));
    st
}

/// `Σ_y ε_y η̂(y)` with `η̂(y) = m_o m_o(y) + m_e m_e(y)`; equal to
/// [`PathStats::drift`].
pub fn occupation_drift(path: &[SkeletonState], env: &Environment) -> f64 {
    let occ = occupation_stats(path);
    let mut total = 0.0;
    for &y in occ.eta.keys() {
        let hat = MEAN_ODD * occ.m_o(y) as f64 + MEAN_EVEN * occ.m_e(y) as f64;
        total += env.orientation(y).sign() as f64 * hat;
    }
    total
}

/// `E(exp(iθX) | path)`, accumulated as log-modulus and argument.
pub fn conditional_charfn(stats: &PathStats, theta: f64) -> Complex64 {
    let n = stats.transitions() as f64;
    if n == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let log_mod = n * modulus_r(theta).ln();
    // arg χ_e(θ) = -arg(4 - e^{2iθ}); χ_o = e^{iθ} χ_e; χ(-θ) = conj χ(θ)
    let alpha = -(Complex64::new(4.0, 0.0) - Complex64::from_polar(1.0, 2.0 * theta)).arg();
    let arg = stats.delta_e() as f64 * alpha + stats.delta_o() as f64 * (theta + alpha);
    Complex64::from_polar(log_mod.exp(), arg)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Support {
    AllIntegers,
    EvenIntegers,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Inversion {
    pub value: f64,
    /// change between the last two resolutions
    pub error_estimate: f64,
    pub n_quad: usize,
}

fn trapezoid(stats: &PathStats, support: Support, n: usize) -> f64 {
    let (lo, width) = match support {
        Support::AllIntegers => (-PI, 2.0 * PI),
        Support::EvenIntegers => (-PI / 2.0, PI),
    };
    // the integrand is real-symmetric, so the imaginary parts cancel
    let mut sum = 0.0;
    let mut comp = 0.0;
    for j in 0..n {
        let theta = lo + width * j as f64 / n as f64;
        let term = conditional_charfn(stats, theta).re;
        let t = sum + term;
        comp += if sum.abs() >= term.abs() { (sum - t) + term } else { (term - t) + sum };
        sum = t;
    }
    (sum + comp) / n as f64
}

/// `P(X = 0 | path)` by trapezoidal quadrature of the inversion integral.
///
/// With `N` nodes the rule returns `Σ_m P(X = mN)` (times the lattice span
/// for `EvenIntegers`), so the starting resolution is raised above the bulk
/// of the conditional law and then doubled until two resolutions agree.
pub fn return_prob_inversion(stats: &PathStats, support: Support, n_quad: usize) -> Result<Inversion, EmbeddedError> {
    if n_quad < 64 {
        return Err(EmbeddedError::InvalidArgument(format!("n_quad must be at least 64, got {n_quad}")));
    }
    let span = match support {
        Support::AllIntegers => 1.0,
        Support::EvenIntegers => {
            if stats.sigma_o() % 2 == 1 {
                return Err(EmbeddedError::InvalidSupport(format!(
                    "an odd number of odd jumps ({}) cannot give an even sum",
                    stats.sigma_o()
                )));
            }
            2.0
        }
    };
    if stats.transitions() == 0 {
        return Ok(Inversion { value: 1.0, error_estimate: 0.0, n_quad });
    }
    let reach = (stats.drift().abs() + 40.0 * stats.variance().sqrt() + 64.0) / span;
    let mut n = n_quad.max((reach.ceil() as usize).next_power_of_two());
    if n > MAX_QUAD {
        return Err(EmbeddedError::QuadratureNotConverged { n_quad: n, delta: f64::NAN });
    }
    let mut prev = trapezoid(stats, support, n);
    loop {
        let next_n = 2 * n;
        if next_n > MAX_QUAD {
            return Err(EmbeddedError::QuadratureNotConverged { n_quad: n, delta: f64::NAN });
        }
        let cur = trapezoid(stats, support, next_n);
        let delta = (cur - prev).abs();
        if delta <= 1e-12 || delta <= 1e-9 * cur.abs() {
            return Ok(Inversion { value: cur.max(0.0), error_estimate: delta, n_quad: next_n });
        }
        prev = cur;
        n = next_n;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianApprox {
    pub a: f64,
    pub b: f64,
    /// `2 / (B sqrt(2π)) · exp(-(A/B)²/2)`, for an even-valued walk
    pub p_approx: f64,
}

pub fn gaussian_approx(stats: &PathStats) -> Result<GaussianApprox, EmbeddedError> {
    let b2 = stats.variance();
    if b2 <= 0.0 {
        return Err(EmbeddedError::DegenerateVariance);
    }
    let a = stats.drift();
    let b = b2.sqrt();
    let p_approx = 2.0 / (b * (2.0 * PI).sqrt()) * (-0.5 * (a / b).powi(2)).exp();
    Ok(GaussianApprox { a, b, p_approx })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChernoffBound {
    pub t: f64,
    /// `exp(t D + t² s² n)`, the second-order form
    pub optimized: f64,
    /// `E(exp(tX) | path)`, which dominates `P(X = 0 | path)` for every `t`
    pub raw: f64,
}

/// Exponential bound on `P(X = 0 | path)` at `t = -sign(D) n^{δ3 - 1/2} / (2 s²)`.
pub fn chernoff_bound(stats: &PathStats, n: u64, delta3: f64) -> Result<ChernoffBound, EmbeddedError> {
    if !(delta3 > 0.0 && delta3 < 0.5) {
        return Err(EmbeddedError::InvalidArgument(format!("delta3 must lie in (0, 1/2), got {delta3}")));
    }
    if n == 0 {
        return Err(EmbeddedError::InvalidArgument("n must be positive".into()));
    }
    let d = stats.drift();
    let nf = n as f64;
    let t = if d == 0.0 { 0.0 } else { -d.signum() * nf.powf(delta3 - 0.5) / (2.0 * VAR_MAX) };
    if t.abs() >= std::f64::consts::LN_2 {
        return Err(EmbeddedError::DomainError(t));
    }
    let optimized = (t * d + t * t * VAR_MAX * nf).exp();
    let log_raw = stats.n_o_plus as f64 * log_mgf(GeomKind::Odd, t)?
        + stats.n_e_plus as f64 * log_mgf(GeomKind::Even, t)?
        + stats.n_o_minus as f64 * log_mgf(GeomKind::Odd, -t)?
        + stats.n_e_minus as f64 * log_mgf(GeomKind::Even, -t)?;
    Ok(ChernoffBound { t, optimized, raw: log_raw.exp() })
}

/// `X_0, …, X_{len-1}` along `path`: `X_{k+1} = X_k + ε(Y_k) ξ_k` with `ξ_k`
/// odd geometric when `ν_{k+1} = ν_k` and even geometric otherwise.
pub fn simulate_embedded(path: &[SkeletonState], env: &Environment, seed: u64) -> Vec<i64> {
    let mut bits = BitSource::keyed(seed, TAG_JUMPS);
    simulate_embedded_from(path, env, &mut bits)
}

pub fn simulate_embedded_from(path: &[SkeletonState], env: &Environment, bits: &mut BitSource) -> Vec<i64> {
    let mut out = Vec::with_capacity(path.len());
    let mut x = 0i64;
    if !path.is_empty() {
        out.push(0);
    }
    for w in path.windows(2) {
        let kind = if w[0].nu == w[1].nu { GeomKind::Odd } else { GeomKind::Even };
        x += env.orientation(w[0].y).sign() * sample(kind, bits) as i64;
        out.push(x);
    }
    out
}

/// CSV rows `theta,re,im,modulus`.
pub fn transform_table_csv(kind: GeomKind, thetas: &[f64]) -> String {
    let mut s = String::from("theta,re,im,modulus\n");
    for &t in thetas {
        let c = charfn(kind, t);
        s.push_str(&format!(
            "{},{},{},{}\n",
            crate::output::fmt_f64(t),
            crate::output::fmt_f64(c.re),
            crate::output::fmt_f64(c.im),
            crate::output::fmt_f64(c.norm())
        ));
    }
    s
}
