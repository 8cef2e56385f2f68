//! Horizontal row orientations: Rademacher, periodic and perturbed-periodic.
//!
//! An [`EnvironmentSpec`] is plain data (it is what the JSON environment file
//! holds). [`Environment`] is the validated form and answers
//! `orientation(y)` as a pure function of its [`EnvironmentSpec`] and `y`, so any number of
//! workers may query it in any order.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rng::{unit_f64, KeyedField, TAG_LAMBDA, TAG_SIGN};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("InvalidPeriod: {0}")]
    InvalidPeriod(String),
    #[error("NonZeroSum: orientation table sums to {0}, expected 0")]
    NonZeroSum(i64),
    #[error("InvalidParam: {0}")]
    InvalidParam(String),
    #[error("RangeError: y_min {y_min} > y_max {y_max}")]
    RangeError { y_min: i64, y_max: i64 },
}

/// Direction of every horizontal edge of a row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i64")]
pub enum Orientation {
    Left,
    Right,
}

impl Orientation {
    #[inline]
    pub fn sign(self) -> i64 {
        match self {
            Orientation::Left => -1,
            Orientation::Right => 1,
        }
    }

    pub fn from_sign(s: i64) -> Option<Self> {
        match s {
            -1 => Some(Orientation::Left),
            1 => Some(Orientation::Right),
            _ => None,
        }
    }

    #[inline]
    fn from_bit(bits: u64) -> Self {
        if bits & 1 == 1 {
            Orientation::Right
        } else {
            Orientation::Left
        }
    }
}

impl From<Orientation> for i8 {
    fn from(o: Orientation) -> i8 {
        o.sign() as i8
    }
}

impl TryFrom<i64> for Orientation {
    type Error = String;
    fn try_from(v: i64) -> Result<Self, String> {
        Orientation::from_sign(v).ok_or_else(|| format!("orientation must be -1 or +1, got {v}"))
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Orientation::Left => f.write_str("-1"),
            Orientation::Right => f.write_str("1"),
        }
    }
}

/// Parse a comma list such as `+1,-1,-1,+1`.
pub fn parse_table(s: &str) -> Result<Vec<Orientation>, String> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            let v: i64 = t.trim_start_matches('+').parse().map_err(|_| format!("bad orientation {t:?}"))?;
            Orientation::try_from(v)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    #[serde(alias = "Rademacher")]
    Rademacher,
    #[serde(alias = "Periodic")]
    Periodic,
    #[serde(alias = "Perturbed")]
    Perturbed,
}

fn default_beta() -> f64 {
    1.0
}

/// Flat description of an environment, as stored in environment files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub regime: Regime,
    #[serde(default)]
    pub seed: u64,
    #[serde(rename = "Q", default)]
    pub period: usize,
    #[serde(rename = "f", default)]
    pub f_table: Vec<Orientation>,
    #[serde(default)]
    pub c: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

impl EnvironmentSpec {
    pub fn rademacher(seed: u64) -> Self {
        Self { regime: Regime::Rademacher, seed, period: 0, f_table: Vec::new(), c: 0.0, beta: 1.0 }
    }

    pub fn periodic(f_table: Vec<Orientation>) -> Self {
        Self { regime: Regime::Periodic, seed: 0, period: f_table.len(), f_table, c: 0.0, beta: 1.0 }
    }

    pub fn perturbed(seed: u64, f_table: Vec<Orientation>, c: f64, beta: f64) -> Self {
        Self { regime: Regime::Perturbed, seed, period: f_table.len(), f_table, c, beta }
    }

    /// The alternating table `[+1, -1]` with period 2.
    pub fn alternating() -> Self {
        Self::periodic(vec![Orientation::Right, Orientation::Left])
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        match self.regime {
            Regime::Rademacher => Ok(()),
            Regime::Periodic => validate_table(self.period, &self.f_table),
            Regime::Perturbed => {
                validate_table(self.period, &self.f_table)?;
                validate_perturbation(self.c, self.beta)
            }
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        hex_digest(json.as_bytes())
    }
}

fn validate_table(q: usize, f: &[Orientation]) -> Result<(), EnvError> {
    if q <= 1 || q % 2 == 1 {
        return Err(EnvError::InvalidPeriod(format!("Q must be an even integer > 1, got {q}")));
    }
    if f.len() != q {
        return Err(EnvError::InvalidPeriod(format!("f has {} entries but Q = {q}", f.len())));
    }
    let sum: i64 = f.iter().map(|o| o.sign()).sum();
    if sum != 0 {
        return Err(EnvError::NonZeroSum(sum));
    }
    Ok(())
}

fn validate_perturbation(c: f64, beta: f64) -> Result<(), EnvError> {
    if !(c.is_finite() && c >= 0.0) {
        return Err(EnvError::InvalidParam(format!("c must be finite and >= 0, got {c}")));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(EnvError::InvalidParam(format!("beta must be finite and > 0, got {beta}")));
    }
    Ok(())
}

/// `min(1, c/|y|^beta)`, with `min(1, c)` at the origin.
pub fn perturbation_probability(c: f64, beta: f64, y: i64) -> Result<f64, EnvError> {
    validate_perturbation(c, beta)?;
    if y == 0 {
        return Ok(c.min(1.0));
    }
    let ay = y.unsigned_abs() as f64;
    Ok((c / ay.powf(beta)).min(1.0))
}

/// Mathematical (non-negative) residue of `y` modulo `q`.
#[inline]
pub fn residue(y: i64, q: usize) -> usize {
    y.rem_euclid(q as i64) as usize
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    let d = Sha256::digest(bytes);
    d.iter().map(|b| format!("{b:02x}")).collect()
}

/// A validated environment.
#[derive(Clone, Debug)]
pub struct Environment {
    spec: EnvironmentSpec,
    signs: KeyedField,
    lambdas: KeyedField,
}

impl Environment {
    pub fn new(spec: EnvironmentSpec) -> Result<Self, EnvError> {
        spec.validate()?;
        let signs = KeyedField::new(spec.seed, TAG_SIGN);
        let lambdas = KeyedField::new(spec.seed, TAG_LAMBDA);
        Ok(Self { spec, signs, lambdas })
    }

    /// Skips validation; lets tests build tables such as all-(+1) rows.
    #[cfg(test)]
    pub(crate) fn unvalidated(spec: EnvironmentSpec) -> Self {
        let signs = KeyedField::new(spec.seed, TAG_SIGN);
        let lambdas = KeyedField::new(spec.seed, TAG_LAMBDA);
        Self { spec, signs, lambdas }
    }

    pub fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    pub fn regime(&self) -> Regime {
        self.spec.regime
    }

    /// The periodic table, if the regime has one.
    pub fn table(&self) -> Option<&[Orientation]> {
        match self.spec.regime {
            Regime::Rademacher => None,
            _ => Some(&self.spec.f_table),
        }
    }

    /// Rademacher sign of row `y` under this environment's seed.
    #[inline]
    pub fn rademacher_value(&self, y: i64) -> Orientation {
        Orientation::from_bit(self.signs.value(y))
    }

    #[inline]
    fn periodic_value(&self, y: i64) -> Orientation {
        self.spec.f_table[residue(y, self.spec.period)]
    }

    /// Realized perturbation indicator λ_y (always false outside the perturbed regime).
    pub fn is_perturbed(&self, y: i64) -> bool {
        match self.spec.regime {
            Regime::Perturbed => {
                let p = perturbation_probability(self.spec.c, self.spec.beta, y).expect("validated");
                unit_f64(self.lambdas.value(y)) < p
            }
            _ => false,
        }
    }

    pub fn orientation(&self, y: i64) -> Orientation {
        match self.spec.regime {
            Regime::Rademacher => self.rademacher_value(y),
            Regime::Periodic => self.periodic_value(y),
            Regime::Perturbed => {
                if self.is_perturbed(y) {
                    self.rademacher_value(y)
                } else {
                    self.periodic_value(y)
                }
            }
        }
    }

    /// λ_y for `lo..=hi`, computed in bulk.
    pub fn perturbed_flags(&self, lo: i64, hi: i64) -> Vec<bool> {
        if lo > hi {
            return Vec::new();
        }
        match self.spec.regime {
            Regime::Perturbed => (lo..=hi)
                .zip(self.lambdas.values(lo, hi))
                .map(|(y, l)| {
                    unit_f64(l) < perturbation_probability(self.spec.c, self.spec.beta, y).expect("validated")
                })
                .collect(),
            _ => vec![false; (hi - lo + 1) as usize],
        }
    }

    /// Orientation signs for `lo..=hi`, computed in bulk.
    pub fn signs(&self, lo: i64, hi: i64) -> Vec<i8> {
        if lo > hi {
            return Vec::new();
        }
        match self.spec.regime {
            Regime::Periodic => (lo..=hi).map(|y| self.periodic_value(y).sign() as i8).collect(),
            Regime::Rademacher => {
                self.signs.values(lo, hi).into_iter().map(|b| Orientation::from_bit(b).sign() as i8).collect()
            }
            Regime::Perturbed => {
                let rad = self.signs.values(lo, hi);
                let lam = self.lambdas.values(lo, hi);
                (lo..=hi)
                    .zip(rad.into_iter().zip(lam))
                    .map(|(y, (r, l))| {
                        let p = perturbation_probability(self.spec.c, self.spec.beta, y).expect("validated");
                        let o = if unit_f64(l) < p { Orientation::from_bit(r) } else { self.periodic_value(y) };
                        o.sign() as i8
                    })
                    .collect()
            }
        }
    }

    /// Largest `|y|` in `-radius..=radius` with λ_y = 1, or `None` if no row is perturbed.
    pub fn max_perturbed_level(&self, radius: u64) -> Option<u64> {
        if self.spec.regime != Regime::Perturbed {
            return None;
        }
        let r = radius as i64;
        let lam = self.lambdas.values(-r, r);
        (-r..=r)
            .zip(lam)
            .filter(|&(y, l)| {
                unit_f64(l) < perturbation_probability(self.spec.c, self.spec.beta, y).expect("validated")
            })
            .map(|(y, _)| y.unsigned_abs())
            .max()
    }

    pub fn materialize(&self, y_min: i64, y_max: i64) -> Result<OrientationTable, EnvError> {
        if y_min > y_max {
            return Err(EnvError::RangeError { y_min, y_max });
        }
        let rows: Vec<(i64, Orientation)> = (y_min..=y_max)
            .zip(self.signs(y_min, y_max))
            .map(|(y, s)| (y, Orientation::from_sign(s as i64).expect("sign")))
            .collect();
        Ok(OrientationTable::new(rows))
    }

    pub fn digest(&self) -> String {
        self.spec.digest()
    }
}

/// Materialized orientations with a content digest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrientationTable {
    pub rows: Vec<(i64, Orientation)>,
    pub digest: String,
}

impl OrientationTable {
    fn new(rows: Vec<(i64, Orientation)>) -> Self {
        let digest = hex_digest(Self::body(&rows).as_bytes());
        Self { rows, digest }
    }

    fn body(rows: &[(i64, Orientation)]) -> String {
        let mut s = String::from("y,orientation\n");
        for (y, o) in rows {
            s.push_str(&format!("{y},{o}\n"));
        }
        s
    }

    /// CSV body with header `y,orientation` and a trailing `# digest=sha256:<hex>` line.
    pub fn to_csv(&self) -> String {
        let mut s = Self::body(&self.rows);
        s.push_str(&format!("# digest=sha256:{}\n", self.digest));
        s
    }

    /// Parse the CSV form, checking the trailing digest.
    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut rows = Vec::new();
        let mut digest = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line == "y,orientation" {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# digest=sha256:") {
                digest = Some(rest.to_string());
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let (y, o) = line.split_once(',').ok_or_else(|| format!("bad row {line:?}"))?;
            let y: i64 = y.parse().map_err(|_| format!("bad level {y:?}"))?;
            let o: i64 = o.trim_start_matches('+').parse().map_err(|_| format!("bad orientation {o:?}"))?;
            rows.push((y, Orientation::try_from(o)?));
        }
        let table = Self::new(rows);
        match digest {
            Some(d) if d == table.digest => Ok(table),
            Some(d) => Err(format!("digest mismatch: file says {d}, content hashes to {}", table.digest)),
            None => Err("missing digest line".into()),
        }
    }
}

/// Growable window of orientation signs for hot loops.
pub struct OrientationCache<'a> {
    env: &'a Environment,
    lo: i64,
    signs: Vec<i8>,
}

impl<'a> OrientationCache<'a> {
    pub fn new(env: &'a Environment, radius: i64) -> Self {
        let radius = radius.max(1);
        Self { env, lo: -radius, signs: env.signs(-radius, radius) }
    }

    #[inline]
    pub fn sign(&mut self, y: i64) -> i64 {
        let idx = y - self.lo;
        if idx < 0 || idx >= self.signs.len() as i64 {
            self.grow(y);
            return self.sign(y);
        }
        self.signs[idx as usize] as i64
    }

    fn grow(&mut self, y: i64) {
        let hi = self.lo + self.signs.len() as i64 - 1;
        let radius = (2 * self.lo.abs().max(hi.abs())).max(y.abs() + 1);
        self.lo = -radius;
        self.signs = self.env.signs(-radius, radius);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Orientation::{Left as L, Right as R};

    #[test]
    fn validate_examples() {
        assert!(EnvironmentSpec::periodic(vec![R, L]).validate().is_ok());
        assert_eq!(EnvironmentSpec::periodic(vec![R, R]).validate(), Err(EnvError::NonZeroSum(2)));
        assert!(matches!(EnvironmentSpec::periodic(vec![R, L, R]).validate(), Err(EnvError::InvalidPeriod(_))));
        let mut s = EnvironmentSpec::periodic(vec![R, L]);
        s.period = 3;
        assert!(matches!(s.validate(), Err(EnvError::InvalidPeriod(_))));
        s.period = 1;
        assert!(matches!(s.validate(), Err(EnvError::InvalidPeriod(_))));
        assert!(matches!(
            EnvironmentSpec::perturbed(1, vec![R, L], -0.5, 1.0).validate(),
            Err(EnvError::InvalidParam(_))
        ));
        assert!(matches!(
            EnvironmentSpec::perturbed(1, vec![R, L], 0.5, 0.0).validate(),
            Err(EnvError::InvalidParam(_))
        ));
    }

    #[test]
    fn periodic_negative_levels() {
        let env = Environment::new(EnvironmentSpec::alternating()).unwrap();
        assert_eq!(env.orientation(-3), L);
        let t = env.materialize(0, 3).unwrap();
        assert_eq!(t.rows, vec![(0, R), (1, L), (2, R), (3, L)]);
        for y in -20..20 {
            assert_eq!(env.orientation(y), env.orientation(y + 2));
        }
    }

    #[test]
    fn perturbation_probability_examples() {
        assert_eq!(perturbation_probability(1.0, 2.0, 4).unwrap(), 1.0 / 16.0);
        assert_eq!(perturbation_probability(1.0, 2.0, -4).unwrap(), 1.0 / 16.0);
        assert_eq!(perturbation_probability(5.0, 1.0, 2).unwrap(), 1.0);
        assert_eq!(perturbation_probability(0.5, 1.5, 0).unwrap(), 0.5);
        assert!(perturbation_probability(-1.0, 1.5, 3).is_err());
        assert!(perturbation_probability(1.0, 0.0, 3).is_err());
    }

    #[test]
    fn perturbed_with_zero_c_is_periodic() {
        let f = vec![R, R, L, L];
        let per = Environment::new(EnvironmentSpec::periodic(f.clone())).unwrap();
        let pert = Environment::new(EnvironmentSpec::perturbed(9, f, 0.0, 1.5)).unwrap();
        for y in -200..200 {
            assert_eq!(per.orientation(y), pert.orientation(y));
            assert!(!pert.is_perturbed(y));
        }
        assert_eq!(per.signs(-200, 199), pert.signs(-200, 199));
    }

    #[test]
    fn perturbed_with_certain_lambda_is_rademacher() {
        let rad = Environment::new(EnvironmentSpec::rademacher(11)).unwrap();
        let pert = Environment::new(EnvironmentSpec::perturbed(11, vec![R, L], 1.0e9, 0.5)).unwrap();
        for y in -500..500 {
            assert_eq!(rad.orientation(y), pert.orientation(y));
        }
    }

    #[test]
    fn rademacher_order_independence() {
        let env = Environment::new(EnvironmentSpec::rademacher(5)).unwrap();
        let first = env.orientation(5);
        let _ = env.orientation(7);
        assert_eq!(env.orientation(5), first);
        let bulk = env.signs(-50, 50);
        for (i, y) in (-50..=50).rev().enumerate() {
            assert_eq!(bulk[100 - i] as i64, env.orientation(y).sign());
        }
        assert_eq!(env.materialize(0, 10).unwrap(), env.materialize(0, 10).unwrap());
    }

    #[test]
    fn bulk_lookups_match_single_rows() {
        let env =
            Environment::new(EnvironmentSpec::perturbed(3, vec![Orientation::Right, Orientation::Left], 2.0, 1.0))
                .unwrap();
        let flags = env.perturbed_flags(-40, 40);
        let signs = env.signs(-40, 40);
        for (i, y) in (-40..=40).enumerate() {
            assert_eq!(flags[i], env.is_perturbed(y));
            assert_eq!(signs[i] as i64, env.orientation(y).sign());
        }
        assert!(flags.iter().any(|&f| f));
        assert!(Environment::new(EnvironmentSpec::alternating()).unwrap().perturbed_flags(0, 3).iter().all(|&f| !f));
    }

    #[test]
    fn table_csv_digest_roundtrip() {
        let env = Environment::new(EnvironmentSpec::perturbed(7, vec![R, L], 1.0, 2.0)).unwrap();
        let t = env.materialize(-100, 100).unwrap();
        let csv = t.to_csv();
        assert!(csv.starts_with("y,orientation\n"));
        assert_eq!(OrientationTable::from_csv(&csv).unwrap(), t);
        let row = format!("\n0,{}\n", env.orientation(0));
        let flipped_row = format!("\n0,{}\n", if env.orientation(0) == R { L } else { R });
        let tampered = csv.replacen(&row, &flipped_row, 1);
        assert_ne!(tampered, csv);
        assert!(OrientationTable::from_csv(&tampered).is_err());
    }

    #[test]
    fn spec_json_field_names() {
        let s = EnvironmentSpec::perturbed(7, vec![R, L], 1.0, 2.0);
        let v: serde_json::Value = serde_json::to_value(&s).unwrap();
        assert_eq!(v["regime"], "perturbed");
        assert_eq!(v["Q"], 2);
        assert_eq!(v["f"], serde_json::json!([1, -1]));
        let back: EnvironmentSpec = serde_json::from_value(v).unwrap();
        assert_eq!(back, s);
        let bad = serde_json::from_str::<EnvironmentSpec>(r#"{"regime":"periodic","Q":2,"f":[1,0]}"#);
        assert!(bad.is_err());
        let rad: EnvironmentSpec = serde_json::from_str(r#"{"regime":"Rademacher","seed":3}"#).unwrap();
        assert_eq!(rad, EnvironmentSpec::rademacher(3));
    }

    #[test]
    fn cache_agrees_with_direct_queries() {
        let env = Environment::new(EnvironmentSpec::rademacher(99)).unwrap();
        let mut cache = OrientationCache::new(&env, 4);
        for y in [0, 3, -4, 17, -130, 2000, 5] {
            assert_eq!(cache.sign(y), env.orientation(y).sign());
        }
    }

    #[test]
    fn parse_table_tokens() {
        assert_eq!(parse_table("+1,-1").unwrap(), vec![R, L]);
        assert!(parse_table("+1,0").is_err());
    }
}
