//! Small statistics helpers: power-law fits and two test statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

/// `p ≈ e^a n^{-exponent}` fitted by least squares on `(ln n, ln p)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub intercept: f64,
    /// 95% interval for the exponent
    pub ci_low: f64,
    pub ci_high: f64,
    pub points: usize,
}

/// Fits the points with `n` in the upper half of the grid. Points with
/// non-positive `p` are skipped. Needs at least three usable points for an
/// interval; with two, the interval is infinite.
pub fn fit_power_law(ns: &[f64], ps: &[f64]) -> Option<PowerFit> {
    let m = ns.len().min(ps.len());
    let start = m / 2;
    let pts: Vec<(f64, f64)> =
        (start..m).filter(|&i| ps[i] > 0.0 && ns[i] > 0.0).map(|i| (ns[i].ln(), ps[i].ln())).collect();
    let k = pts.len();
    if k < 2 {
        return None;
    }
    let kf = k as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / kf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / kf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (ci_low, ci_high) = if k >= 3 {
        let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        let se = (rss / (kf - 2.0) / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, kf - 2.0).map(|d| d.inverse_cdf(0.975)).unwrap_or(f64::INFINITY);
        (-slope - t * se, -slope + t * se)
    } else {
        (f64::NEG_INFINITY, f64::INFINITY)
    };
    Some(PowerFit { exponent: -slope, intercept, ci_low, ci_high, points: k })
}

/// Exact one-sided Wilcoxon signed-rank p-value for `median(d) > 0`.
/// Zeros are dropped and ties get mid-ranks.
pub fn wilcoxon_signed_rank_greater(diffs: &[f64]) -> f64 {
    let mut d: Vec<f64> = diffs.iter().copied().filter(|v| *v != 0.0 && v.is_finite()).collect();
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    // doubled mid-ranks keep everything integral
    let n = d.len();
    let mut ranks2 = vec![0u64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && d[j + 1].abs() == d[i].abs() {
            j += 1;
        }
        let r2 = (i + 1 + j + 1) as u64; // 2 × mean of ranks i+1..=j+1
        for r in &mut ranks2[i..=j] {
            *r = r2;
        }
        i = j + 1;
    }
    let observed: u64 = d.iter().zip(&ranks2).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let total: u64 = ranks2.iter().sum();
    // number of sign assignments reaching each doubled sum, as probabilities
    let mut dist = vec![0.0f64; total as usize + 1];
    dist[0] = 1.0;
    let mut reach = 0usize;
    for &r in &ranks2 {
        let r = r as usize;
        for s in (0..=reach).rev() {
            let v = dist[s] * 0.5;
            dist[s] = v;
            dist[s + r] += v;
        }
        reach += r;
    }
    dist[observed as usize..].iter().sum::<f64>().min(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Two-sample chi-square homogeneity test on integer-valued samples.
/// Adjacent values are pooled until each bin holds at least `min_bin`
/// observations of the two samples combined.
pub fn chi_square_two_sample(a: &[i64], b: &[i64], min_bin: u64) -> ChiSquareTest {
    let mut counts: BTreeMap<i64, (u64, u64)> = BTreeMap::new();
    for &v in a {
        counts.entry(v).or_default().0 += 1;
    }
    for &v in b {
        counts.entry(v).or_default().1 += 1;
    }
    let mut bins: Vec<(u64, u64)> = Vec::new();
    let mut cur = (0u64, 0u64);
    for &(x, y) in counts.values() {
        cur.0 += x;
        cur.1 += y;
        if cur.0 + cur.1 >= min_bin {
            bins.push(cur);
            cur = (0, 0);
        }
    }
    if cur.0 + cur.1 > 0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += cur.0;
                last.1 += cur.1;
            }
            None => bins.push(cur),
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ka, kb) = ((nb / na).sqrt(), (na / nb).sqrt());
    let statistic: f64 = bins
        .iter()
        .map(|&(x, y)| {
            let (x, y) = (x as f64, y as f64);
            (ka * x - kb * y).powi(2) / (x + y)
        })
        .sum();
    let dof = bins.len().saturating_sub(1);
    let p_value = if dof == 0 { 1.0 } else { ChiSquared::new(dof as f64).map(|c| c.sf(statistic)).unwrap_or(f64::NAN) };
    ChiSquareTest { statistic, dof, p_value }
}

/// `sqrt(p(1-p)/n)`
pub fn binomial_stderr(p: f64, n: u64) -> f64 {
    if n == 0 {
        f64::NAN
    } else {
        (p * (1.0 - p) / n as f64).sqrt()
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_recovered() {
        let ns: Vec<f64> = (1..=20).map(|i| 10.0 * i as f64).collect();
        let ps: Vec<f64> = ns.iter().map(|n| 3.0 * n.powf(-1.25)).collect();
        let f = fit_power_law(&ns, &ps).unwrap();
        assert!((f.exponent - 1.25).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-10);
        assert_eq!(f.points, 10);
        assert!(f.ci_high - f.ci_low < 1e-9);
    }

    #[test]
    fn wilcoxon_small_cases() {
        // all positive among n = 5: only one of 32 sign patterns is as extreme
        assert!((wilcoxon_signed_rank_greater(&[1.0, 2.0, 3.0, 4.0, 5.0]) - 1.0 / 32.0).abs() < 1e-15);
        assert!((wilcoxon_signed_rank_greater(&[-1.0, -2.0, -3.0]) - 1.0).abs() < 1e-15);
        // W+ = 2 + 3 = 5 with ranks {1,2,3}: sums ≥ 5 are {2,3} and {1,2,3}
        assert!((wilcoxon_signed_rank_greater(&[-1.0, 2.0, 3.0]) - 2.0 / 8.0).abs() < 1e-15);
        assert_eq!(wilcoxon_signed_rank_greater(&[0.0, 0.0]), 1.0);
    }

    #[test]
    fn wilcoxon_twenty_positive() {
        let d: Vec<f64> = (1..=20).map(|i| i as f64 * 0.01).collect();
        assert!((wilcoxon_signed_rank_greater(&d) - 0.5f64.powi(20)).abs() < 1e-18);
    }

    #[test]
    fn chi_square_identical_samples() {
        let a: Vec<i64> = (0..1000).map(|i| i % 7).collect();
        let t = chi_square_two_sample(&a, &a, 10);
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.dof, 6);
        assert!((t.p_value - 1.0).abs() < 1e-12);
        let b: Vec<i64> = (0..1000).map(|i| i % 5).collect();
        assert!(chi_square_two_sample(&a, &b, 10).p_value < 1e-10);
    }

    #[test]
    fn median_values() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
