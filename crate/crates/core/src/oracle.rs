//! Exact dynamic programs used as ground truth for the simulations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedded::{pmf, GeomKind};
use crate::environment::Environment;
use crate::lattice_walk::{vertical_neighbor, Vertex};
use crate::output::fmt_f64;
use crate::rng::BitSource;
use crate::skeleton::{Direction, SkeletonState, PERSISTENCE};

const Q: f64 = PERSISTENCE;
/// Upper bound on live cells of any grid.
pub const CELL_LIMIT: usize = 1 << 26;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("ResourceLimit: {dimension} needs {requested}, limit is {limit}")]
    ResourceLimit { dimension: String, requested: u128, limit: u128 },
    #[error("TailTolTooLoose: tail_tol = {0:e}, must lie in (0, 1e-6]")]
    TailTolTooLoose(f64),
    #[error("InvalidArgument: {0}")]
    InvalidArgument(String),
}

fn check_cells(dimension: &str, requested: u128) -> Result<(), OracleError> {
    if requested > CELL_LIMIT as u128 {
        return Err(OracleError::ResourceLimit { dimension: dimension.into(), requested, limit: CELL_LIMIT as u128 });
    }
    Ok(())
}

/// Dense mass array over `x0.. x0+nx`, `y0 .. y0+ny` and `layers` values
/// of ν (index 0 is ν = -1, index 1 is ν = +1 when `layers == 2`).
#[derive(Clone, Debug, PartialEq)]
pub struct DistributionGrid {
    pub x0: i64,
    pub y0: i64,
    pub nx: usize,
    pub ny: usize,
    pub layers: usize,
    pub mass: Vec<f64>,
    /// mass dropped by truncation
    pub deficit: f64,
}

impl DistributionGrid {
    pub fn zeros(x0: i64, y0: i64, nx: usize, ny: usize, layers: usize) -> Self {
        Self { x0, y0, nx, ny, layers, mass: vec![0.0; nx * ny * layers], deficit: 0.0 }
    }

    fn index(&self, x: i64, y: i64, layer: usize) -> Option<usize> {
        let (i, j) = (x - self.x0, y - self.y0);
        if i < 0 || j < 0 || i as usize >= self.nx || j as usize >= self.ny || layer >= self.layers {
            return None;
        }
        Some((layer * self.ny + j as usize) * self.nx + i as usize)
    }

    pub fn get(&self, x: i64, y: i64, layer: usize) -> f64 {
        self.index(x, y, layer).map_or(0.0, |i| self.mass[i])
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Skeleton grids: mass of `(y, ν)`.
    pub fn skeleton_mass(&self, y: i64, nu: Direction) -> f64 {
        let layer = if self.layers == 2 && nu == Direction::Up { 1 } else { 0 };
        self.get(self.x0, y, layer)
    }

    /// Sparse `x,y,mass` listing, summed over layers.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,mass\n");
        for j in 0..self.ny {
            for i in 0..self.nx {
                let m: f64 = (0..self.layers).map(|l| self.mass[(l * self.ny + j) * self.nx + i]).sum();
                if m != 0.0 {
                    s.push_str(&format!("{},{},{}\n", self.x0 + i as i64, self.y0 + j as i64, fmt_f64(m)));
                }
            }
        }
        s
    }
}

// ---------------------------------------------------------------- skeleton

/// One skeleton step on windowed arrays indexed by `y + off`.
/// `up`/`down` hold the masses at ν = +1 / ν = -1.
fn skeleton_step(up: &[f64], down: &[f64], nup: &mut [f64], ndown: &mut [f64], lo: usize, hi: usize) {
    nup.iter_mut().for_each(|v| *v = 0.0);
    ndown.iter_mut().for_each(|v| *v = 0.0);
    for i in lo..=hi {
        let (u, d) = (up[i], down[i]);
        if u == 0.0 && d == 0.0 {
            continue;
        }
        nup[i + 1] += Q * u + (1.0 - Q) * d;
        ndown[i - 1] += Q * d + (1.0 - Q) * u;
    }
}

/// Exact law of `(Y_n, ν_n)` from `(0, +1)` as a grid with `nx = 1` and two layers.
pub fn skeleton_distribution_exact(n: usize) -> Result<DistributionGrid, OracleError> {
    let width = 2 * n + 3;
    check_cells("skeleton states x steps", (width as u128) * (n as u128 + 1) / 64)?;
    let off = n + 1;
    let (mut up, mut down) = (vec![0.0; width], vec![0.0; width]);
    let (mut nup, mut ndown) = (vec![0.0; width], vec![0.0; width]);
    up[off] = 1.0;
    for k in 0..n {
        skeleton_step(&up, &down, &mut nup, &mut ndown, off - k, off + k);
        std::mem::swap(&mut up, &mut nup);
        std::mem::swap(&mut down, &mut ndown);
    }
    let mut g = DistributionGrid::zeros(0, -(off as i64), 1, width, 2);
    g.mass[..width].copy_from_slice(&down);
    g.mass[width..].copy_from_slice(&up);
    Ok(g)
}

/// `P(Y_k = 0)` from `(0, +1)`, dropping states that can no longer reach 0.
pub fn level_return_probability(k: usize) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let width = k + 3;
    let off = k / 2 + 1;
    let (mut up, mut down) = (vec![0.0; width], vec![0.0; width]);
    let (mut nup, mut ndown) = (vec![0.0; width], vec![0.0; width]);
    up[off] = 1.0;
    for j in 0..k {
        let r = j.min(k - j);
        skeleton_step(&up, &down, &mut nup, &mut ndown, off - r, off + r);
        std::mem::swap(&mut up, &mut nup);
        std::mem::swap(&mut down, &mut ndown);
    }
    up[off] + down[off]
}

/// `P(Y_k = 0, ν_k = +1)` for `k = 0..=k_max` by forward iteration.
pub fn diagonal_return_dp(k_max: usize) -> Vec<f64> {
    let width = 2 * k_max + 3;
    let off = k_max + 1;
    let (mut up, mut down) = (vec![0.0; width], vec![0.0; width]);
    let (mut nup, mut ndown) = (vec![0.0; width], vec![0.0; width]);
    up[off] = 1.0;
    let mut out = Vec::with_capacity(k_max + 1);
    out.push(1.0);
    for k in 0..k_max {
        // states beyond distance k_max - k cannot come back in time
        let r = k.min(k_max - k);
        skeleton_step(&up, &down, &mut nup, &mut ndown, off - r, off + r);
        std::mem::swap(&mut up, &mut nup);
        std::mem::swap(&mut down, &mut ndown);
        out.push(up[off]);
    }
    out
}

/// `P(max_{k ≤ t} |Y_k| ≥ a | Y_t = 0)`, by killing mass on `|y| = a`.
pub fn level_exit_probability(t: usize, a: usize) -> f64 {
    let total = level_return_probability(t);
    if a == 0 {
        return 1.0;
    }
    let width = 2 * a + 3;
    let off = a + 1;
    let (mut up, mut down) = (vec![0.0; width], vec![0.0; width]);
    let (mut nup, mut ndown) = (vec![0.0; width], vec![0.0; width]);
    up[off] = 1.0;
    for _ in 0..t {
        skeleton_step(&up, &down, &mut nup, &mut ndown, 1, width - 2);
        std::mem::swap(&mut up, &mut nup);
        std::mem::swap(&mut down, &mut ndown);
        for i in [off - a, off + a] {
            up[i] = 0.0;
            down[i] = 0.0;
        }
    }
    let inside = up[off] + down[off];
    (1.0 - inside / total).max(0.0)
}

// ---------------------------------------------------------------- full walk

/// Exact quenched `P(M_t = (0,0))` for `t = 0..=t_max`.
pub fn full_walk_distribution(env: &Environment, t_max: usize) -> Result<Vec<f64>, OracleError> {
    let w = 2 * t_max + 3;
    check_cells("full-walk grid cells", (w as u128) * (w as u128))?;
    let r = t_max as i64 + 1;
    let signs = env.signs(-r, r);
    let idx = |x: i64, y: i64| ((y + r) as usize) * w + (x + r) as usize;
    let mut cur = vec![0.0; w * w];
    let mut next = vec![0.0; w * w];
    cur[idx(0, 0)] = 1.0;
    let mut out = Vec::with_capacity(t_max + 1);
    out.push(1.0);
    for t in 0..t_max as i64 {
        next.iter_mut().for_each(|v| *v = 0.0);
        for y in -t..=t {
            let e = signs[(y + r) as usize] as i64;
            for x in -t..=t {
                let m = cur[idx(x, y)];
                if m == 0.0 {
                    continue;
                }
                next[idx(x + e, y)] += 0.5 * m;
                let v = vertical_neighbor(Vertex::new(x, y));
                next[idx(v.x, v.y)] += 0.5 * m;
            }
        }
        std::mem::swap(&mut cur, &mut next);
        out.push(cur[idx(0, 0)]);
    }
    Ok(out)
}

/// `P(M = (0,0)` at the `k`-th vertical move`)` by unrolling the walk in
/// time over `(x, y, vertical count)`. Returns the probability and the mass
/// still short of `k` vertical moves when the horizon ran out.
pub fn vertical_time_return_exact(env: &Environment, k: usize) -> Result<(f64, f64), OracleError> {
    if k == 0 {
        return Ok((1.0, 0.0));
    }
    let t_max = 64 + 16 * k;
    let rx = t_max as i64 + 1;
    let ry = k as i64 + 1;
    let (wx, wy) = (2 * rx as usize + 1, 2 * ry as usize + 1);
    check_cells("unrolled walk cells", (wx * wy * k) as u128)?;
    let signs = env.signs(-ry, ry);
    let idx = |c: usize, x: i64, y: i64| (c * wy + (y + ry) as usize) * wx + (x + rx) as usize;
    let mut cur = vec![0.0; wx * wy * k];
    let mut next = vec![0.0; wx * wy * k];
    cur[idx(0, 0, 0)] = 1.0;
    let mut hit = 0.0;
    let mut live = 1.0;
    for t in 0..t_max as i64 {
        if live < 1e-17 {
            break;
        }
        next.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..k {
            let ylim = (c as i64).min(ry - 1);
            for y in -ylim..=ylim {
                let e = signs[(y + ry) as usize] as i64;
                for x in -t..=t {
                    let m = cur[idx(c, x, y)];
                    if m == 0.0 {
                        continue;
                    }
                    next[idx(c, x + e, y)] += 0.5 * m;
                    let v = vertical_neighbor(Vertex::new(x, y));
                    if c + 1 == k {
                        if v == Vertex::ORIGIN {
                            hit += 0.5 * m;
                        }
                    } else {
                        next[idx(c + 1, v.x, v.y)] += 0.5 * m;
                    }
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
        live = cur.iter().sum();
    }
    Ok((hit, live))
}

// ---------------------------------------------------------------- joint (X, Y, ν)

#[derive(Clone, Debug, Default)]
struct Row {
    x0: i64,
    v: Vec<f64>,
}

impl Row {
    fn mass(&self) -> f64 {
        self.v.iter().sum()
    }

    fn at(&self, x: i64) -> f64 {
        let i = x - self.x0;
        if i < 0 || i as usize >= self.v.len() {
            0.0
        } else {
            self.v[i as usize]
        }
    }
}

#[inline]
fn get0(v: &[f64], i: isize) -> f64 {
    if i < 0 {
        0.0
    } else {
        v[i as usize]
    }
}

/// Even-geometric convolution in the `+x` direction:
/// `E[x] = 3/4 in[x] + 1/4 E[x-2]`, extended until the exact remaining tail
/// `(E[L] + E[L-1]) / 3` is at most `tail_budget`. Returns the tail dropped.
fn even_conv_forward(input: &[f64], tail_budget: f64) -> (Vec<f64>, f64) {
    let mut out = Vec::with_capacity(input.len() + 48);
    for (i, &a) in input.iter().enumerate() {
        let prev = get0(&out, i as isize - 2);
        out.push(0.75 * a + 0.25 * prev);
    }
    loop {
        let l = out.len() as isize - 1;
        let tail = (get0(&out, l) + get0(&out, l - 1)) / 3.0;
        if tail <= tail_budget {
            return (out, tail);
        }
        let next = 0.25 * get0(&out, l - 1);
        out.push(next);
    }
}

/// Drops leading and trailing cells whose cumulative mass fits the budget.
fn trim(row: &mut Row, side_budget: f64) -> f64 {
    let mut dropped = 0.0;
    let mut acc = 0.0;
    let mut lead = 0;
    while lead < row.v.len() && acc + row.v[lead] <= side_budget {
        acc += row.v[lead];
        lead += 1;
    }
    dropped += acc;
    let mut acc = 0.0;
    let mut end = row.v.len();
    while end > lead && acc + row.v[end - 1] <= side_budget {
        acc += row.v[end - 1];
        end -= 1;
    }
    dropped += acc;
    row.v.truncate(end);
    row.v.drain(..lead);
    row.x0 += lead as i64;
    dropped
}

/// Destination row from its two sources at level `s` with orientation `e`:
/// `EvenConv_e((2/3) turn + (1/3) shift_e(keep))`.
fn advance_row(turn: Option<&Row>, keep: Option<&Row>, e: i64, budget: f64) -> (Option<Row>, f64) {
    let mut lo = i64::MAX;
    let mut hi = i64::MIN;
    if let Some(r) = turn {
        lo = lo.min(r.x0);
        hi = hi.max(r.x0 + r.v.len() as i64 - 1);
    }
    if let Some(r) = keep {
        lo = lo.min(r.x0 + e);
        hi = hi.max(r.x0 + e + r.v.len() as i64 - 1);
    }
    if lo > hi {
        return (None, 0.0);
    }
    let len = (hi - lo + 1) as usize;
    let mut input = vec![0.0; len];
    if let Some(r) = turn {
        let s = (r.x0 - lo) as usize;
        for (i, &m) in r.v.iter().enumerate() {
            input[s + i] += (1.0 - Q) * m;
        }
    }
    if let Some(r) = keep {
        let s = (r.x0 + e - lo) as usize;
        for (i, &m) in r.v.iter().enumerate() {
            input[s + i] += Q * m;
        }
    }
    let total: f64 = input.iter().sum();
    if total <= budget {
        return (None, total);
    }
    let mut row = if e > 0 {
        let (v, tail) = even_conv_forward(&input, budget / 2.0);
        (Row { x0: lo, v }, tail)
    } else {
        input.reverse();
        let (mut v, tail) = even_conv_forward(&input, budget / 2.0);
        v.reverse();
        let x0 = hi - (v.len() as i64 - 1);
        (Row { x0, v }, tail)
    };
    let dropped = trim(&mut row.0, budget / 4.0);
    let deficit = row.1 + dropped;
    if row.0.v.is_empty() {
        (None, deficit)
    } else {
        (Some(row.0), deficit)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointPn {
    pub n: usize,
    /// `P(X_{2n} = 0, Y_{2n} = 0)`
    pub p: f64,
    /// `P(Y_{2n} = 0)` as carried by the grid
    pub y_return: f64,
    /// total mass dropped so far, an upper bound on the error of `p`
    pub deficit: f64,
}

pub fn validate_tail_tol(tail_tol: f64) -> Result<(), OracleError> {
    if !(tail_tol > 0.0 && tail_tol <= 1e-6) {
        return Err(OracleError::TailTolTooLoose(tail_tol));
    }
    Ok(())
}

/// `p_n` for every `n = 1..=n_max` in one forward pass over `(x, y, ν)`.
///
/// Each macro-step moves the mass at `(y, ν)` to `(y+ν, ν)` with an odd
/// jump (prob. 1/3) or to `(y-ν, -ν)` with an even jump (prob. 2/3), the jump
/// signed by the orientation of `y`. The jump convolution is exact; mass is
/// only lost at the far ends of rows, with total loss at most `tail_tol`.
pub fn joint_pn_series(env: &Environment, n_max: usize, tail_tol: f64) -> Result<Vec<JointPn>, OracleError> {
    validate_tail_tol(tail_tol)?;
    if n_max == 0 {
        return Err(OracleError::InvalidArgument("n must be at least 1".into()));
    }
    let steps = 2 * n_max;
    let ymax = steps as i64 + 1;
    let levels = (2 * ymax + 1) as usize;
    check_cells("joint rows", 2 * levels as u128)?;
    let signs = env.signs(-ymax, ymax);
    let lvl = |y: i64| (y + ymax) as usize;
    let budget = tail_tol / (2.0 * levels as f64 * steps as f64);

    // rows[ν index][level], ν index 0 is -1
    let mut rows: [Vec<Option<Row>>; 2] = [vec![None; levels], vec![None; levels]];
    rows[1][lvl(0)] = Some(Row { x0: 0, v: vec![1.0] });
    let mut deficit = 0.0;
    let mut out = Vec::with_capacity(n_max);

    for k in 0..steps {
        let reach = (steps - k - 1) as i64;
        let span = (k as i64 + 1).min(reach);
        // destinations at time k+1 share the parity of k+1
        let dests: Vec<(i64, usize)> = (-span..=span)
            .filter(|y| (y - (k as i64 + 1)).rem_euclid(2) == 0)
            .flat_map(|y| [(y, 0usize), (y, 1usize)])
            .collect();
        let results: Vec<(i64, usize, Option<Row>, f64)> = dests
            .par_iter()
            .map(|&(y, nu_i)| {
                let nu = if nu_i == 1 { 1 } else { -1 };
                let s = y - nu;
                if s.abs() > k as i64 {
                    return (y, nu_i, None, 0.0);
                }
                let e = signs[lvl(s)] as i64;
                let keep = rows[nu_i][lvl(s)].as_ref();
                let turn = rows[1 - nu_i][lvl(s)].as_ref();
                let (row, d) = advance_row(turn, keep, e, budget);
                (y, nu_i, row, d)
            })
            .collect();
        // mass left on levels that can no longer return is dropped silently:
        // it cannot contribute to any p_n with n <= n_max
        let mut next: [Vec<Option<Row>>; 2] = [vec![None; levels], vec![None; levels]];
        let mut cells = 0usize;
        for (y, nu_i, row, d) in results {
            deficit += d;
            if let Some(r) = row {
                cells += r.v.len();
                next[nu_i][lvl(y)] = Some(r);
            }
        }
        check_cells("joint grid cells", cells as u128)?;
        rows = next;
        if (k + 1) % 2 == 0 {
            let n = k.div_ceil(2);
            let (mut p, mut yr) = (0.0, 0.0);
            for side in &rows {
                if let Some(r) = &side[lvl(0)] {
                    p += r.at(0);
                    yr += r.mass();
                }
            }
            out.push(JointPn { n, p, y_return: yr, deficit });
        }
    }
    Ok(out)
}

pub fn joint_pn_exact(env: &Environment, n: usize, tail_tol: f64) -> Result<JointPn, OracleError> {
    Ok(*joint_pn_series(env, n, tail_tol)?.last().expect("n >= 1"))
}

// ---------------------------------------------------------------- fixed path

/// Law of `X` along a fixed skeleton path.
#[derive(Clone, Debug, PartialEq)]
pub struct XDistribution {
    pub x0: i64,
    pub mass: Vec<f64>,
    pub deficit: f64,
}

impl XDistribution {
    pub fn prob(&self, x: i64) -> f64 {
        let i = x - self.x0;
        if i < 0 || i as usize >= self.mass.len() {
            0.0
        } else {
            self.mass[i as usize]
        }
    }
}

/// Direct-summation convolution of the signed jumps along `path`, each jump
/// law truncated after `K` terms with `(1/4)^K <= tail_tol`.
pub fn fixed_path_x_distribution(
    path: &[SkeletonState],
    env: &Environment,
    tail_tol: f64,
) -> Result<XDistribution, OracleError> {
    if !(tail_tol > 0.0 && tail_tol < 1.0) {
        return Err(OracleError::TailTolTooLoose(tail_tol));
    }
    let k_terms = (tail_tol.ln() / 0.25f64.ln()).ceil().max(1.0) as u64;
    let mut d = XDistribution { x0: 0, mass: vec![1.0], deficit: 0.0 };
    for w in path.windows(2) {
        let kind = if w[0].nu == w[1].nu { GeomKind::Odd } else { GeomKind::Even };
        let e = env.orientation(w[0].y).sign();
        let reach = 2 * k_terms as i64;
        check_cells("fixed-path support", (d.mass.len() as u128) + reach as u128)?;
        let mut next = vec![0.0; d.mass.len() + reach as usize + 1];
        let x0 = if e > 0 { d.x0 } else { d.x0 - reach };
        for (i, &m) in d.mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let x = d.x0 + i as i64;
            for j in 0..k_terms {
                let xn = x + e * kind.value(j) as i64;
                next[(xn - x0) as usize] += m * pmf(kind, j);
            }
        }
        let total: f64 = d.mass.iter().sum();
        d.deficit += total * 0.25f64.powi(k_terms as i32);
        d.x0 = x0;
        d.mass = next;
    }
    Ok(d)
}

// ---------------------------------------------------------------- W̄ chain

/// State of the pair chain reduced mod `Q`: `(ȳ, ν; ȳ', ν')` with `ȳ' = ȳ + ν'`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WbarState {
    pub ybar: usize,
    pub nu: i8,
    pub ybar_next: usize,
    pub nu_next: i8,
}

impl WbarState {
    pub fn persists(&self) -> bool {
        self.nu == self.nu_next
    }
}

fn wbar_index(ybar: usize, nu: i8, nu2: i8) -> usize {
    (ybar * 2 + usize::from(nu > 0)) * 2 + usize::from(nu2 > 0)
}

pub fn wbar_states(q: usize) -> Vec<WbarState> {
    let mut out = Vec::with_capacity(4 * q);
    for ybar in 0..q {
        for nu in [-1i8, 1] {
            for nu2 in [-1i8, 1] {
                let ybar_next = (ybar as i64 + nu2 as i64).rem_euclid(q as i64) as usize;
                out.push(WbarState { ybar, nu, ybar_next, nu_next: nu2 });
            }
        }
    }
    out
}

/// Stationary law: `(2/3)/(2Q)` on direction changes and `(1/3)/(2Q)` on
/// persistence.
pub fn wbar_stationary(q: usize) -> Vec<f64> {
    wbar_states(q).iter().map(|s| if s.persists() { Q / (2 * q) as f64 } else { (1.0 - Q) / (2 * q) as f64 }).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct WbarLaw {
    pub q: usize,
    pub n: usize,
    pub states: Vec<WbarState>,
    pub law_n: Vec<f64>,
    pub law_n1: Vec<f64>,
    /// average of the laws at `n` and `n + 1`
    pub averaged: Vec<f64>,
    pub stationary: Vec<f64>,
    /// total variation between `averaged` and `stationary`
    pub tv: f64,
}

fn wbar_step(q: usize, law: &[f64]) -> Vec<f64> {
    let mut next = vec![0.0; law.len()];
    for s in wbar_states(q) {
        let m = law[wbar_index(s.ybar, s.nu, s.nu_next)];
        if m == 0.0 {
            continue;
        }
        for nu3 in [-1i8, 1] {
            let p = if nu3 == s.nu_next { Q } else { 1.0 - Q };
            next[wbar_index(s.ybar_next, s.nu_next, nu3)] += p * m;
        }
    }
    next
}

/// Exact law of `W̄_n` from `W̄_0 = (Q-1, -1; 0, +1)`.
pub fn wbar_distribution_exact(q: usize, n: usize) -> Result<WbarLaw, OracleError> {
    if q < 2 || q % 2 == 1 {
        return Err(OracleError::InvalidArgument(format!("Q must be an even integer > 1, got {q}")));
    }
    let mut law = vec![0.0; 4 * q];
    law[wbar_index(q - 1, -1, 1)] = 1.0;
    for _ in 0..n {
        law = wbar_step(q, &law);
    }
    let law_n1 = wbar_step(q, &law);
    let averaged: Vec<f64> = law.iter().zip(&law_n1).map(|(a, b)| 0.5 * (a + b)).collect();
    let stationary = wbar_stationary(q);
    let tv = 0.5 * averaged.iter().zip(&stationary).map(|(a, b)| (a - b).abs()).sum::<f64>();
    Ok(WbarLaw { q, n, states: wbar_states(q), law_n: law, law_n1, averaged, stationary, tv })
}

// ---------------------------------------------------------------- bridges

/// End condition of a skeleton bridge of horizon `T`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BridgeEnd {
    /// `Y_T = 0`
    LevelZero,
    /// `(Y_{T-1}, ν_{T-1}; Y_T, ν_T) = (-1, -1; 0, +1)`, the initial pair
    PairReturn,
}

/// Skeleton paths conditioned on an end event, sampled exactly through the
/// backward table `h_k(y, ν) = P(end | state at time k)`.
pub struct SkeletonBridge {
    horizon: usize,
    /// per time: half-width and `[ν=-1, ν=+1]` values, each slice scaled to max 1
    h: Vec<(i64, Vec<[f64; 2]>)>,
    log_end_probability: f64,
}

impl SkeletonBridge {
    pub fn new(horizon: usize, end: BridgeEnd) -> Result<Self, OracleError> {
        if horizon == 0 || horizon % 2 == 1 {
            return Err(OracleError::InvalidArgument(format!(
                "bridge horizon must be even and positive, got {horizon}"
            )));
        }
        let t = horizon;
        let cells: u128 = (0..=t).map(|k| 2 * (k.min(t - k) as u128 + 2)).sum();
        check_cells("bridge table", cells)?;
        let width = |k: usize| k.min(t - k) as i64 + 1;
        let mut h: Vec<(i64, Vec<[f64; 2]>)> = vec![(0, Vec::new()); t + 1];
        let mut log_scale = 0.0;
        let w_t = width(t);
        let mut last = vec![[0.0; 2]; (2 * w_t + 1) as usize];
        match end {
            BridgeEnd::LevelZero => last[w_t as usize] = [1.0, 1.0],
            BridgeEnd::PairReturn => last[w_t as usize] = [0.0, 1.0],
        }
        h[t] = (w_t, last);
        for k in (0..t).rev() {
            let w = width(k);
            let (wn, ref nxt) = h[k + 1];
            let look = |y: i64, nu_i: usize| -> f64 {
                if y.abs() > wn {
                    0.0
                } else {
                    nxt[(y + wn) as usize][nu_i]
                }
            };
            let mut cur = vec![[0.0; 2]; (2 * w + 1) as usize];
            for y in -w..=w {
                for nu_i in 0..2 {
                    let nu = if nu_i == 1 { 1 } else { -1 };
                    let v = if end == BridgeEnd::PairReturn && k == t - 1 {
                        if y == -1 && nu == -1 {
                            (1.0 - Q) * look(0, 1)
                        } else {
                            0.0
                        }
                    } else {
                        Q * look(y + nu, nu_i) + (1.0 - Q) * look(y - nu, 1 - nu_i)
                    };
                    cur[(y + w) as usize][nu_i] = v;
                }
            }
            let m = cur.iter().flat_map(|a| a.iter()).fold(0.0f64, |a, &b| a.max(b));
            if m > 0.0 {
                cur.iter_mut().for_each(|a| {
                    a[0] /= m;
                    a[1] /= m;
                });
                log_scale += m.ln();
            }
            h[k] = (w, cur);
        }
        let (w0, ref h0) = h[0];
        let log_end_probability = h0[w0 as usize][1].ln() + log_scale;
        Ok(Self { horizon, h, log_end_probability })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Probability of the end event under the unconditioned chain.
    pub fn end_probability(&self) -> f64 {
        self.log_end_probability.exp()
    }

    fn value(&self, k: usize, y: i64, nu: Direction) -> f64 {
        let (w, ref v) = self.h[k];
        if y.abs() > w {
            0.0
        } else {
            v[(y + w) as usize][usize::from(nu == Direction::Up)]
        }
    }

    pub fn sample(&self, bits: &mut BitSource) -> Vec<SkeletonState> {
        let mut path = Vec::with_capacity(self.horizon + 1);
        let mut s = SkeletonState::START;
        path.push(s);
        for k in 0..self.horizon {
            let keep = SkeletonState::new(s.y + s.nu.sign(), s.nu);
            let turn = SkeletonState::new(s.y - s.nu.sign(), s.nu.flip());
            let wk = Q * self.value(k + 1, keep.y, keep.nu);
            let wt = (1.0 - Q) * self.value(k + 1, turn.y, turn.nu);
            s = if bits.unit() * (wk + wt) < wk { keep } else { turn };
            path.push(s);
        }
        path
    }
}
