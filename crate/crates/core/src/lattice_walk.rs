//! Honeycomb geometry and the simple random walk on the oriented lattice.
//!
//! Every vertex keeps all horizontal edges and exactly one vertical edge: the
//! edge to `(x, y+1)` when `x+y` is odd, to `(x, y-1)` when `x+y` is even.
//! Horizontal edges of row `y` only point in the row's orientation, so every
//! vertex has out-degree two and the walk picks either edge with probability ½.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{Environment, OrientationCache};
use crate::rng::{derive_seed, BitSource, TAG_WALK};
use crate::skeleton::{Direction, SkeletonState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Vertex {
    pub x: i64,
    pub y: i64,
}

impl Vertex {
    pub const ORIGIN: Vertex = Vertex { x: 0, y: 0 };

    pub fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }
}

/// The unique vertical neighbour of `v`.
#[inline]
pub fn vertical_neighbor(v: Vertex) -> Vertex {
    if (v.x + v.y).rem_euclid(2) == 1 {
        Vertex::new(v.x, v.y + 1)
    } else {
        Vertex::new(v.x, v.y - 1)
    }
}

/// Direction of the vertical edge at `v`.
#[inline]
pub fn vertical_direction(v: Vertex) -> Direction {
    if (v.x + v.y).rem_euclid(2) == 1 {
        Direction::Up
    } else {
        Direction::Down
    }
}

/// `[horizontal, vertical]` out-neighbours of `v`.
pub fn out_edges(v: Vertex, env: &Environment) -> [Vertex; 2] {
    [Vertex::new(v.x + env.orientation(v.y).sign(), v.y), vertical_neighbor(v)]
}

/// Per-walk counters, always recorded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub seed: u64,
    pub n_steps: u64,
    pub n_returns: u64,
    pub first_return: Option<u64>,
    pub n_vertical: u64,
}

/// Record of one walk started at the origin.
///
/// `vertical_positions[k]` is the lattice position right after the k-th
/// vertical move (index 0 is the first move). `skeleton_path` and
/// `embedded_values` are produced by the decomposition from horizontal run
/// lengths alone, so [`decompose_check`] compares two independent routes.
/// The lists are left empty when the walk is longer than
/// [`WalkOptions::detail_limit`]; the summary is always filled.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WalkTrace {
    pub start: Vertex,
    pub n_steps: u64,
    pub returns_to_origin: Vec<u64>,
    pub vertical_step_times: Vec<u64>,
    pub vertical_positions: Vec<Vertex>,
    pub skeleton_path: Vec<SkeletonState>,
    pub embedded_values: Vec<i64>,
    pub horizontal_runs: Vec<u64>,
    pub final_position: Vertex,
    pub summary: TraceSummary,
    pub detailed: bool,
}

#[derive(Clone, Debug)]
pub struct WalkOptions {
    /// Walks with more steps than this keep only the summary.
    pub detail_limit: u64,
}

impl Default for WalkOptions {
    fn default() -> Self {
        Self { detail_limit: 1 << 22 }
    }
}

pub fn simulate_walk(env: &Environment, n_steps: u64, walk_seed: u64) -> WalkTrace {
    simulate_walk_with(env, n_steps, walk_seed, &WalkOptions::default())
}

pub fn simulate_walk_with(env: &Environment, n_steps: u64, walk_seed: u64, opts: &WalkOptions) -> WalkTrace {
    let detailed = n_steps <= opts.detail_limit;
    let mut bits = BitSource::keyed(walk_seed, TAG_WALK);
    let mut orient = OrientationCache::new(env, 64);

    let mut pos = Vertex::ORIGIN;
    let mut trace = WalkTrace {
        start: pos,
        n_steps,
        returns_to_origin: Vec::new(),
        vertical_step_times: Vec::new(),
        vertical_positions: Vec::new(),
        skeleton_path: Vec::new(),
        embedded_values: Vec::new(),
        horizontal_runs: Vec::new(),
        final_position: pos,
        summary: TraceSummary { seed: walk_seed, n_steps, n_returns: 0, first_return: None, n_vertical: 0 },
        detailed,
    };

    // decomposition state, driven only by run lengths and row orientations
    let mut skel = SkeletonState::START;
    let mut embedded = 0i64;
    let mut run = 0u64;

    for l in 1..=n_steps {
        if bits.bit() {
            pos.x += orient.sign(pos.y);
            run += 1;
        } else {
            pos = vertical_neighbor(pos);
            trace.summary.n_vertical += 1;
            if detailed {
                embedded += orient.sign(skel.y) * run as i64;
                let nu = if run % 2 == 1 { skel.nu } else { skel.nu.flip() };
                skel = SkeletonState::new(skel.y + nu.sign(), nu);
                trace.vertical_step_times.push(l);
                trace.vertical_positions.push(pos);
                trace.skeleton_path.push(skel);
                trace.embedded_values.push(embedded);
                trace.horizontal_runs.push(run);
            }
            run = 0;
        }
        if pos == Vertex::ORIGIN {
            trace.summary.n_returns += 1;
            trace.summary.first_return.get_or_insert(l);
            if detailed {
                trace.returns_to_origin.push(l);
            }
        }
    }
    trace.final_position = pos;
    trace
}

/// Checks the coupling identity `M_{T_k} = (X_k, Y_k)` and the skeleton
/// increments `Y_k = Y_{k-1} + ν_k` on every recorded vertical time.
pub fn decompose_check(trace: &WalkTrace) -> bool {
    if !trace.detailed {
        return false;
    }
    let n = trace.vertical_step_times.len();
    if [trace.vertical_positions.len(), trace.skeleton_path.len(), trace.embedded_values.len()]
        .iter()
        .any(|&len| len != n)
    {
        return false;
    }
    let mut prev_time = 0u64;
    let mut prev = SkeletonState::START;
    let mut prev_pos = trace.start;
    for k in 0..n {
        let t = trace.vertical_step_times[k];
        if t <= prev_time || t < (k as u64 + 1) {
            return false;
        }
        let pos = trace.vertical_positions[k];
        let s = trace.skeleton_path[k];
        if pos.x != trace.embedded_values[k] || pos.y != s.y {
            return false;
        }
        if s.y != prev.y + s.nu.sign() {
            return false;
        }
        // horizontal runs keep y, so the move itself went in direction ν_k
        if pos.y - prev_pos.y != s.nu.sign() {
            return false;
        }
        prev_time = t;
        prev = s;
        prev_pos = pos;
    }
    true
}

/// Runs the walk until its `n_vertical`-th vertical move and returns the
/// position at that moment.
pub fn walk_until_vertical(n_vertical: u64, bits: &mut BitSource, orient: &mut OrientationCache<'_>) -> Vertex {
    let mut pos = Vertex::ORIGIN;
    let mut done = 0;
    while done < n_vertical {
        if bits.bit() {
            pos.x += orient.sign(pos.y);
        } else {
            pos = vertical_neighbor(pos);
            done += 1;
        }
    }
    pos
}

/// `n_walks` independent walks with per-task seeds `derive_seed(master_seed, i)`.
/// The output order is the task order regardless of the thread pool.
pub fn simulate_batch(env: &Environment, n_steps: u64, n_walks: u64, master_seed: u64) -> Vec<TraceSummary> {
    let opts = WalkOptions { detail_limit: 0 };
    (0..n_walks)
        .into_par_iter()
        .map(|i| simulate_walk_with(env, n_steps, derive_seed(master_seed, i), &opts).summary)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::EnvironmentSpec;

    fn alternating() -> Environment {
        Environment::new(EnvironmentSpec::alternating()).unwrap()
    }

    #[test]
    fn vertical_neighbor_examples() {
        assert_eq!(vertical_neighbor(Vertex::new(0, 0)), Vertex::new(0, -1));
        assert_eq!(vertical_neighbor(Vertex::new(1, 0)), Vertex::new(1, 1));
        assert_eq!(vertical_neighbor(Vertex::new(0, 1)), Vertex::new(0, 2));
    }

    /// Brute force over the four removed edge families.
    fn up_edge_removed(x: i64, y: i64) -> bool {
        let even = |v: i64| v.rem_euclid(2) == 0;
        (even(x) && even(y)) || (!even(x) && !even(y))
    }

    #[test]
    fn vertical_rule_matches_removed_families() {
        for x in -9..9 {
            for y in -9..9 {
                let v = Vertex::new(x, y);
                let up = Vertex::new(x, y + 1);
                let down = Vertex::new(x, y - 1);
                let has_up = !up_edge_removed(x, y);
                let has_down = !up_edge_removed(x, y - 1);
                assert!(has_up ^ has_down, "exactly one vertical edge at {v:?}");
                assert_eq!(vertical_neighbor(v), if has_up { up } else { down });
                assert_eq!(vertical_neighbor(vertical_neighbor(v)), v);
            }
        }
    }

    #[test]
    fn out_edges_examples() {
        let env = alternating();
        assert_eq!(out_edges(Vertex::new(0, 0), &env), [Vertex::new(1, 0), Vertex::new(0, -1)]);
        assert_eq!(out_edges(Vertex::new(2, 1), &env), [Vertex::new(1, 1), Vertex::new(2, 2)]);
        for x in -5..5 {
            for y in -5..5 {
                let [h, v] = out_edges(Vertex::new(x, y), &env);
                assert_ne!(h, v);
            }
        }
    }

    #[test]
    fn empty_and_deterministic_traces() {
        let env = alternating();
        let t0 = simulate_walk(&env, 0, 1);
        assert_eq!(t0.start, Vertex::ORIGIN);
        assert!(t0.returns_to_origin.is_empty() && t0.vertical_step_times.is_empty());
        let a = simulate_walk(&env, 5000, 77);
        let b = simulate_walk(&env, 5000, 77);
        assert_eq!(a, b);
        assert!(decompose_check(&a));
    }

    #[test]
    fn corrupted_trace_fails_check() {
        let env = Environment::new(EnvironmentSpec::rademacher(4)).unwrap();
        let mut t = simulate_walk(&env, 2000, 9);
        assert!(t.embedded_values.len() > 3);
        assert!(decompose_check(&t));
        t.embedded_values[3] += 1;
        assert!(!decompose_check(&t));
    }

    #[test]
    fn vertical_move_frequency() {
        let env = alternating();
        let n = 1_000_000u64;
        let t = simulate_walk(&env, n, 2024);
        let f = t.summary.n_vertical as f64 / n as f64;
        let se = (0.25 / n as f64).sqrt();
        assert!((f - 0.5).abs() < 3.0 * se, "vertical frequency {f}");
    }

    #[test]
    fn parity_law_on_traces() {
        let env = Environment::new(EnvironmentSpec::rademacher(12)).unwrap();
        let t = simulate_walk(&env, 200_000, 5);
        let mut prev = Direction::Up;
        let mut prev_y = 0;
        for (k, s) in t.skeleton_path.iter().enumerate() {
            let actual = t.vertical_positions[k].y - prev_y;
            let expect = if t.horizontal_runs[k] % 2 == 1 { prev } else { prev.flip() };
            assert_eq!(actual, expect.sign());
            assert_eq!(s.nu, expect);
            prev = s.nu;
            prev_y = t.vertical_positions[k].y;
        }
    }

    #[test]
    fn batch_order_is_task_order() {
        let env = alternating();
        let a = simulate_batch(&env, 1000, 16, 3);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| simulate_batch(&env, 1000, 16, 3));
        assert_eq!(a, b);
        assert_eq!(a[5].seed, derive_seed(3, 5));
    }
}
