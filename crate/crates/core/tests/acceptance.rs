//! Acceptance suite. Runs every criterion in order, prints one line per
//! criterion and exits non-zero if any of them fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use honeycomb_walk::cli;
use honeycomb_walk::embedded::{
    charfn, chernoff_bound, gaussian_approx, modulus_r, path_stats, return_prob_inversion, simulate_embedded, GeomKind,
    PathStats, Support,
};
use honeycomb_walk::environment::{Environment, EnvironmentSpec, Orientation, OrientationCache};
use honeycomb_walk::experiments::{
    recurrence_diagnostic, s_functionals_perturbed, sample_constrained_paths, DiagnosticOptions, Method,
};
use honeycomb_walk::lattice_walk::{decompose_check, simulate_walk, walk_until_vertical};
use honeycomb_walk::oracle::{fixed_path_x_distribution, wbar_distribution_exact};
use honeycomb_walk::rng::{derive_seed, BitSource, TAG_JUMPS, TAG_WALK};
use honeycomb_walk::skeleton::{
    first_return_laplace, log_mgf_y, return_prob_exact, simulate_skeleton, skeleton_transition, tilted_matrix,
    SkeletonState,
};
use honeycomb_walk::stats::{chi_square_two_sample, median, wilcoxon_signed_rank_greater};

use Orientation::{Left as L, Right as R};

type Check = (&'static str, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn alternating() -> Environment {
    Environment::new(EnvironmentSpec::alternating()).unwrap()
}

fn ac1_skeleton_llt() -> Outcome {
    let t = Instant::now();
    let n = 5000;
    let v = (n as f64).sqrt() * return_prob_exact(n);
    let target = (2.0 / PI).sqrt();
    let rel = (v - target).abs() / target;
    let elapsed = t.elapsed();
    outcome(
        rel < 0.02 && elapsed < Duration::from_secs(10),
        format!("sqrt(n) p = {v:.6} vs {target:.6}, rel {rel:.2e}, {:.2?}", elapsed),
    )
}

fn ac2_two_step_return() -> Outcome {
    let mut enumerated = 0.0;
    for (s1, p1) in skeleton_transition(SkeletonState::START) {
        for (s2, p2) in skeleton_transition(s1) {
            if s2.y == 0 {
                enumerated += p1 * p2;
            }
        }
    }
    let dp = return_prob_exact(1);
    let diff = (enumerated - dp).abs().max((dp - 2.0 / 3.0).abs());
    outcome(diff < 1e-14, format!("enumeration {enumerated:.17}, dp {dp:.17}, diff {diff:.1e}"))
}

fn ac3_geometric_parity() -> Outcome {
    // a run of Geometric(1/2) horizontal steps has even length (zero included)
    let mut series = 0.0f64;
    let mut term = 0.5;
    for _ in 0..60 {
        series += term;
        term *= 0.25;
    }
    let series_diff = (series - 2.0 / 3.0).abs();

    let draws = 1_000_000u64;
    let mut bits = BitSource::keyed(2024, TAG_WALK);
    let mut even = 0u64;
    for _ in 0..draws {
        let mut run = 0u64;
        while bits.bit() {
            run += 1;
        }
        even += run.is_multiple_of(2) as u64;
    }
    let freq = even as f64 / draws as f64;
    let sigma = (2.0 / 9.0 / draws as f64).sqrt();
    let z = (freq - 2.0 / 3.0) / sigma;
    outcome(
        series_diff < 1e-12 && z.abs() < 3.0,
        format!("series diff {series_diff:.1e}, sampler {freq:.6} ({z:+.2} sd)"),
    )
}

fn ac4_transform_identities() -> Outcome {
    let mut bits = BitSource::keyed(4, TAG_JUMPS);
    let mut max_diff = 0.0f64;
    for _ in 0..100 {
        let theta = (bits.unit() * 2.0 - 1.0) * PI;
        let closed = 3.0 / (17.0 - 8.0 * (2.0 * theta).cos()).sqrt();
        max_diff = max_diff.max((charfn(GeomKind::Odd, theta).norm() - closed).abs());
        max_diff = max_diff.max((modulus_r(theta) - closed).abs());
    }
    // 1 - r(θ) - (8/9)θ² against θ³
    let ratios: Vec<f64> = [1e-1, 3e-2, 1e-2, 3e-3]
        .iter()
        .map(|&th: &f64| (1.0 - modulus_r(th) - 8.0 / 9.0 * th * th).abs() / th.powi(3))
        .collect();
    let bounded = ratios.iter().all(|&r| r <= 1.0) && ratios.windows(2).all(|w| w[1] <= w[0] * 1.01);
    outcome(max_diff < 1e-13 && bounded, format!("max |chi_o| diff {max_diff:.1e}, residual/theta^3 {ratios:.3?}"))
}

fn ac5_inversion_vs_convolution() -> Outcome {
    let st = PathStats::new(0, 0, 1, 1);
    let inv = return_prob_inversion(&st, Support::EvenIntegers, 64).unwrap();
    let d35 = (inv.value - 0.6).abs();

    let env = Environment::new(EnvironmentSpec::rademacher(5)).unwrap();
    let mut worst = 0.0f64;
    for seed in 0..200 {
        let path = simulate_skeleton(10, seed);
        let st = path_stats(&path, &env);
        let dp = fixed_path_x_distribution(&path, &env, 1e-14).unwrap();
        let inv = return_prob_inversion(&st, Support::AllIntegers, 64).unwrap();
        worst = worst.max((inv.value - dp.prob(0)).abs());
        if st.sigma_o().is_multiple_of(2) {
            let inv_e = return_prob_inversion(&st, Support::EvenIntegers, 64).unwrap();
            worst = worst.max((inv_e.value - dp.prob(0)).abs());
        }
    }
    outcome(d35 < 1e-10 && worst < 1e-9, format!("3/5 case diff {d35:.1e}; 200 fixed paths max diff {worst:.1e}"))
}

fn ac6_tilted_spectrum() -> Outcome {
    let at0 = tilted_matrix(0.0).lambda1;
    let l = |t: f64| tilted_matrix(t).lambda1;
    let d2 = |h: f64| (l(h) - 2.0 * l(0.0) + l(-h)) / (h * h);
    let h = 1e-2;
    let rich = (4.0 * d2(h / 2.0) - d2(h)) / 3.0;
    let (n, t) = (500, 0.1);
    let rate = log_mgf_y(n, t) / (2 * n) as f64;
    let target = l(t).ln();
    let rate_diff = (rate - target).abs();
    outcome(
        at0 == 1.0 && (rich - 0.5).abs() < 1e-6 && rate_diff < 1e-3,
        format!("lambda1(0) = {at0}, lambda1''(0) = {rich:.9}, growth rate diff {rate_diff:.1e}"),
    )
}

fn ac7_first_return_laplace() -> Outcome {
    let d: Vec<f64> =
        [1e-2, 1e-3, 1e-4].iter().map(|&t| first_return_laplace(SkeletonState::START, t).unwrap().diagnostic).collect();
    let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    let spread = (hi - lo) / lo;
    outcome(spread < 0.10, format!("diagnostic {d:.5?}, spread {:.2}%", 100.0 * spread))
}

fn ac8_wbar_stationarity() -> Outcome {
    let law = wbar_distribution_exact(2, 10_000).unwrap();
    outcome(law.tv < 1e-8, format!("TV to stationary {:.2e}", law.tv))
}

fn ac9_coupling() -> Outcome {
    let env = Environment::new(EnvironmentSpec::rademacher(9)).unwrap();
    let failures: usize = (0..10_000u64)
        .into_par_iter()
        .filter(|&i| !decompose_check(&simulate_walk(&env, 10_000, derive_seed(90, i))))
        .count();

    let samples = 100_000u64;
    let walk_x: Vec<i64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut bits = BitSource::keyed(derive_seed(91, i), TAG_WALK);
            let mut cache = OrientationCache::new(&env, 32);
            walk_until_vertical(20, &mut bits, &mut cache).x
        })
        .collect();
    let embedded_x: Vec<i64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let path = simulate_skeleton(20, derive_seed(92, i));
            simulate_embedded(&path, &env, derive_seed(93, i))[20]
        })
        .collect();
    let chi = chi_square_two_sample(&walk_x, &embedded_x, 50);
    outcome(
        failures == 0 && chi.p_value > 0.01,
        format!("{failures} decomposition failures in 1e4 traces; chi-square p = {:.3} (dof {})", chi.p_value, chi.dof),
    )
}

fn ac10_chernoff_dominance() -> Outcome {
    let envs = [
        alternating(),
        Environment::new(EnvironmentSpec::rademacher(10)).unwrap(),
        Environment::new(EnvironmentSpec::perturbed(10, vec![R, R, L, L], 1.0, 2.0)).unwrap(),
        Environment::new(EnvironmentSpec::periodic(vec![R, R, L, L])).unwrap(),
    ];
    let mut configs = 0;
    let mut violations = 0;
    let mut min_ratio = f64::INFINITY;
    for (e, env) in envs.iter().enumerate() {
        for k in 0..50u64 {
            let n = 5 + 5 * (k as usize % 40);
            let path = simulate_skeleton(2 * n, derive_seed(100 + e as u64, k));
            let st = path_stats(&path, env);
            let inv = return_prob_inversion(&st, Support::AllIntegers, 64).unwrap();
            let bound = chernoff_bound(&st, n as u64, 0.15).unwrap();
            configs += 1;
            if bound.raw < inv.value {
                violations += 1;
            }
            if inv.value > 0.0 {
                min_ratio = min_ratio.min(bound.raw / inv.value);
            }
        }
    }
    outcome(
        configs == 200 && violations == 0,
        format!("{configs} configurations, {violations} violations, min raw/inversion {min_ratio:.3}"),
    )
}

fn ac11_local_clt() -> Outcome {
    let env = alternating();
    let paths = sample_constrained_paths(&[R, L], 500, 4.0, 100, 42).unwrap();
    let devs: Vec<f64> = paths
        .par_iter()
        .map(|p| {
            let st = path_stats(p, &env);
            let inv = return_prob_inversion(&st, Support::EvenIntegers, 64).unwrap();
            let g = gaussian_approx(&st).unwrap();
            let gauss = 2.0 / (2.0 * PI).sqrt() * (-0.5 * (g.a / g.b).powi(2)).exp();
            (g.b * inv.value - gauss).abs()
        })
        .collect();
    let good = devs.iter().filter(|&&d| d <= 0.05).count();
    let worst = devs.iter().copied().fold(0.0, f64::max);
    outcome(good >= 95, format!("{good}/{} paths within 0.05, max deviation {worst:.2e}", devs.len()))
}

fn ac12_separation() -> Outcome {
    let t = Instant::now();
    let grid: Vec<usize> = (50..=500).step_by(10).collect();
    let fit = |env: &Environment| {
        recurrence_diagnostic(env, &grid, Method::ExactDP, 0, DiagnosticOptions::default())
            .unwrap()
            .fit
            .expect("fit over the grid")
            .exponent
    };
    let periodic = fit(&alternating());
    let rademacher: Vec<f64> =
        (0..20).map(|s| fit(&Environment::new(EnvironmentSpec::rademacher(s)).unwrap())).collect();
    let perturbed = fit(&Environment::new(EnvironmentSpec::perturbed(1, vec![R, L], 1.0, 2.0)).unwrap());
    let med = median(&rademacher);
    let diffs: Vec<f64> = rademacher.iter().map(|e| e - periodic).collect();
    let p = wilcoxon_signed_rank_greater(&diffs);
    let band = |e: f64| (0.8..=1.2).contains(&e);
    let elapsed = t.elapsed();
    outcome(
        band(periodic) && med > periodic && p < 0.05 && band(perturbed) && elapsed < Duration::from_secs(600),
        format!(
            "periodic {periodic:.3}, rademacher median {med:.3} (Wilcoxon p {p:.1e}), perturbed {perturbed:.3}, {:.1?}",
            elapsed
        ),
    )
}

fn ac13_cutoff() -> Outcome {
    let env = Environment::new(EnvironmentSpec::perturbed(13, vec![R, L], 1.0, 2.0)).unwrap();
    let steps = 1000;
    let l = env.max_perturbed_level(steps as u64).unwrap_or(0);
    let violations: usize = (0..100_000u64)
        .into_par_iter()
        .filter(|&i| {
            let path = simulate_skeleton(steps, derive_seed(130, i));
            !s_functionals_perturbed(&path, &env, l).unwrap().cutoff_holds()
        })
        .count();
    outcome(violations == 0, format!("L = {l}, {violations} violations over 1e5 paths of {steps} steps"))
}

fn run_cli(args: &[&str]) -> (i32, Vec<u8>, Vec<u8>) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["honeycomb"];
    argv.extend_from_slice(args);
    let code = cli::run(argv, &mut out, &mut err);
    (code, out, err)
}

fn ac14_reproducibility() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let env_path = p("env.json");
    let cfg_path = p("periodic.json");
    std::fs::write(
        &cfg_path,
        r#"{"kind":"recurrence","environment":{"regime":"periodic","Q":2,"f":[1,-1]},"n_grid":[20,40,60,80,100],"method":"ExactDP"}"#,
    )
    .unwrap();
    let cmds: Vec<Vec<String>> = vec![
        vec!["env", "--periodic", "--Q", "2", "--f", "+1,-1", "--out", &env_path],
        vec!["env", "--perturbed", "--c", "1", "--beta", "2", "--seed", "7", "--materialize", "-100:100"],
        vec!["env", "--rademacher", "--seed", "3"],
        vec!["simulate", "--env", &env_path, "--steps", "1e4", "--walks", "64", "--seed", "1"],
        vec!["simulate", "--env", &env_path, "--steps", "100", "--walks", "0", "--seed", "1"],
        vec!["exact", "--what", "yreturn", "--n", "1,10,100"],
        vec!["exact", "--what", "wbar", "--Q", "2", "--n", "1000"],
        vec!["exact", "--what", "pn", "--env", &env_path, "--n", "50,100", "--tail-tol", "1e-12"],
        vec!["exact", "--what", "fullwalk", "--env", &env_path, "--n", "12"],
        vec!["experiment", "--config", &cfg_path],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();

    let mut mismatches = Vec::new();
    for argv in &cmds {
        let args: Vec<&str> = argv.iter().map(String::as_str).collect();
        let run = |workers: &str| {
            let mut a = vec!["--workers", workers];
            a.extend_from_slice(&args);
            let r = run_cli(&a);
            // the env file is rewritten by its own command; read it back
            let file = if args[0] == "env" && args.contains(&"--out") { std::fs::read(&env_path).ok() } else { None };
            (r, file)
        };
        let first = run("1");
        let again = run("1");
        let wide = run("8");
        if first.0 .0 != 0 || first != again || first != wide {
            mismatches.push(args[..2].join(" "));
        }
    }
    outcome(mismatches.is_empty(), format!("{} commands compared, mismatches: {mismatches:?}", cmds.len()))
}

fn main() {
    // fixed manifest timestamps, so whole outputs can be compared byte for byte
    std::env::set_var("SOURCE_DATE_EPOCH", "1700000000");

    let checks: [Check; 14] = [
        ("AC1", "skeleton local limit", ac1_skeleton_llt),
        ("AC2", "two-step return", ac2_two_step_return),
        ("AC3", "geometric parity", ac3_geometric_parity),
        ("AC4", "transform identities", ac4_transform_identities),
        ("AC5", "inversion vs convolution", ac5_inversion_vs_convolution),
        ("AC6", "tilted spectrum", ac6_tilted_spectrum),
        ("AC7", "first-return Laplace", ac7_first_return_laplace),
        ("AC8", "W-bar stationarity", ac8_wbar_stationarity),
        ("AC9", "coupling", ac9_coupling),
        ("AC10", "Chernoff dominance", ac10_chernoff_dominance),
        ("AC11", "local CLT for X", ac11_local_clt),
        ("AC12", "recurrence/transience separation", ac12_separation),
        ("AC13", "cutoff inequality", ac13_cutoff),
        ("AC14", "CLI reproducibility", ac14_reproducibility),
    ];
    let mut failed = 0;
    for (id, name, check) in checks {
        let t = Instant::now();
        let o = check();
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("{status} {id:<5} {name}: {} [{:.2?}]", o.detail, t.elapsed());
        failed += (!o.pass) as usize;
    }
    println!("acceptance: {} passed, {failed} failed", 14 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
