use honeycomb_walk::environment::Orientation::{Left as L, Right as R};
use honeycomb_walk::experiments::{
    conditional_s_probability, conditional_s_probability_bridge, constrained_path_filter, in_pair_return,
    run_experiment, ExperimentConfig,
};
use honeycomb_walk::rng::{derive_seed, BitSource, TAG_SKELETON};
use honeycomb_walk::skeleton::simulate_skeleton_from;

#[test]
fn conditional_estimate_at_c4_clears_threshold() {
    let e = conditional_s_probability_bridge(&[R, L], 100, 4.0, 20_000, 11).unwrap();
    assert!(e.estimate >= 0.2, "{e:?}");
    assert!(e.stderr > 0.0 || e.estimate == 1.0);
    assert!(e.acceptance_rate > 0.0 && e.acceptance_rate < 1.0);
}

#[test]
fn conditional_estimate_is_the_filtered_fraction() {
    let (n, c, samples, seed) = (100, 4.0, 100_000u64, 3);
    let e = conditional_s_probability(&[R, L], n, c, samples, seed).unwrap();
    let (mut hits, mut kept) = (0u64, 0u64);
    for i in 0..samples {
        let mut bits = BitSource::keyed(derive_seed(seed, i), TAG_SKELETON);
        let path = simulate_skeleton_from(2 * n, &mut bits);
        if in_pair_return(&path) {
            hits += 1;
            kept += constrained_path_filter(&path, &[R, L], c) as u64;
        }
    }
    assert_eq!(e.accepted, hits);
    assert_eq!(e.estimate, kept as f64 / hits as f64);
}

#[test]
fn rademacher_config_reports_every_seed() {
    let cfg: ExperimentConfig = serde_json::from_str(
        r#"{"kind":"recurrence","environment":{"regime":"rademacher","seed":0},
            "n_grid":[20,40,60,80,100,120],"method":"ExactDP","seeds":[0,1,2]}"#,
    )
    .unwrap();
    let out = run_experiment(&cfg).unwrap();
    let per_seed = out.summary["per_seed"].as_array().unwrap();
    assert_eq!(per_seed.len(), 3);
    let seeds: Vec<u64> = per_seed.iter().map(|s| s["env_seed"].as_u64().unwrap()).collect();
    assert_eq!(seeds, [0, 1, 2]);
    assert!(out.summary["median_exponent"].as_f64().unwrap() > 0.0);
    assert_eq!(out.rows.len(), 18);
}
