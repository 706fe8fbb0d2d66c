use jdvol::inference::{confidence_interval, Regime};
use jdvol::mc_harness::{path_modulus_diagnostic, run_experiment, ExperimentPlan};
use jdvol::stats::median;
use jdvol::{builtin_model, simulate_path, ModelParams, SimConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn modulus_median(model: &str, p: ModelParams, n: usize, delta: f64, seeds: u64) -> f64 {
    let m = builtin_model::<f64>(model, p).unwrap();
    let stats: Vec<f64> = (0..seeds)
        .map(|s| path_modulus_diagnostic(&simulate_path(&m, &SimConfig::new(0.0, n, delta, s)).unwrap()))
        .collect();
    median(&stats)
}

#[test]
fn modulus_stays_bounded_for_continuous_paths() {
    let t = 20.0;
    let medians: Vec<f64> = [1000usize, 4000, 16000]
        .iter()
        .map(|&n| modulus_median("ou-pure", ModelParams::default(), n, t / n as f64, 20))
        .collect();
    let hi = medians.iter().copied().fold(f64::MIN, f64::max);
    let lo = medians.iter().copied().fold(f64::MAX, f64::min);
    assert!(hi / lo < 5.0, "{medians:?}");
}

#[test]
fn modulus_flags_jumps() {
    let jumpy = ModelParams {
        lambda: 50.0,
        jump_sd: 1.0,
        ..ModelParams::default()
    };
    let pure = modulus_median("ou-pure", ModelParams::default(), 4000, 0.005, 20);
    let jumps = modulus_median("bm-jump", jumpy, 4000, 0.005, 20);
    assert!(jumps > 3.0 * pure, "{jumps} vs {pure}");
}

#[test]
fn coverage_unbiased_on_normal_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (truth, m4, eps, lt) = (0.29f64, 0.0048f64, 0.2f64, 100.0f64);
    let se = (0.5 * m4 / (eps * lt)).sqrt();
    let reps = 20_000;
    let hits = (0..reps)
        .filter(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let ci = confidence_interval(0.0, truth + se * z, m4, 0.0, eps, lt, 0.05, Regime::SmallH, 1.0).unwrap();
            ci.covers(truth)
        })
        .count();
    let rate = hits as f64 / reps as f64;
    let mc_se = (0.95 * 0.05 / reps as f64).sqrt();
    assert!((rate - 0.95).abs() < 3.0 * mc_se, "{rate}");
}

#[test]
fn shipped_plans_parse() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/plans");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            ExperimentPlan::from_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            count += 1;
        }
    }
    assert!(count >= 3);
}

#[test]
fn null_recurrent_model_runs_for_consistency() {
    let plan = ExperimentPlan::from_toml_str(
        r#"
        name = "bm"
        model = "bm-jump"
        regime = "small_h"
        ladder_n = [5000, 20000]
        ladder_delta = [0.01]
        eps_scale = 1.0
        eps_rate = 0.1666667
        replications = 20
        seed_base = 5
        "#,
    )
    .unwrap();
    let rep = run_experiment(&plan).unwrap();
    assert!(rep.rungs[1].rmse < rep.rungs[0].rmse);
    assert!(rep.rungs.iter().all(|r| r.median_abs_rel_error < 0.2));
}
