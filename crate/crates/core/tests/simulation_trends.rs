//! Statistical behaviour of the simulate, build and evaluate loop across seeds.

use sprintctl_core::simulator::{evaluate, generate, EvaluationConfig, EvaluationReport, GeneratorConfig};
use sprintctl_core::{build, BuildConfig, ThresholdRule};

fn run(config: &GeneratorConfig) -> EvaluationReport {
    let p = generate(config).unwrap();
    let base = build(
        &p.train,
        &p.schema,
        &BuildConfig::new("effort", ThresholdRule::TargetClusters(config.n_archetypes)),
    )
    .unwrap();
    evaluate(&base, "effort", &p.test, &p.ground_truth, &EvaluationConfig::default()).unwrap()
}

#[test]
fn noiseless_recovery_is_exact_for_every_seed() {
    for seed in 1..=10 {
        let report = run(&GeneratorConfig {
            seed,
            value_noise: 0.0,
            context_noise: 0.0,
            flip_prob: 0.0,
            ..GeneratorConfig::default()
        });
        assert_eq!(report.train_ari, 1.0, "seed {seed}");
        assert_eq!(report.selection_correct, 4, "seed {seed}");
    }
}

#[test]
fn ari_does_not_improve_with_more_curve_noise() {
    let levels = [0.0, 0.05, 0.2, 0.5];
    let means: Vec<f64> = levels
        .iter()
        .map(|&sigma| {
            let total: f64 = (1..=20)
                .map(|seed| {
                    run(&GeneratorConfig {
                        seed,
                        value_noise: sigma,
                        ..GeneratorConfig::default()
                    })
                    .train_ari
                })
                .sum();
            total / 20.0
        })
        .collect();
    for pair in means.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-12, "mean ARI by noise level {levels:?}: {means:?}");
    }
    assert!(means[0] > means[levels.len() - 1], "{means:?}");
}

#[test]
fn selected_cluster_beats_global_mean_in_most_seeds() {
    let wins = (1..=20)
        .filter(|&seed| {
            let r = run(&GeneratorConfig {
                seed,
                ..GeneratorConfig::default()
            });
            r.mean_mad < r.mean_baseline_mad
        })
        .count();
    assert!(wins > 10, "{wins}/20");
}

#[test]
fn evaluation_is_deterministic() {
    let config = GeneratorConfig {
        seed: 99,
        ..GeneratorConfig::default()
    };
    assert_eq!(run(&config), run(&config));
}
