//! Save/load laws for experience bases and tracked projects.

use proptest::prelude::*;
use sprintctl_core::simulator::{generate, GeneratorConfig};
use sprintctl_core::{
    build, BuildConfig, ControlConfig, Controller, CurveMetric, CurveMode, ExperienceBase, Grid, ThresholdRule,
    TrackedProject,
};

fn random_base(seed: u64, n_train: usize, k: usize, grid: usize, metric: CurveMetric, mode: CurveMode) -> ExperienceBase {
    let config = GeneratorConfig {
        seed,
        n_train,
        n_archetypes: k.min(n_train),
        n_test: 1,
        n_context_factors: 1 + (seed % 6) as usize,
        grid: Grid::new(grid).unwrap(),
        mode,
        ..GeneratorConfig::default()
    };
    let portfolio = generate(&config).unwrap();
    let mut build_config = BuildConfig::new("effort", ThresholdRule::TargetClusters(1 + (seed as usize) % n_train));
    build_config.grid = config.grid;
    build_config.metric = metric;
    build_config.mode = mode;
    build(&portfolio.train, &portfolio.schema, &build_config).unwrap()
}

fn base_strategy() -> impl Strategy<Value = ExperienceBase> {
    (
        any::<u64>(),
        1usize..12,
        1usize..6,
        2usize..25,
        prop_oneof![Just(CurveMetric::Rms), Just(CurveMetric::Max)],
        prop_oneof![Just(CurveMode::Raw), Just(CurveMode::Cumulative)],
    )
        .prop_map(|(seed, n, k, g, metric, mode)| random_base(seed, n, k, g, metric, mode))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn base_round_trip_and_byte_identity(base in base_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("base.eb");
        base.save(&path).unwrap();
        let first = std::fs::read(&path).unwrap();
        let loaded = ExperienceBase::load(&path).unwrap();
        prop_assert_eq!(&loaded, &base);
        loaded.save(&path).unwrap();
        prop_assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn tracked_project_round_trip(base in base_strategy(), steps in prop::collection::vec((0.01f64..0.2, 0.0f64..500.0), 0..8)) {
        let controller = Controller::new(&base).unwrap();
        let schema_ctx = base.clusters("effort").unwrap()[0].context.clone();
        // Any valid context will do; reuse the representative values of cluster 0.
        let mut context = sprintctl_core::ContextVector::new();
        for (name, f) in &schema_ctx.factors {
            context = match f {
                sprintctl_core::AggregatedFactor::Numeric { mean } => context.numeric(name.clone(), *mean),
                sprintctl_core::AggregatedFactor::Categorical { representative, .. } => {
                    context.categorical(name.clone(), representative.clone())
                }
            };
        }
        let mut project = controller.plan_project("R1", "effort", context, 5.0, ControlConfig::default()).unwrap();
        let mut t = 0.0;
        for (dt, v) in steps {
            t += dt;
            if t > 1.0 { break; }
            project.record_actual(t, v).unwrap();
        }
        let text = project.to_canonical_string().unwrap();
        let back = TrackedProject::from_canonical_str(&text).unwrap();
        prop_assert_eq!(&back, &project);
        prop_assert_eq!(back.to_canonical_string().unwrap(), text);
    }
}

#[test]
fn bumped_version_and_tampering_are_detected() {
    let base = random_base(3, 6, 2, 5, CurveMetric::Rms, CurveMode::Cumulative);
    let text = base.to_canonical_string().unwrap();

    let (header, body) = text.split_once('\n').unwrap();
    let bumped_body = body.replacen("\"format_version\": 1", "\"format_version\": 2", 1);
    let digest = sprintctl_core::persist::sha256_hex(bumped_body.as_bytes());
    let bumped = format!("SPRINTCTL experience-base 2 sha256:{digest}\n{bumped_body}");
    assert_eq!(ExperienceBase::from_canonical_str(&bumped).unwrap_err().code(), "VERSION_MISMATCH");

    let tampered = format!("{header}\n{}", body.replacen("\"rms\"", "\"max\"", 1));
    assert_eq!(ExperienceBase::from_canonical_str(&tampered).unwrap_err().code(), "CORRUPT_FILE");
}
