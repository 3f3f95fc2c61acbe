use std::path::PathBuf;

use jcdo_core::experiment::{
    parse_metrics, parse_summary, summary_to_toml, write_metrics, ConfigError, Experiment, ExperimentConfig,
    MetricsRow, RunSummary, Scheme,
};
use proptest::prelude::*;

fn standard(file: &str) -> ExperimentConfig {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/standard");
    ExperimentConfig::from_path(&dir.join(file)).unwrap()
}

fn no_includes(inc: &str) -> Result<String, ConfigError> {
    Err(ConfigError::IncludeUnavailable(inc.to_string()))
}

fn scheme() -> impl Strategy<Value = Scheme> {
    prop_oneof![
        Just(Scheme::Jcdo),
        Just(Scheme::Fedavg),
        (0.01f64..1.0, 0.01f64..1.0).prop_map(|(ratio, deadline)| Scheme::FixedR { ratio, deadline }),
        (0.01f64..1.0).prop_map(|deadline| Scheme::Co { deadline }),
        (0.01f64..1.0).prop_map(|ratio| Scheme::Do { ratio }),
        (0.01f64..1.0, 0.05f64..0.99).prop_map(|(deadline, target_q)| Scheme::Fedtoe { deadline, target_q }),
    ]
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e12f64..1e12, Just(0.0), 1e-300f64..1e-290]
}

fn rows() -> impl Strategy<Value = Vec<MetricsRow>> {
    prop::collection::vec(
        (1e-9f64..10.0, finite(), finite(), prop_oneof![0.0f64..1.0, Just(f64::INFINITY)], 0.0f64..1.0, 0usize..100, finite()),
        0..40,
    )
    .prop_map(|v| {
        let mut time = 0.0;
        v.into_iter()
            .enumerate()
            .map(|(i, (dt, loss, loss_gap, deadline, mean_ratio, delivered, objective))| {
                time += dt;
                MetricsRow { round: i as u64 + 1, time, loss, loss_gap, deadline, mean_ratio, delivered, objective }
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn configs_round_trip_through_toml(
        scheme in scheme(),
        seed in 0..=i64::MAX as u64,
        chi in 1.0f64..10.0,
        cap in prop::option::of(0.01f64..10.0),
        name in prop::option::of("[a-z][a-z0-9-]{0,12}"),
    ) {
        let mut cfg = standard("jcdo.toml");
        cfg.scheme = scheme;
        cfg.seed = seed;
        cfg.training.chi = chi;
        cfg.training.deadline_cap = cap;
        cfg.name = name;
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string(), no_includes).unwrap();
        prop_assert_eq!(again, cfg);
    }

    #[test]
    fn seeds_beyond_toml_integers_are_rejected(seed in (i64::MAX as u64 + 1)..=u64::MAX) {
        let mut cfg = standard("jcdo.toml");
        cfg.seed = seed;
        prop_assert!(cfg.validate().is_err());
    }

    #[test]
    fn metrics_round_trip_exactly(rows in rows()) {
        let mut buf = Vec::new();
        write_metrics(&rows, &mut buf).unwrap();
        let parsed = parse_metrics(std::str::from_utf8(&buf).unwrap()).unwrap();
        prop_assert_eq!(parsed, rows);
    }

    #[test]
    fn metrics_reject_time_that_does_not_increase(rows in rows(), at in any::<prop::sample::Index>()) {
        prop_assume!(rows.len() >= 2);
        let mut rows = rows;
        let k = 1 + at.index(rows.len() - 1);
        rows[k].time = rows[k - 1].time;
        let mut buf = Vec::new();
        write_metrics(&rows, &mut buf).unwrap();
        prop_assert!(parse_metrics(std::str::from_utf8(&buf).unwrap()).is_err());
    }

    #[test]
    fn summaries_round_trip(
        name in "[a-z]{1,8}",
        seed in any::<u64>(),
        rounds in 0u64..1_000_000,
        tte in prop::option::of(0.0f64..1e6),
        loss in finite(),
        gap in finite(),
        total in 0.0f64..1e6,
    ) {
        let summary = RunSummary {
            name: name.clone(),
            scheme: name,
            seed: seed >> 1,
            rounds,
            time_to_epsilon: tte,
            final_loss: loss,
            final_loss_gap: gap,
            total_time: total,
        };
        prop_assert_eq!(parse_summary(&summary_to_toml(&summary)).unwrap(), summary);
    }
}

#[test]
fn standard_configs_all_load() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/standard");
    let mut names: Vec<String> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".toml") && !n.starts_with('_'))
        .collect();
    names.sort();
    assert_eq!(names.len(), 7);
    let base = standard("jcdo.toml");
    for n in &names {
        let cfg = standard(n);
        assert_eq!(cfg.task, base.task, "{n}");
        assert_eq!(cfg.population, base.population, "{n}");
        assert_eq!(cfg.training, base.training, "{n}");
    }
}

#[test]
fn schemes_share_the_task_and_population() {
    let a = Experiment::prepare(&standard("jcdo.toml")).unwrap();
    let b = Experiment::prepare(&standard("fedavg.toml")).unwrap();
    assert_eq!(a.profiles, b.profiles);
    assert_eq!(a.task.optimum(), b.task.optimum());
    assert_eq!(a.partition, b.partition);
    assert_eq!(a.initial, b.initial);

    let mut other = standard("jcdo.toml");
    other.seed += 1;
    let c = Experiment::prepare(&other).unwrap();
    assert_ne!(a.profiles, c.profiles);
}
