//! Same configuration and seed, same bytes.

use sindy_mpc::pipeline::{self, ExperimentConfig, ModelSource};

fn short_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::from_toml(
        "schema_version = 1\nseed = 3\n[sim]\nduration = 2.0\n[tracking]\nduration = 1.0\n",
    )
    .unwrap();
    c.obstacles = vec![sindy_mpc::nmpc::ObstacleSpec::new([1.0, 0.2, -5.0], 0.5).unwrap()];
    c
}

#[test]
fn collect_is_bit_identical() {
    let config = short_config();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline::collect(&config, a.path()).unwrap();
    let second = pipeline::collect(&config, b.path()).unwrap();
    assert_eq!(std::fs::read(first.snapshots).unwrap(), std::fs::read(second.snapshots).unwrap());
}

/// Drops the wall-clock column, the only one allowed to differ.
fn without_solve_time(path: &std::path::Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let skip = r.headers().unwrap().iter().position(|h| h == "solve_time_s").unwrap();
    r.records()
        .map(|rec| {
            rec.unwrap()
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != skip)
                .map(|(_, v)| v.to_string())
                .collect()
        })
        .collect()
}

#[test]
fn tracking_matches_apart_from_solve_time() {
    let config = short_config();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (first, _) = pipeline::track(&config, &ModelSource::Nominal, "nominal", a.path()).unwrap();
    let (second, _) = pipeline::track(&config, &ModelSource::Nominal, "nominal", b.path()).unwrap();
    let rows = without_solve_time(&first.flight_log);
    assert_eq!(rows.len(), 501);
    assert_eq!(rows, without_solve_time(&second.flight_log));
}
