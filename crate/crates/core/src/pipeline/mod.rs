//! Configuration-driven experiment commands: collect, fit, validate, track,
//! and compare. Each writes its artifacts plus a manifest into an output
//! directory.

mod config;
mod manifest;
mod report;

use std::path::{Path, PathBuf};
use std::str::FromStr;

pub use config::{ExperimentConfig, OutputConfig, TrackingConfig, ValidationConfig, SCHEMA_VERSION};
pub use manifest::{sha256_hex, FileDigest, Manifest};
pub use report::{Check, ComparisonReport, RecoveryReport, RecoveryRow, TrackReport};

use crate::error::{Error, Result};
use crate::nmpc::{min_margin, run_closed_loop, FlightLog};
use crate::sim::{read_snapshots, run_data_collection, sample_reference, write_snapshots, SnapshotSet};
use crate::sindy::{fit_model, one_step_validate, RotorSpeedMap, SparseModel, ValidationReport};

/// Relative z-axis RMSE reduction the identified model must achieve over the
/// nominal baseline.
pub const MIN_Z_IMPROVEMENT: f64 = 0.2;
/// Obstacle penetration tolerated in closed loop, m.
pub const FEASIBILITY_TOLERANCE: f64 = 0.01;

pub const SNAPSHOT_FILE: &str = "snapshots.csv";
pub const MODEL_FILE: &str = "model.toml";

/// Prediction model for a tracking run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSource {
    /// Bare-vehicle physics without payload or aerodynamics.
    Nominal,
    File(PathBuf),
}

impl FromStr for ModelSource {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(if s == "nominal" { ModelSource::Nominal } else { ModelSource::File(PathBuf::from(s)) })
    }
}

impl ModelSource {
    pub fn load(&self, config: &ExperimentConfig) -> Result<SparseModel> {
        match self {
            ModelSource::Nominal => SparseModel::nominal(&config.plant),
            ModelSource::File(path) => SparseModel::load(path),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ModelSource::Nominal => "nominal".into(),
            ModelSource::File(p) => p.display().to_string(),
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct CollectOutcome {
    pub snapshots: PathBuf,
    pub rows: usize,
    pub manifest: PathBuf,
}

/// Flies the collection trajectory under the PID and writes `snapshots.csv`.
pub fn collect(config: &ExperimentConfig, out: &Path) -> Result<CollectOutcome> {
    config.validate()?;
    ensure_dir(out)?;
    let set = run_data_collection(&config.plant, &config.sim, &config.trajectory, &config.pid)?;
    let path = out.join(SNAPSHOT_FILE);
    write_snapshots(&set, &path)?;
    let mut m = Manifest::new("collect", config);
    m.output(&path)?;
    m.detail("rows", set.len());
    Ok(CollectOutcome {
        snapshots: path,
        rows: set.len(),
        manifest: m.write(out)?,
    })
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: SparseModel,
    pub model_path: PathBuf,
    /// Identified against the configured plant's exact coefficients.
    pub recovery: RecoveryReport,
    pub manifest: PathBuf,
}

/// Fits a sparse model to a snapshot file and writes `model.toml` together
/// with a coefficient-recovery table against the configured plant.
pub fn fit(config: &ExperimentConfig, snapshots: &Path, out: &Path) -> Result<FitOutcome> {
    config.validate()?;
    ensure_dir(out)?;
    let set = read_snapshots(snapshots)?;
    let model = fit_set(config, &set)?;
    let model_path = out.join(MODEL_FILE);
    model.save(&model_path)?;
    let recovery = RecoveryReport::new(&model, &SparseModel::from_physics(&config.plant)?);
    let csv_path = out.join("recovery.csv");
    let txt_path = out.join("recovery.txt");
    recovery.write_csv(&csv_path)?;
    write_text(&txt_path, &recovery.to_text())?;

    let mut m = Manifest::new("fit", config);
    m.input(snapshots)?;
    for p in [&model_path, &csv_path, &txt_path] {
        m.output(p)?;
    }
    m.detail("rows", set.len());
    m.detail("nonzero_terms", model.nonzero_count());
    Ok(FitOutcome {
        model,
        model_path,
        recovery,
        manifest: m.write(out)?,
    })
}

/// The fit itself, without touching the file system.
pub fn fit_set(config: &ExperimentConfig, set: &SnapshotSet) -> Result<SparseModel> {
    fit_model(set, &config.sindy, RotorSpeedMap::from_params(&config.plant))
}

/// Flies the held-out validation trajectory on the true plant.
pub fn validation_flight(config: &ExperimentConfig) -> Result<SnapshotSet> {
    run_data_collection(&config.plant, &config.validation_sim(), &config.validation.trajectory(config.seed), &config.pid)
}

#[derive(Debug, Clone)]
pub struct ValidateOutcome {
    pub report: ValidationReport,
    pub manifest: PathBuf,
}

/// One-step prediction error of a model on a fresh held-out flight.
pub fn validate(config: &ExperimentConfig, model: &ModelSource, out: &Path) -> Result<ValidateOutcome> {
    config.validate()?;
    ensure_dir(out)?;
    let sparse = model.load(config)?;
    let report = one_step_validate(&sparse, &validation_flight(config)?)?;
    let summary = out.join("validation.csv");
    let traces = out.join("validation_traces.csv");
    write_text(&summary, &report.summary_csv())?;
    report.write_traces(&traces)?;

    let mut m = Manifest::new("validate", config);
    if let ModelSource::File(p) = model {
        m.input(p)?;
    }
    m.output(&summary)?;
    m.output(&traces)?;
    for c in &report.channels {
        m.detail(&format!("relative_rmse_{}", c.channel), c.relative_rmse());
    }
    Ok(ValidateOutcome {
        report,
        manifest: m.write(out)?,
    })
}

#[derive(Debug, Clone)]
pub struct TrackOutcome {
    pub log: FlightLog,
    pub report: TrackReport,
    pub flight_log: PathBuf,
}

/// Closed-loop run on the configured tracking course, without files.
pub fn fly(config: &ExperimentConfig, model: &SparseModel) -> Result<FlightLog> {
    run_closed_loop(
        &config.plant,
        model,
        &config.mpc,
        &config.tracking.trajectory,
        &config.obstacles,
        &config.tracking_sim(),
    )
}

fn track_into(config: &ExperimentConfig, model: &ModelSource, label: &str, out: &Path, m: &mut Manifest) -> Result<TrackOutcome> {
    let sparse = model.load(config)?;
    if let ModelSource::File(p) = model {
        m.input(p)?;
    }
    let log = fly(config, &sparse)?;
    let report = TrackReport::new(label, &model.describe(), &log);
    let flight_log = out.join(format!("flight_{label}.csv"));
    log.write_csv(&flight_log)?;
    m.output(&flight_log)?;
    Ok(TrackOutcome { log, report, flight_log })
}

/// Flies the tracking course with one prediction model and writes
/// `flight_<label>.csv` and `track_<label>.csv`.
pub fn track(config: &ExperimentConfig, model: &ModelSource, label: &str, out: &Path) -> Result<(TrackOutcome, PathBuf)> {
    config.validate()?;
    ensure_dir(out)?;
    let mut m = Manifest::new("track", config);
    m.detail("label", label);
    let outcome = track_into(config, model, label, out, &mut m)?;
    let summary = out.join(format!("track_{label}.csv"));
    report::write_rows(&summary, &[&outcome.report])?;
    m.output(&summary)?;
    Ok((outcome, m.write(out)?))
}

/// Smallest obstacle margin along the reference, sampled at the plant step.
pub fn reference_min_margin(config: &ExperimentConfig) -> f64 {
    let sim = config.tracking_sim();
    (0..=sim.steps())
        .map(|k| min_margin(&sample_reference(&config.tracking.trajectory, k as f64 * sim.dt).position, &config.obstacles))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub report: ComparisonReport,
    pub sindy: TrackOutcome,
    pub nominal: TrackOutcome,
    pub manifest: PathBuf,
}

/// Flies the course with the identified model and with the nominal model,
/// then writes `comparison.txt` and `comparison.csv`.
pub fn compare(config: &ExperimentConfig, model: &Path, out: &Path) -> Result<CompareOutcome> {
    config.validate()?;
    ensure_dir(out)?;
    let mut m = Manifest::new("compare", config);
    let source = ModelSource::File(model.to_path_buf());
    let sindy = track_into(config, &source, "sindy", out, &mut m)?;
    let nominal = track_into(config, &ModelSource::Nominal, "nominal", out, &mut m)?;
    let recovery = RecoveryReport::new(&source.load(config)?, &SparseModel::from_physics(&config.plant)?);
    let report = ComparisonReport::new(
        sindy.report.clone(),
        nominal.report.clone(),
        reference_min_margin(config),
        Some(recovery),
        MIN_Z_IMPROVEMENT,
        FEASIBILITY_TOLERANCE,
        config.mpc.dt,
    );
    let txt = out.join("comparison.txt");
    let csv = out.join("comparison.csv");
    write_text(&txt, &report.to_text())?;
    report.write_csv(&csv)?;
    m.output(&txt)?;
    m.output(&csv)?;
    m.detail("passed", report.passed());
    Ok(CompareOutcome {
        report,
        sindy,
        nominal,
        manifest: m.write(out)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SimConfig;

    fn short() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.sim = SimConfig { duration: 2.0, ..SimConfig::default() };
        c
    }

    #[test]
    fn model_source_parses_keyword() {
        assert_eq!("nominal".parse::<ModelSource>().unwrap(), ModelSource::Nominal);
        assert_eq!("m.toml".parse::<ModelSource>().unwrap(), ModelSource::File("m.toml".into()));
    }

    #[test]
    fn collect_writes_rows_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let o = collect(&short(), dir.path()).unwrap();
        assert_eq!(o.rows, 1001);
        let m = Manifest::read(&o.manifest).unwrap();
        assert_eq!(m.details["rows"], 1001);
        assert_eq!(m.outputs[0], FileDigest::of(&o.snapshots).unwrap());
        assert_eq!(m.config, short());
    }

    #[test]
    fn two_row_snapshot_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let o = collect(&short(), dir.path()).unwrap();
        let text = std::fs::read_to_string(&o.snapshots).unwrap();
        let head: Vec<&str> = text.lines().take(3).collect();
        let tiny = dir.path().join("tiny.csv");
        std::fs::write(&tiny, head.join("\n") + "\n").unwrap();
        let e = fit(&short(), &tiny, dir.path()).unwrap_err();
        assert!(matches!(e, Error::TooFewSamples { rows: 2, .. }), "{e}");
        assert_eq!(e.exit_code(), 3);
    }

    #[test]
    fn reference_course_passes_near_the_obstacle() {
        let mut c = ExperimentConfig::default();
        assert_eq!(reference_min_margin(&c), f64::INFINITY);
        c.obstacles = vec![crate::nmpc::ObstacleSpec::new([4.0, 0.3, -5.0], 1.0).unwrap()];
        assert!((reference_min_margin(&c) - (-0.7)).abs() < 1e-6);
    }
}
