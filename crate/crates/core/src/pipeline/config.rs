use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::VehicleParams;
use crate::error::{Error, Result};
use crate::nmpc::{MpcConfig, ObstacleSpec};
use crate::sim::{PidGains, SimConfig, TrajectorySpec, YawSchedule};
use crate::sindy::SindyConfig;

/// The only configuration layout this version reads.
pub const SCHEMA_VERSION: u32 = 1;

/// Everything one experiment needs, read from a single TOML file.
///
/// Every section is optional and falls back to its defaults; unknown keys
/// anywhere are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Seeds the held-out validation flight.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub plant: VehicleParams,
    /// Plant integration settings; `duration` is the data-collection length.
    #[serde(default)]
    pub sim: SimConfig,
    /// Reference flown during data collection.
    #[serde(default)]
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub pid: PidGains,
    #[serde(default)]
    pub sindy: SindyConfig,
    #[serde(default)]
    pub validation: ValidationConfig,
    #[serde(default)]
    pub mpc: MpcConfig,
    #[serde(default)]
    pub tracking: TrackingConfig,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Held-out flight for one-step validation: random setpoints around `center`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationConfig {
    pub duration: f64,
    pub setpoints: usize,
    pub center: [f64; 3],
    pub half_extent: [f64; 3],
    pub hold: f64,
    pub yaw: YawSchedule,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            duration: 20.0,
            setpoints: 4,
            center: [0.0, 0.0, -5.0],
            half_extent: [3.0, 3.0, 1.0],
            hold: 5.0,
            yaw: YawSchedule::default(),
        }
    }
}

impl ValidationConfig {
    pub fn trajectory(&self, seed: u64) -> TrajectorySpec {
        TrajectorySpec::random_setpoints(seed, self.setpoints, self.center, self.half_extent, self.hold, self.yaw.clone())
    }
}

/// Closed-loop tracking run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackingConfig {
    pub duration: f64,
    pub trajectory: TrajectorySpec,
}

impl Default for TrackingConfig {
    /// A 40 s loop: 8 m north, 6 m east while climbing 1 m, back west while
    /// descending, then home.
    fn default() -> Self {
        Self {
            duration: 40.0,
            trajectory: TrajectorySpec::TrackingCourse {
                waypoints: vec![
                    [0.0, 0.0, -5.0],
                    [8.0, 0.0, -5.0],
                    [8.0, 6.0, -6.0],
                    [0.0, 6.0, -5.0],
                    [0.0, 0.0, -5.0],
                ],
                segment_times: vec![10.0; 4],
                accel_fraction: 0.3,
                yaw: YawSchedule::Constant { yaw: 0.0 },
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            plant: VehicleParams::default(),
            sim: SimConfig::default(),
            trajectory: TrajectorySpec::default(),
            pid: PidGains::default(),
            sindy: SindyConfig::default(),
            validation: ValidationConfig::default(),
            mpc: MpcConfig::default(),
            tracking: TrackingConfig::default(),
            obstacles: Vec::new(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reads and validates a config file. A missing file, a parse error, or
    /// an invalid value are all configuration errors naming `path`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: format!("cannot read: {e}"),
        })?;
        let config = Self::from_toml(&text).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: match e {
                Error::Config { message, .. } => message,
                other => other.to_string(),
            },
        })?;
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config {
            path: "<config>".into(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidParameter(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.plant.validate()?;
        self.sim.validate()?;
        self.trajectory.validate()?;
        self.pid.validate()?;
        self.sindy.validate()?;
        self.mpc.validate()?;
        self.validation_sim().validate()?;
        self.validation.trajectory(self.seed).validate()?;
        self.tracking_sim().validate()?;
        self.tracking.trajectory.validate()?;
        for o in &self.obstacles {
            o.validate()?;
        }
        Ok(())
    }

    /// Simulation settings of the held-out validation flight.
    pub fn validation_sim(&self) -> SimConfig {
        SimConfig {
            duration: self.validation.duration,
            seed: self.seed,
            ..self.sim.clone()
        }
    }

    /// Simulation settings of closed-loop tracking runs.
    pub fn tracking_sim(&self) -> SimConfig {
        SimConfig {
            duration: self.tracking.duration,
            ..self.sim.clone()
        }
    }
}
