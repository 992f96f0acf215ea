//! Fixed-step simulation, the data-collection controller, reference
//! trajectories, and snapshot logging.

mod integrator;
pub mod pid;
pub mod reference;
pub mod snapshot;

pub use integrator::{rk4_integrate, rk4_step, rk4_vector, Dynamics};
pub use pid::{pid_cascade_update, ControllerModel, PidGains, PidState};
pub use reference::{sample_reference, ReferenceSample, TrajectorySpec, YawSchedule};
pub use snapshot::{read_snapshots, thrust_input, write_snapshots, SnapshotRecorder, SnapshotSet};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::{inverse_mixer, mixer, rotor_speed_sum, Plant, RigidBodyState, VehicleParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Integration step, s.
    pub dt: f64,
    /// Simulated time, s.
    pub duration: f64,
    /// Seed for randomized excitation.
    pub seed: u64,
    /// Log every `decimation`-th step.
    pub decimation: usize,
    /// A state whose norm exceeds this is treated as divergence.
    pub divergence_bound: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.002,
            duration: 100.0,
            seed: 0,
            decimation: 1,
            divergence_bound: 1e4,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.duration >= self.dt) {
            return Err(Error::InvalidParameter("sim: need dt > 0 and duration >= dt".into()));
        }
        if self.decimation == 0 || !(self.divergence_bound > 0.0) {
            return Err(Error::InvalidParameter(
                "sim: decimation must be >= 1 and divergence_bound > 0".into(),
            ));
        }
        Ok(())
    }

    /// Number of integration steps.
    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Rows produced by a logged run (both end points included).
    pub fn logged_rows(&self) -> usize {
        self.steps() / self.decimation + 1
    }
}

pub(crate) fn check_divergence(state: &RigidBodyState, t: f64, bound: f64) -> Result<()> {
    let norm = state.to_vector().norm();
    if !norm.is_finite() || norm > bound {
        return Err(Error::DivergedSimulation { time: t, norm });
    }
    Ok(())
}

/// Flies `traj` under the cascade PID and logs every `decimation`-th sample.
///
/// The controller's mass and inertia are those of the bare vehicle, so it
/// does not know about the payload. Commands pass through the rotor
/// allocation and are re-mixed before being applied and logged.
pub fn run_data_collection(
    params: &VehicleParams,
    sim: &SimConfig,
    traj: &TrajectorySpec,
    gains: &PidGains,
) -> Result<SnapshotSet> {
    params.validate()?;
    sim.validate()?;
    traj.validate()?;
    gains.validate()?;

    let plant = Plant::new(params.clone())?;
    let controller = ControllerModel {
        mass: params.mass_vehicle,
        inertia: Vector3::from(params.inertia_vehicle),
        gravity: params.gravity,
    };
    let start = sample_reference(traj, 0.0);
    let mut state = RigidBodyState::at_rest(start.position, start.yaw);
    let mut memory = PidState::default();
    let steps = sim.steps();
    let mut log = SnapshotRecorder::with_capacity(sim.logged_rows());

    for k in 0..=steps {
        let t = k as f64 * sim.dt;
        let reference = sample_reference(traj, t);
        let (command, next_memory) =
            pid_cascade_update(&state, &reference, gains, &controller, sim.dt, &memory);
        memory = next_memory;
        let thrusts = inverse_mixer(&command, params).thrusts;
        let wrench = mixer(&thrusts, params);
        if k % sim.decimation == 0 {
            log.push(t, &state, &wrench, rotor_speed_sum(&wrench, params));
        }
        if k == steps {
            break;
        }
        state = rk4_step(&plant, &state, &wrench, sim.dt)?;
        check_divergence(&state, t + sim.dt, sim.divergence_bound)?;
    }
    log.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_count_arithmetic() {
        let sim = SimConfig::default();
        assert_eq!(sim.logged_rows(), 50001);
        let sim = SimConfig { duration: 1.0, ..SimConfig::default() };
        assert_eq!(sim.logged_rows(), 501);
        let sim = SimConfig { duration: 1.0, decimation: 5, ..SimConfig::default() };
        assert_eq!(sim.logged_rows(), 101);
    }

    #[test]
    fn short_collection_has_expected_rows() {
        let sim = SimConfig { duration: 1.0, ..SimConfig::default() };
        let set = run_data_collection(&VehicleParams::default(), &sim, &TrajectorySpec::default(), &PidGains::default()).unwrap();
        assert_eq!(set.len(), 501);
        assert!((set.dt() - 0.002).abs() < 1e-15);
    }

    #[test]
    fn zero_gains_sink_monotonically() {
        let sim = SimConfig { duration: 10.0, ..SimConfig::default() };
        match run_data_collection(&VehicleParams::default(), &sim, &TrajectorySpec::default(), &PidGains::zeroed()) {
            Err(Error::DivergedSimulation { .. }) => {}
            Ok(set) => {
                // Down-velocity stays positive, so z grows monotonically.
                assert!((1..set.len()).all(|i| set.velocity[(i, 2)] > 0.0));
            }
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let sim = SimConfig { dt: 0.0, ..SimConfig::default() };
        assert!(sim.validate().is_err());
        let sim = SimConfig { duration: 0.001, ..SimConfig::default() };
        assert!(sim.validate().is_err());
    }
}
