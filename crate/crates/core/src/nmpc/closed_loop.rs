use std::path::Path;
use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::{inverse_mixer, mixer, Plant, RigidBodyState, VehicleParams, Wrench};
use crate::error::{Error, Result};
use crate::sim::{check_divergence, rk4_step, sample_reference, ReferenceSample, SimConfig, TrajectorySpec};
use crate::sindy::SparseModel;

use super::mpc::{MpcConfig, MpcController};
use super::obstacle::{min_margin, ObstacleSpec};
use super::ocp::SolveStatus;

pub const FLIGHT_LOG_HEADER: [&str; 19] = [
    "t", "x", "y", "z", "x_ref", "y_ref", "z_ref", "phi", "theta", "psi", "p", "q", "r", "fz", "L", "M", "N",
    "solve_time_s", "min_obstacle_margin_m",
];

/// One logged plant step. `solve_time_s` belongs to the solve that produced
/// the wrench being held at this step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightRecord {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub x_ref: f64,
    pub y_ref: f64,
    pub z_ref: f64,
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub fz: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "N")]
    pub n: f64,
    pub solve_time_s: f64,
    pub min_obstacle_margin_m: f64,
}

/// Diagnostics of one controller update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveRecord {
    pub t: f64,
    pub iterations: usize,
    pub escalations: usize,
    pub status: SolveStatus,
    pub max_penetration: f64,
    pub solve_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveTimeStats {
    pub mean_s: f64,
    pub max_s: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Default)]
pub struct FlightLog {
    pub records: Vec<FlightRecord>,
    pub solves: Vec<SolveRecord>,
    /// Smallest obstacle margin over every plant step, `+∞` without obstacles.
    pub min_obstacle_margin: f64,
}

impl FlightLog {
    /// Root-mean-square position error per axis over the logged rows.
    pub fn position_rmse(&self) -> [f64; 3] {
        let n = self.records.len().max(1) as f64;
        let mut acc = [0.0; 3];
        for r in &self.records {
            acc[0] += (r.x - r.x_ref).powi(2);
            acc[1] += (r.y - r.y_ref).powi(2);
            acc[2] += (r.z - r.z_ref).powi(2);
        }
        acc.map(|a| (a / n).sqrt())
    }

    pub fn solve_time_stats(&self) -> SolveTimeStats {
        let count = self.solves.len();
        let total: f64 = self.solves.iter().map(|s| s.solve_time_s).sum();
        SolveTimeStats {
            mean_s: if count > 0 { total / count as f64 } else { 0.0 },
            max_s: self.solves.iter().map(|s| s.solve_time_s).fold(0.0, f64::max),
            count,
        }
    }

    /// Number of updates that stopped without meeting the step tolerance.
    pub fn unconverged_solves(&self) -> usize {
        self.solves.iter().filter(|s| s.status != SolveStatus::Converged).count()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        let data_err = |e: csv::Error| Error::Data {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        if self.records.is_empty() {
            w.write_record(FLIGHT_LOG_HEADER).map_err(data_err)?;
        }
        for r in &self.records {
            w.serialize(r).map_err(data_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Vec<FlightRecord>> {
        let data_err = |e: csv::Error| Error::Data {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut r = csv::Reader::from_path(path).map_err(data_err)?;
        r.deserialize().collect::<std::result::Result<_, _>>().map_err(data_err)
    }
}

fn window(traj: &TrajectorySpec, t: f64, config: &MpcConfig) -> Vec<ReferenceSample> {
    (1..=config.horizon)
        .map(|k| sample_reference(traj, t + k as f64 * config.dt))
        .collect()
}

/// Flies `traj` on the true plant under MPC over `model`.
///
/// The plant integrates at `sim.dt`; the controller runs every `mpc.dt` and
/// its wrench is held in between. Each wrench is allocated to clamped rotor
/// thrusts and re-mixed before it reaches the plant, so the logged inputs are
/// the ones actually applied.
pub fn run_closed_loop(
    params: &VehicleParams,
    model: &SparseModel,
    mpc: &MpcConfig,
    traj: &TrajectorySpec,
    obstacles: &[ObstacleSpec],
    sim: &SimConfig,
) -> Result<FlightLog> {
    params.validate()?;
    sim.validate()?;
    traj.validate()?;
    let ratio = mpc.dt / sim.dt;
    if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "mpc dt {} must be a whole multiple of sim dt {}",
            mpc.dt, sim.dt
        )));
    }
    let hold = ratio.round() as usize;
    let plant = Plant::new(params.clone())?;
    let mut controller = MpcController::new(model.clone(), mpc.clone(), obstacles.to_vec())?;

    let start = sample_reference(traj, 0.0);
    let mut state = RigidBodyState::at_rest(start.position, start.yaw);
    let steps = sim.steps();
    let mut log = FlightLog {
        records: Vec::with_capacity(sim.logged_rows()),
        solves: Vec::with_capacity(steps / hold + 1),
        min_obstacle_margin: f64::INFINITY,
    };
    let mut wrench = Wrench::default();
    let mut solve_time = 0.0;

    for k in 0..=steps {
        let t = k as f64 * sim.dt;
        if k % hold == 0 && k < steps {
            let refs = window(traj, t, mpc);
            let clock = Instant::now();
            let (command, sol) = controller.step(&state, &refs)?;
            solve_time = clock.elapsed().as_secs_f64();
            log.solves.push(SolveRecord {
                t,
                iterations: sol.iterations,
                escalations: sol.escalations,
                status: sol.status,
                max_penetration: sol.max_penetration,
                solve_time_s: solve_time,
            });
            wrench = mixer(&inverse_mixer(&command, params).thrusts, params);
        }
        let margin = min_margin(&state.position, obstacles);
        log.min_obstacle_margin = log.min_obstacle_margin.min(margin);
        if k % sim.decimation == 0 {
            let reference = sample_reference(traj, t);
            log.records.push(record(t, &state, &reference.position, &wrench, solve_time, margin));
        }
        if k == steps {
            break;
        }
        state = rk4_step(&plant, &state, &wrench, sim.dt)?;
        check_divergence(&state, t + sim.dt, sim.divergence_bound)?;
    }
    Ok(log)
}

fn record(t: f64, s: &RigidBodyState, r: &Vector3<f64>, u: &Wrench, solve_time_s: f64, margin: f64) -> FlightRecord {
    FlightRecord {
        t,
        x: s.position.x,
        y: s.position.y,
        z: s.position.z,
        x_ref: r.x,
        y_ref: r.y,
        z_ref: r.z,
        phi: s.euler.x,
        theta: s.euler.y,
        psi: s.euler.z,
        p: s.body_rates.x,
        q: s.body_rates.y,
        r: s.body_rates.z,
        fz: u.fz,
        l: u.l,
        m: u.m,
        n: u.n,
        solve_time_s,
        min_obstacle_margin_m: margin,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::YawSchedule;

    fn hover_course() -> TrajectorySpec {
        TrajectorySpec::TrackingCourse {
            waypoints: vec![[0.0, 0.0, -5.0], [2.0, 0.0, -5.0]],
            segment_times: vec![4.0],
            accel_fraction: 0.3,
            yaw: YawSchedule::Constant { yaw: 0.0 },
        }
    }

    #[test]
    fn oracle_model_tracks_a_short_leg() {
        let params = VehicleParams::default();
        let model = SparseModel::from_physics(&params).unwrap();
        let sim = SimConfig { duration: 5.0, decimation: 5, ..SimConfig::default() };
        let log = run_closed_loop(&params, &model, &MpcConfig::default(), &hover_course(), &[], &sim).unwrap();
        assert_eq!(log.records.len(), sim.logged_rows());
        assert_eq!(log.solves.len(), 100);
        let rmse = log.position_rmse();
        assert!(rmse.iter().all(|&e| e < 0.1), "{rmse:?}");
        assert_eq!(log.min_obstacle_margin, f64::INFINITY);
        let last = log.records.last().unwrap();
        assert!((last.x - 2.0).abs() < 0.05 && (last.z + 5.0).abs() < 0.02);
    }

    #[test]
    fn log_round_trips_through_csv() {
        let params = VehicleParams::default();
        let model = SparseModel::from_physics(&params).unwrap();
        let sim = SimConfig { duration: 0.2, ..SimConfig::default() };
        let log = run_closed_loop(&params, &model, &MpcConfig::default(), &hover_course(), &[], &sim).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flight.csv");
        log.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), FLIGHT_LOG_HEADER.join(","));
        let back = FlightLog::read_csv(&path).unwrap();
        assert_eq!(back.len(), log.records.len());
        assert_eq!(back[7].z, log.records[7].z);
    }

    #[test]
    fn mpc_step_must_divide_sim_step() {
        let params = VehicleParams::default();
        let model = SparseModel::from_physics(&params).unwrap();
        let mpc = MpcConfig { dt: 0.003, ..MpcConfig::default() };
        let err = run_closed_loop(&params, &model, &mpc, &hover_course(), &[], &SimConfig::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn start_inside_an_obstacle_is_refused() {
        let params = VehicleParams::default();
        let model = SparseModel::from_physics(&params).unwrap();
        let o = ObstacleSpec::new([0.0, 0.0, -5.0], 1.0).unwrap();
        let sim = SimConfig { duration: 1.0, ..SimConfig::default() };
        let err = run_closed_loop(&params, &model, &MpcConfig::default(), &hover_course(), &[o], &sim).unwrap_err();
        assert!(matches!(err, Error::InfeasibleStart { .. }));
    }
}
