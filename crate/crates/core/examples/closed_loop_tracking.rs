//! Closed-loop MPC on the default tracking course with the exact plant
//! model as predictor, and a flight log written to CSV.
//!
//! cargo run --release --example closed_loop_tracking [-- flight.csv]

use std::path::PathBuf;

use sindy_mpc::dynamics::VehicleParams;
use sindy_mpc::nmpc::{run_closed_loop, MpcConfig, ObstacleSpec};
use sindy_mpc::pipeline::TrackingConfig;
use sindy_mpc::sim::SimConfig;
use sindy_mpc::sindy::SparseModel;

fn main() -> sindy_mpc::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("flight.csv"), PathBuf::from);
    let params = VehicleParams::default();
    let model = SparseModel::from_physics(&params)?;
    let tracking = TrackingConfig::default();
    let sim = SimConfig { duration: tracking.duration, ..SimConfig::default() };
    let obstacles = [ObstacleSpec::new([4.0, 0.3, -5.0], 1.0)?];

    let log = run_closed_loop(&params, &model, &MpcConfig::default(), &tracking.trajectory, &obstacles, &sim)?;
    let [x, y, z] = log.position_rmse();
    let times = log.solve_time_stats();
    println!("position RMSE x {x:.4} y {y:.4} z {z:.4} m");
    println!("closest approach to the keep-out sphere {:.4} m", log.min_obstacle_margin);
    println!("{} solves, mean {:.2} ms, max {:.2} ms", times.count, 1e3 * times.mean_s, 1e3 * times.max_s);
    log.write_csv(&out)?;
    println!("wrote {}", out.display());
    Ok(())
}
