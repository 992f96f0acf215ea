//! Fly the default rectangular collection circuit under the cascade PID and
//! write the snapshot log.
//!
//! cargo run --release --example pid_data_collection [-- out.csv]

use std::path::PathBuf;

use sindy_mpc::dynamics::VehicleParams;
use sindy_mpc::sim::{run_data_collection, write_snapshots, PidGains, SimConfig, TrajectorySpec};

fn main() -> sindy_mpc::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("snapshots.csv"), PathBuf::from);
    let sim = SimConfig::default();
    let traj = TrajectorySpec::default();
    let set = run_data_collection(&VehicleParams::default(), &sim, &traj, &PidGains::default())?;

    let (mut speed, mut tilt, mut yaw_rate) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..set.len() {
        let s = set.state(i);
        speed = speed.max(s.velocity.norm());
        tilt = tilt.max(s.euler.x.abs().max(s.euler.y.abs()));
        yaw_rate = yaw_rate.max(s.body_rates.z.abs());
    }
    println!("{} rows over {} s at dt {} s", set.len(), sim.duration, set.dt());
    println!("peak speed {speed:.2} m/s, peak tilt {:.1} deg, peak yaw rate {yaw_rate:.2} rad/s", tilt.to_degrees());
    write_snapshots(&set, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
