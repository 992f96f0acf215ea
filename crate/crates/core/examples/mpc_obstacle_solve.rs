//! A single receding-horizon solve: the reference runs straight through a
//! keep-out sphere, and the optimized prediction bends around it.
//!
//! cargo run --release --example mpc_obstacle_solve

use nalgebra::Vector3;
use sindy_mpc::dynamics::{RigidBodyState, VehicleParams};
use sindy_mpc::nmpc::{obstacle_margin, solve_ocp, MpcConfig, ObstacleSpec};
use sindy_mpc::sim::ReferenceSample;
use sindy_mpc::sindy::SparseModel;

fn main() -> sindy_mpc::Result<()> {
    let model = SparseModel::from_physics(&VehicleParams::default())?;
    let config = MpcConfig::default();
    let obstacle = ObstacleSpec::new([1.5, 0.2, -5.0], 1.0)?;
    let x0 = RigidBodyState::at_rest(Vector3::new(0.0, 0.0, -5.0), 0.0);
    let refs: Vec<ReferenceSample> = (1..=config.horizon)
        .map(|k| ReferenceSample {
            position: Vector3::new(0.15 * k as f64, 0.0, -5.0),
            yaw: 0.0,
            velocity: Vector3::new(3.0, 0.0, 0.0),
        })
        .collect();

    let sol = solve_ocp(&model, &x0, &refs, &config, &[obstacle], None)?;
    println!(
        "{:?} after {} iterations, {} penalty escalations, {:.2} ms",
        sol.status,
        sol.iterations,
        sol.escalations,
        1e3 * sol.solve_time_s
    );
    println!("{:>3} {:>8} {:>8} {:>8} {:>9} {:>8}", "k", "x", "y", "ref x", "margin", "fz");
    let states = sol.predicted_states();
    for (k, u) in sol.wrenches().iter().enumerate() {
        let p = states[k + 1].position;
        println!(
            "{:>3} {:>8.3} {:>8.3} {:>8.3} {:>9.4} {:>8.3}",
            k + 1,
            p.x,
            p.y,
            refs[k].position.x,
            obstacle_margin(&p, &obstacle),
            u.fz
        );
    }
    Ok(())
}
