//! Ground-truth plant: allocate a wrench to rotors, integrate with RK4, and
//! watch a hovering vehicle with a pitch-moment pulse drift north.
//!
//! cargo run --release --example plant_dynamics

use nalgebra::Vector3;
use sindy_mpc::dynamics::{inverse_mixer, mixer, Plant, RigidBodyState, VehicleParams, Wrench};
use sindy_mpc::sim::rk4_step;

fn main() -> sindy_mpc::Result<()> {
    let params = VehicleParams::default();
    let plant = Plant::new(params.clone())?;
    let hover = params.hover_wrench();
    let alloc = inverse_mixer(&hover, &params);
    println!("total mass {:.3} kg, hover wrench fz = {:.4} N", params.total_mass(), hover.fz);
    println!("rotor thrusts {:?} (saturated: {})", alloc.thrusts.0, alloc.saturated);

    let mut state = RigidBodyState::at_rest(Vector3::new(0.0, 0.0, -5.0), 0.0);
    let dt = 0.002;
    for k in 0..=1500 {
        let t = k as f64 * dt;
        // Nose-down pulse for 0.1 s, then level hover thrust.
        let command = if t < 0.1 { Wrench::new(hover.fz, 0.0, -0.02, 0.0) } else { hover };
        let applied = mixer(&inverse_mixer(&command, &params).thrusts, &params);
        if k % 250 == 0 {
            println!(
                "t {t:4.1} s  pos ({:+.3}, {:+.3}, {:+.3})  pitch {:+.4} rad",
                state.position.x, state.position.y, state.position.z, state.euler.y
            );
        }
        state = rk4_step(&plant, &state, &applied, dt)?;
    }
    Ok(())
}
