//! Score an identified model and the nominal physics model by one-step
//! acceleration error on a held-out random-setpoint flight.
//!
//! cargo run --release --example one_step_validation

use sindy_mpc::pipeline::{fit_set, validation_flight, ExperimentConfig};
use sindy_mpc::sim::run_data_collection;
use sindy_mpc::sindy::{one_step_validate, SparseModel};

fn main() -> sindy_mpc::Result<()> {
    let config = ExperimentConfig::default();
    let training = run_data_collection(&config.plant, &config.sim, &config.trajectory, &config.pid)?;
    let identified = fit_set(&config, &training)?;
    let nominal = SparseModel::nominal(&config.plant)?;
    let held_out = validation_flight(&config)?;

    println!("{:<6} {:>14} {:>14}", "", "identified", "nominal");
    let a = one_step_validate(&identified, &held_out)?;
    let b = one_step_validate(&nominal, &held_out)?;
    for (x, y) in a.channels.iter().zip(&b.channels) {
        println!("{:<6} {:>13.3}% {:>13.3}%", x.channel, 100.0 * x.relative_rmse(), 100.0 * y.relative_rmse());
    }
    println!("(RMSE as a percentage of each channel's standard deviation)");
    Ok(())
}
