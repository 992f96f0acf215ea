//! Collect a flight, fit the translational and rotational sparse models, and
//! print each identified coefficient next to the plant's true value. The
//! model is saved as `model.toml` in the working directory.
//!
//! cargo run --release --example identify_model [-- --no-yaw]

use sindy_mpc::dynamics::VehicleParams;
use sindy_mpc::pipeline::RecoveryReport;
use sindy_mpc::sim::{run_data_collection, PidGains, SimConfig, TrajectorySpec};
use sindy_mpc::sindy::{fit_model, RotorSpeedMap, SindyConfig, SparseModel};

fn main() -> sindy_mpc::Result<()> {
    let params = VehicleParams::default();
    let mut traj = TrajectorySpec::default();
    if std::env::args().any(|a| a == "--no-yaw") {
        traj = traj.without_yaw_excitation();
    }
    let set = run_data_collection(&params, &SimConfig::default(), &traj, &PidGains::default())?;
    let model = fit_model(&set, &SindyConfig::default(), RotorSpeedMap::from_params(&params))?;
    let report = RecoveryReport::new(&model, &SparseModel::from_physics(&params)?);
    print!("{}", report.to_text());
    println!(
        "\n{} nonzero terms, {} spurious, {} missed",
        model.nonzero_count(),
        report.spurious().count(),
        report.missed().count()
    );
    let path = std::path::Path::new("model.toml");
    model.save(path)?;
    println!("wrote {}", path.display());
    Ok(())
}
