//! The whole experiment through the pipeline API: collect, fit, validate,
//! then fly the obstacle course with the identified and the nominal model.
//!
//! cargo run --release --example compare_controllers [-- configs/default.toml]

use std::path::Path;

use sindy_mpc::pipeline::{self, ExperimentConfig, ModelSource};

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run() -> sindy_mpc::Result<()> {
    let config = match std::env::args().nth(1) {
        Some(path) => ExperimentConfig::load(Path::new(&path))?,
        None => ExperimentConfig::from_toml(include_str!("../../../configs/default.toml"))?,
    };
    let out = std::env::temp_dir().join("sindy-mpc-compare");
    let collected = pipeline::collect(&config, &out)?;
    let fitted = pipeline::fit(&config, &collected.snapshots, &out)?;
    let validated = pipeline::validate(&config, &ModelSource::File(fitted.model_path.clone()), &out)?;
    for c in &validated.report.channels {
        println!("one-step {:<6} {:.4} % of signal std", c.channel, 100.0 * c.relative_rmse());
    }
    let compared = pipeline::compare(&config, &fitted.model_path, &out)?;
    print!("\n{}", compared.report.to_text());
    println!("\nartifacts in {}", out.display());
    Ok(())
}
