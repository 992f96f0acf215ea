use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sindy_mpc::pipeline::{self, ExperimentConfig, ModelSource, MODEL_FILE, SNAPSHOT_FILE};
use sindy_mpc::Result;

/// Multirotor data collection, sparse identification, and MPC tracking.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's global seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Fly the collection trajectory under PID and log snapshots.
    Collect(Common),
    /// Fit a sparse model to a snapshot file.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Snapshot CSV; defaults to the one in the output directory.
        #[arg(long)]
        snapshots: Option<PathBuf>,
    },
    /// One-step prediction error on a held-out flight.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Model file or `nominal`; defaults to the one in the output directory.
        #[arg(long)]
        model: Option<String>,
    },
    /// Closed-loop MPC run on the tracking course.
    Track {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<String>,
        /// Names the output files; defaults to `nominal` or `sindy`.
        #[arg(long)]
        label: Option<String>,
    },
    /// Track with the identified and the nominal model and compare.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

fn setup(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let out = common.out.clone().unwrap_or_else(|| config.output.dir.clone());
    Ok((config, out))
}

fn model_source(model: Option<String>, out: &std::path::Path) -> ModelSource {
    model.map_or_else(|| ModelSource::File(out.join(MODEL_FILE)), |m| m.parse().expect("infallible"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Collect(common) => {
            let (config, out) = setup(&common)?;
            let o = pipeline::collect(&config, &out)?;
            println!("wrote {} ({} rows)", o.snapshots.display(), o.rows);
        }
        Command::Fit { common, snapshots } => {
            let (config, out) = setup(&common)?;
            let snapshots = snapshots.unwrap_or_else(|| out.join(SNAPSHOT_FILE));
            let o = pipeline::fit(&config, &snapshots, &out)?;
            print!("{}", o.recovery.to_text());
            println!("\nwrote {} ({} nonzero terms)", o.model_path.display(), o.model.nonzero_count());
        }
        Command::Validate { common, model } => {
            let (config, out) = setup(&common)?;
            let o = pipeline::validate(&config, &model_source(model, &out), &out)?;
            for c in &o.report.channels {
                println!("{:<6} rmse {:.3e}  relative {:.4}", c.channel, c.rmse, c.relative_rmse());
            }
        }
        Command::Track { common, model, label } => {
            let (config, out) = setup(&common)?;
            let source = model_source(model, &out);
            let label = label.unwrap_or_else(|| if source == ModelSource::Nominal { "nominal" } else { "sindy" }.into());
            let (o, _) = pipeline::track(&config, &source, &label, &out)?;
            println!("{}", o.report.to_text());
        }
        Command::Compare { common, model } => {
            let (config, out) = setup(&common)?;
            let model = model.unwrap_or_else(|| out.join(MODEL_FILE));
            let o = pipeline::compare(&config, &model, &out)?;
            print!("{}", o.report.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
