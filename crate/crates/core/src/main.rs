use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use homokin::harness::{self, ExperimentConfig, Level};

/// Run one level of the homo-energetic toolkit from a TOML configuration.
///
/// Exit status: 0 on success, 2 when a comparison exceeds its tolerance,
/// 1 on any error.
#[derive(Debug, Parser)]
#[command(name = "homokin", version)]
struct Cli {
    /// Level to run; overrides `level` in the file.
    #[arg(value_enum)]
    level: Level,
    #[arg(long)]
    config: PathBuf,
    /// Override a field, e.g. `--set dsmc.n_particles=2000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = ExperimentConfig::load(&cli.config, &cli.overrides).and_then(|mut cfg| {
        cfg.level = Some(cli.level);
        harness::run(&cfg)
    });
    match result {
        Ok(outcome) => {
            println!(
                "wrote {} artifacts to {}",
                outcome.manifest.artifacts.len(),
                outcome.output_dir.display()
            );
            match outcome.comparison {
                Some(r) => {
                    println!(
                        "{} vs {}: {:?} deviation {:.6e} (tolerance {:.6e}) {}",
                        r.arm_a,
                        r.arm_b,
                        r.metric,
                        r.max_deviation,
                        r.tolerance,
                        if r.pass { "PASS" } else { "FAIL" }
                    );
                    if r.pass {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(2)
                    }
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
