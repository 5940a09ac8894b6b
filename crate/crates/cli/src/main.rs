use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rmab_cli::config::Experiment;
use rmab_cli::verify::{Fault, Level};
use rmab_cli::{commands, verify, CliError};

#[derive(Parser)]
#[command(name = "rmab", version, about = "Index policies for finite-horizon restless bandits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute multipliers, indices and the occupation measure.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate the configured policies against a solved bundle.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the oracle and property checks.
    Verify {
        #[arg(long, value_enum, default_value = "quick")]
        level: Level,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<Fault>,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("RMAB_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("RMAB_THREADS={value} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Solve { config, out } => {
            let exp = Experiment::load(&config)?;
            let art = commands::solve(&exp, &out)?;
            eprintln!("lambda* = {:?} ({:?})", art.lambda_star.0, art.method);
        }
        Command::Simulate { config, bundle, out } => {
            let exp = Experiment::load(&config)?;
            for row in commands::simulate(&exp, &bundle, &out)? {
                let r = &row.result;
                eprintln!(
                    "{:>6} K={:<6} mean/arm {:.5} ± {:.5}  bound/arm {:.5}",
                    r.policy.name(),
                    r.num_arms,
                    r.mean_per_arm,
                    r.ci_half_width,
                    row.bound_per_arm
                );
            }
        }
        Command::Verify { level, inject_fault } => {
            let report = verify::run(level, inject_fault);
            print!("{report}");
            let failures = report.failures();
            if failures > 0 {
                return Err(CliError::Verify(failures));
            }
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
