use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use orbitforge_cli::config::parse_potential_spec;
use orbitforge_cli::run::{run, verify_file, Outcome, Overrides};
use orbitforge_cli::CliError;

#[derive(Parser)]
#[command(name = "orbitforge", version, about = "Prescribed-energy connecting orbits")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the command described by a TOML configuration file.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for sweeps; overrides `workers` in the config.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Re-verify an orbit CSV.
    Verify {
        orbit: PathBuf,
        /// `family[:key=value,...]`, keys kappa, dim, c.
        #[arg(long)]
        potential: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Run { config, out, workers } => {
            if workers == Some(0) {
                Err(CliError::Config("--workers must be >= 1".into()))
            } else {
                run(&config, &Overrides { out, workers })
            }
        }
        Cmd::Verify { orbit, potential, out } => parse_potential_spec(&potential).and_then(|(p, c)| {
            let vcfg = orbitforge::verify::VerifyConfig::for_potential(&p);
            verify_file(&orbit, &p, c, &vcfg, &out)
        }),
    };
    match result {
        Ok(Outcome { passed: true, summary }) => {
            println!("{}", summary.display());
            ExitCode::SUCCESS
        }
        Ok(Outcome { passed: false, summary }) => {
            eprintln!("verification failed; see {}", summary.display());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
