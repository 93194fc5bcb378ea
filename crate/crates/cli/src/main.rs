use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nschannel::cli_io::{self, exit_code, resolve_out_dir, EXIT_CONFIG, EXIT_OK, EXIT_VERIFICATION};
use nschannel::config::{parse_config, RunConfig};
use nschannel::grid::GridSpec;
use nschannel::inequalities::{EnsembleSpec, Suite};
use nschannel::{Error, Result};

#[derive(Parser)]
#[command(
    name = "nschannel",
    version,
    about = "Channel Navier-Stokes solver with regularity diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a configured run and check the a-priori bounds along it.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run an inequality or identity verification suite.
    Verify {
        #[command(flatten)]
        ensemble: EnsembleArgs,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Calibrate inequality constants, or trajectory constants from a run config.
    Calibrate {
        #[command(flatten)]
        ensemble: EnsembleArgs,
        /// Run config to calibrate trajectory constants on (with `--suite trajectory`).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of training runs, seeds `seed..seed+runs`.
        #[arg(long, default_value_t = 8)]
        runs: usize,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Render tables and plot data from a directory of artifacts.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Args)]
struct EnsembleArgs {
    /// all, gn2d, sobolev3d, poincare, minkowski, lemma1, aniso_l6, eee, ibp
    #[arg(long)]
    suite: String,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Spectral decay exponent of the random fields.
    #[arg(long)]
    decay: Option<f64>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long)]
    nz: Option<usize>,
}

impl EnsembleArgs {
    fn spec(&self, suite: Suite) -> EnsembleSpec {
        let mut spec = EnsembleSpec {
            seed: self.seed,
            count: self.n,
            ..EnsembleSpec::default()
        };
        if let Some(d) = self.decay {
            spec.decay = d;
        }
        if self.nx.is_some() || self.ny.is_some() || self.nz.is_some() {
            let base = spec.grid_for(suite);
            spec.grid = Some(GridSpec {
                nx: self.nx.unwrap_or(base.nx),
                ny: self.ny.unwrap_or(base.ny),
                nz: self.nz.unwrap_or(base.nz),
                ..base
            });
        }
        spec
    }
}

fn load_config(path: &Path) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run { config } => {
            let cfg = load_config(&config)?;
            let outcome = cli_io::cmd_run(&cfg)?;
            println!("wrote {}", outcome.out_dir.display());
            println!("{}", outcome.summary);
            Ok(EXIT_OK)
        }
        Command::Verify { ensemble, out_dir } => {
            let suite: Suite = ensemble.suite.parse()?;
            let out = resolve_out_dir(&out_dir);
            let outcome = cli_io::cmd_verify(suite, &ensemble.spec(suite), &out)?;
            print!("{}", outcome.report.summary_csv());
            println!("wrote {}", outcome.json_path.display());
            if outcome.failures.is_empty() {
                Ok(EXIT_OK)
            } else {
                for f in &outcome.failures {
                    eprintln!("FAILED: {f}");
                }
                Ok(EXIT_VERIFICATION)
            }
        }
        Command::Calibrate {
            ensemble,
            config,
            runs,
            out_dir,
        } => {
            let out = resolve_out_dir(&out_dir);
            let (file, path) = if ensemble.suite == "trajectory" {
                let Some(config) = config else {
                    return Err(Error::Config {
                        path: "--config".into(),
                        message: "trajectory calibration needs a run config".into(),
                    });
                };
                let cfg = load_config(&config)?;
                cli_io::cmd_calibrate_trajectory(&cfg, runs, &out)?
            } else {
                let suite: Suite = ensemble.suite.parse()?;
                cli_io::cmd_calibrate(suite, &ensemble.spec(suite), &out)?
            };
            for c in &file.constants {
                println!("{} {:e}", c.id, c.constant);
            }
            if let Some(t) = &file.trajectory {
                println!("{t:?}");
            }
            println!("wrote {}", path.display());
            Ok(EXIT_OK)
        }
        Command::Report { input } => {
            print!("{}", cli_io::cmd_report(&input)?);
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::UnknownSuite(_) = e {
                eprintln!("valid suites: all, gn2d, sobolev3d, poincare, minkowski, lemma1, aniso_l6, eee, ibp");
                EXIT_CONFIG
            } else {
                exit_code(&e)
            }
        }
    };
    ExitCode::from(code as u8)
}
