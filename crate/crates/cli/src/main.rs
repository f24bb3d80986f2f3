use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use proxnet_cli::experiments::{dropout_sim, gcca, load_config, proxcca, proxlstm, twomoon};
use proxnet_cli::output::{write_run, RunOutput};
use proxnet_cli::HarnessError;

#[derive(Parser)]
#[command(name = "proxnet", version, about = "Prox-layer experiments at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Kernel warping on two moons; writes embedding.csv and summary.json.
    Twomoon {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 0.08)]
        noise: f64,
        #[arg(long, default_value_t = 100)]
        landmarks: usize,
        #[arg(long, default_value_t = 1e-4)]
        lambda: f64,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        seeds: Vec<u64>,
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dropout prox pipeline versus dropout training; writes scatter.csv.
    DropoutSim {
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long, default_value_t = 0.1)]
        mu: f64,
        #[arg(long, default_value_t = 0.2)]
        c_coef: f64,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 0.08)]
        noise: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Two-tower training through the CCA prox layer; writes epochs.csv.
    ProxccaTrain {
        /// JSON config; omitted keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Warm-started ProxLSTM against vanilla; writes epochs.csv.
    ProxlstmTrain {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-form GCCA against alternating minimization; writes trials.csv.
    GccaCheck {
        #[arg(long, default_value_t = 3)]
        views: usize,
        #[arg(long, default_value_t = 20)]
        problems: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn execute(cmd: Command) -> Result<(RunOutput, PathBuf), HarnessError> {
    Ok(match cmd {
        Command::Twomoon { n, noise, landmarks, lambda, seeds, parallel, out } => {
            let cfg = twomoon::TwoMoonConfig { n, noise, landmarks, lambda, seeds };
            (twomoon::run(&cfg, parallel)?, out)
        }
        Command::DropoutSim { lambda, mu, c_coef, n, noise, seed, out } => {
            let cfg = dropout_sim::DropoutSimConfig { lambda, mu, c_coef, n, noise, seed };
            (dropout_sim::run(&cfg)?, out)
        }
        Command::ProxccaTrain { config, parallel, out } => {
            let cfg: proxcca::ProxCcaTrainConfig =
                config.map_or_else(|| Ok(Default::default()), |p| load_config(&p))?;
            (proxcca::run(&cfg, parallel)?, out)
        }
        Command::ProxlstmTrain { config, parallel, out } => {
            let cfg: proxlstm::ProxLstmTrainConfig =
                config.map_or_else(|| Ok(Default::default()), |p| load_config(&p))?;
            (proxlstm::run(&cfg, parallel)?, out)
        }
        Command::GccaCheck { views, problems, seed, out } => {
            let cfg = gcca::GccaCheckConfig { views, problems, seed, ..Default::default() };
            (gcca::run(&cfg)?, out)
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let result = execute(cli.command).and_then(|(run, out)| {
        let files = write_run(&out, &run)?;
        Ok((run, files))
    });
    match result {
        Ok((run, files)) => {
            for line in &run.report {
                println!("{line}");
            }
            for f in files {
                println!("wrote {}", f.display());
            }
            // wall-clock goes to the terminal only so output files stay byte-identical
            println!("elapsed {:.2} s", start.elapsed().as_secs_f64());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
