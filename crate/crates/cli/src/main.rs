use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use visaid::experiment::pipeline::{self, Layout};
use visaid::experiment::report::run_report;
use visaid::experiment::ExperimentConfig;
use visaid::Error;

/// Simulate roadside cameras and mmWave base stations, then train and score
/// the vision-aided matching and allocation networks.
#[derive(Parser)]
#[command(name = "visaid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment config; missing fields take the desk-scale defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for generation and evaluation.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trajectories and write the labelled dataset.
    GenDataset,
    /// Train the heatmap and classifier matchers for every history.
    TrainUman,
    /// Train the allocation network.
    TrainVran,
    /// Score the matching methods on the test split.
    EvalMatching,
    /// Score the allocation methods on the test split.
    EvalAllocation,
    /// Draw charts and a summary from the metric files.
    Report,
    /// Print the effective config as JSON.
    ShowConfig {
        /// Start from the full-scale settings instead of the desk defaults.
        #[arg(long)]
        full: bool,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let mut config = match (&cli.config, &cli.command) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Command::ShowConfig { full: true }) => ExperimentConfig::full_scale(),
        (None, _) => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    let layout = Layout::new(&cli.out);
    match cli.command {
        Command::GenDataset => {
            let d = pipeline::run_generate(&config, &layout)?;
            for (split, matching, allocation) in pipeline::split_counts(&d) {
                println!("{}: {matching} matching, {allocation} allocation samples", split.name());
            }
        }
        Command::TrainUman => pipeline::run_train_uman(&config, &layout)?,
        Command::TrainVran => pipeline::run_train_vran(&config, &layout)?,
        Command::EvalMatching => {
            let e = pipeline::run_eval_matching(&config, &layout)?;
            for r in &e.summary {
                println!("{:<6} M={} UMAC {:.4}", r.method, r.history, r.umac);
            }
            println!("random matching expectation {:.4}", e.rumm_expected);
        }
        Command::EvalAllocation => {
            let e = pipeline::run_eval_allocation(&config, &layout)?;
            for r in e.summary.iter().filter(|r| r.users == 0) {
                println!("{:<6} ATRR {:.4}", r.method, r.atrr);
            }
            println!("users matched to their own box: {:.4}", e.matched_fraction);
        }
        Command::Report => {
            for p in run_report(&layout)? {
                println!("{}", p.display());
            }
        }
        Command::ShowConfig { .. } => println!("{}", serde_json::to_string_pretty(&config)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
