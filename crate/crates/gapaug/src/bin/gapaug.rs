//! CLI front end. Exit codes: 0 success, 1 validation error, 2 runtime
//! failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gapaug::commands::{
    run_augment, run_capabilities, run_energy_replay, run_evaluate, GlobalOpts, SplitChoice,
};
use gapaug::config::RunConfig;
use gapaug::energy;
use gapaug::error::Error;

#[derive(Parser)]
#[command(name = "gapaug", version, about = "Information-gap-guided closed-loop data augmentation for labeled time-series datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for capability probing (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Override the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Strip wall-clock fields so reruns produce bit-identical artifacts.
    #[arg(long, global = true)]
    canonical: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Probe generators per class and write the capability tensor.
    Capabilities {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the full closed-loop augmentation and write all artifacts.
    Augment {
        #[command(flatten)]
        common: CommonArgs,
        /// Independent repetitions with derived seeds (default from config).
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Score a stored model artifact on a split or an explicit CSV.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Model artifact written by `augment` (model.json).
        #[arg(long)]
        model: PathBuf,
        /// Which configured split to score.
        #[arg(long, default_value = "test")]
        split: String,
        /// Score this windows CSV instead of a configured split.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Replay a decision trace into saved/extra sampling energy totals.
    EnergyReplay {
        #[command(flatten)]
        common: CommonArgs,
        /// Decision trace CSV (`timestamp,class`), chronologically sorted.
        #[arg(long)]
        trace: PathBuf,
        /// Energy cost of one sampling in mWh.
        #[arg(long, default_value_t = energy::DEFAULT_ENERGY_PER_SAMPLING_MWH)]
        energy_per_sampling: f64,
        /// Normal sampling interval in minutes.
        #[arg(long, default_value_t = energy::DEFAULT_BASE_INTERVAL_MIN)]
        base_interval_min: f64,
        /// Reduced-frequency interval in minutes (class 0).
        #[arg(long, default_value_t = energy::DEFAULT_LOW_INTERVAL_MIN)]
        low_interval_min: f64,
        /// Increased-frequency interval in minutes (class 2).
        #[arg(long, default_value_t = energy::DEFAULT_HIGH_INTERVAL_MIN)]
        high_interval_min: f64,
    },
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, Error> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    RunConfig::from_toml_path(path)
}

fn global_opts(common: &CommonArgs) -> GlobalOpts {
    GlobalOpts {
        seed: common.seed,
        out: common.out.clone(),
        canonical: common.canonical,
    }
}

fn configure_jobs(common: &CommonArgs) {
    if let Some(jobs) = common.jobs {
        // Capability cells use per-cell derived seeds, so thread count
        // never changes results; ignore failure if a pool already exists.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Capabilities { common } => {
            configure_jobs(&common);
            let cfg = load_config(&common)?;
            let (_, table) = run_capabilities(&cfg, &global_opts(&common))?;
            print!("{table}");
            Ok(())
        }
        Command::Augment { common, repeats } => {
            configure_jobs(&common);
            let mut cfg = load_config(&common)?;
            if let Some(repeats) = repeats {
                cfg.repeats = repeats;
            }
            let outcome = run_augment(&cfg, &global_opts(&common))?;
            println!(
                "{}",
                serde_json::to_string_pretty(&outcome.summary).expect("summary serializes")
            );
            Ok(())
        }
        Command::Evaluate {
            common,
            model,
            split,
            data,
        } => {
            let cfg = load_config(&common)?;
            let split: SplitChoice = split.parse()?;
            let report = run_evaluate(
                &cfg,
                &model,
                split,
                data.as_deref(),
                &global_opts(&common),
            )?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
            Ok(())
        }
        Command::EnergyReplay {
            common,
            trace,
            energy_per_sampling,
            base_interval_min,
            low_interval_min,
            high_interval_min,
        } => {
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let ledger = run_energy_replay(
                &trace,
                energy_per_sampling,
                energy::EnergyIntervals {
                    base_min: base_interval_min,
                    low_min: low_interval_min,
                    high_min: high_interval_min,
                },
                &out,
            )?;
            println!(
                "{}",
                serde_json::to_string_pretty(&ledger).expect("ledger serializes")
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
