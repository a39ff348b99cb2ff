//! `netslice`: staged experiment runner for the slicing testbed.

use anyhow::Result;
use clap::{Parser, Subcommand};
use netslice_core::rollout::RunMode;
use netslice_harness::config::ExperimentConfig;
use netslice_harness::pipeline;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "netslice",
    about = "Simulated network-slicing testbed with online constrained RL orchestration"
)]
struct Cli {
    /// Flat key-value config file (dotted section keys); defaults apply
    /// when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; `env.seed` in the config file overrides it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Artifact directory shared by all stages.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the per-slice baseline tables and log baseline episodes.
    CollectBaseline,
    /// Behavior-clone agents, fit cost estimators, distill modifiers.
    Pretrain,
    /// Online constrained training; appends per-epoch metrics rows.
    TrainOnline {
        /// Epochs to run (overrides `train.epochs`).
        #[arg(long)]
        epochs: Option<usize>,
        /// Variant to run (overrides `train.mode`).
        #[arg(long)]
        mode: Option<RunMode>,
    },
    /// Held-out evaluation on reserved seeds with exploration off.
    Evaluate {
        #[arg(long)]
        mode: Option<RunMode>,
    },
    /// Run every variant from the same pretrained snapshot.
    Ablate {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Audit the modifier networks against the brute-force optimum.
    Oracle {
        /// Held-out states sampled per slice.
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = ExperimentConfig::load(cli.config.as_deref(), cli.seed)?;
    let out = &cli.out;
    match cli.command {
        Command::CollectBaseline => {
            let report = pipeline::collect_baseline(&cfg, out)?;
            println!(
                "collected {} baseline episodes; usage {:?}%, violation {:?}%",
                report.episodes, report.usage_pct, report.violation_pct
            );
        }
        Command::Pretrain => {
            let report = pipeline::pretrain(&cfg, out)?;
            println!(
                "pretrained: bc_mse {:?}, estimator points {:?}, modifier_mse {:?}",
                report.bc_mse, report.estimator_datapoints, report.modifier_mse
            );
        }
        Command::TrainOnline { epochs, mode } => {
            let mode = mode.unwrap_or(cfg.mode);
            let epochs = epochs.unwrap_or(cfg.train_epochs);
            let (_, report) =
                pipeline::train_online(&cfg, out, mode, epochs, "metrics.csv", true)?;
            println!(
                "trained {} epochs ({}); online violation {:.3}%, usage {:.3}%, lambda {:?}",
                report.epochs,
                report.mode,
                report.mean_online_violation_pct,
                report.mean_online_usage_pct,
                report.final_lambda
            );
        }
        Command::Evaluate { mode } => {
            let mode = mode.unwrap_or(cfg.mode);
            let rows = pipeline::evaluate(&cfg, out, mode)?;
            for r in &rows {
                println!("{}", r.to_csv_row());
            }
        }
        Command::Ablate { epochs } => {
            let epochs = epochs.unwrap_or(cfg.train_epochs);
            let reports = pipeline::ablate(&cfg, out, epochs)?;
            for r in &reports {
                println!(
                    "{:>10}: violation {:.3}%, usage {:.3}%",
                    r.mode, r.mean_online_violation_pct, r.mean_online_usage_pct
                );
            }
        }
        Command::Oracle { samples } => {
            let report = pipeline::oracle_audit(&cfg, out, samples)?;
            for (i, f) in report.within_5pct.iter().enumerate() {
                println!(
                    "slice {i}: {:.1}% of {} held-out states within 5% of the oracle",
                    100.0 * f,
                    report.samples[i]
                );
            }
        }
    }
    Ok(())
}
