use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use dtdg_cli::{cmd_evaluate, cmd_generate, cmd_gridsearch, cmd_train, Overrides};

/// Influencer detection on discrete-time dynamic graphs.
#[derive(Parser)]
#[command(name = "dtdg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run config; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Network bundle directory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for grid cells and bootstrap replicates.
    #[arg(long)]
    jobs: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            data: self.data.clone(),
            out: self.out.clone(),
            seed: self.seed,
            jobs: self.jobs,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic referral network bundle.
    Generate(Common),
    /// Train one model, store its checkpoint and evaluate it.
    Train(Common),
    /// Grid search over hyperparameters; stores and evaluates the best model.
    Gridsearch(Common),
    /// Evaluate a stored checkpoint without training.
    Evaluate {
        /// Checkpoint directory (model.json + params.bin).
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn fmt_auc(s: &Option<dtdg_core::pipeline::AucSummary>) -> String {
    match s {
        Some(a) => format!("{:.4} ± {:.4}", a.auc, a.half_width),
        None => "n/a".into(),
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate(c) => {
            let out = cmd_generate(c.config.as_deref(), &c.overrides())?;
            println!("month  nodes  edges  influencer_fraction");
            let s = &out.summary;
            for m in 0..s.nodes_per_month.len() {
                println!(
                    "{m:>5}  {:>5}  {:>5}  {:.4}",
                    s.nodes_per_month[m], s.edges_per_month[m], s.influencer_fraction_per_month[m]
                );
            }
            println!("referrals: {}", s.referrals);
            println!("bundle written to {}", out.dir.display());
        }
        Command::Train(c) => {
            let out = cmd_train(c.config.as_deref(), &c.overrides())?;
            println!(
                "{}: best epoch {} of {}; test AUC seen {} unseen {}",
                out.report.architecture,
                out.best_epoch,
                out.epochs_run,
                fmt_auc(&out.report.auc_seen),
                fmt_auc(&out.report.auc_unseen)
            );
            println!("run written to {}", out.dir.display());
        }
        Command::Gridsearch(c) => {
            let out = cmd_gridsearch(c.config.as_deref(), &c.overrides())?;
            let failed = out.rows.iter().filter(|r| r.error.is_some()).count();
            println!(
                "{} configs trained, {failed} failed; best is row {}",
                out.rows.len(),
                out.best
            );
            println!(
                "best test AUC seen {} unseen {}",
                fmt_auc(&out.report.auc_seen),
                fmt_auc(&out.report.auc_unseen)
            );
            println!("results written to {}", out.dir.display());
        }
        Command::Evaluate { checkpoint, common } => {
            let out = cmd_evaluate(&checkpoint, common.config.as_deref(), &common.overrides())?;
            print!("{}", out.report.to_json()?);
            eprintln!("report written to {}", out.path.display());
        }
    }
    Ok(())
}
