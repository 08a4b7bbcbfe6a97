//! Command-line driver for the DRX signaling simulator.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use drxsim_core::config::ExperimentConfig;
use drxsim_core::policy::PolicyKind;
use drxsim_core::rl::Checkpoint;
use drxsim_core::runner;

#[derive(Parser)]
#[command(
    name = "drxsim",
    about = "TTI-level downlink DRX simulator with learned MAC-CE sleep signaling",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config file (flat key=value); defaults match the standard
    /// system and training tables.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Master seed (overrides the config's `seed`).
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train the DQN agent; writes learning_curve.csv plus the best and
    /// final checkpoints.
    Train {
        #[command(flatten)]
        common: CommonArgs,

        /// Action space size: 2 (legacy CE) or 7 (skip durations).
        #[arg(long, value_name = "2|7")]
        action_space: Option<usize>,

        /// Run index label for the learning-curve rows.
        #[arg(long, default_value_t = 0)]
        run: u64,
    },

    /// Evaluate one policy at a fixed UE count; appends to eval.csv and
    /// actions.csv.
    Eval {
        #[command(flatten)]
        common: CommonArgs,

        /// always_on | timers | naive | random | rl
        #[arg(long)]
        policy: String,

        /// Checkpoint file (required for --policy rl).
        #[arg(long)]
        ckpt: Option<PathBuf>,

        /// Number of UEs in the cell.
        #[arg(long, value_parser = clap::value_parser!(usize))]
        num_ues: usize,

        /// Evaluation episodes (defaults to the config's eval_episodes).
        #[arg(long)]
        episodes: Option<u64>,
    },

    /// Evaluate every baseline (plus any checkpoints) for U = 1..=9 into a
    /// single eval.csv.
    SweepEval {
        #[command(flatten)]
        common: CommonArgs,

        /// Checkpoints to include as learned policies (repeatable).
        #[arg(long)]
        ckpt: Vec<PathBuf>,

        /// Evaluation episodes per cell (defaults to the config's
        /// eval_episodes).
        #[arg(long)]
        episodes: Option<u64>,
    },
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train { common, action_space, run } => {
            let mut cfg = load_config(&common)?;
            if let Some(a) = action_space {
                cfg.action_space = a;
                cfg.validate()?;
            }
            let out = runner::train(&cfg, run, &common.out)?;
            println!(
                "run {run}: {} episodes trained (|A| = {}, seed {})",
                cfg.episodes, cfg.action_space, cfg.seed
            );
            println!(
                "best episode {} with cumulative reward per UE {:.3}",
                out.best_episode, out.best_cum_reward_per_ue
            );
            println!("learning curve: {}", out.learning_curve.display());
            println!(
                "checkpoints: {} / {}",
                out.best_checkpoint.display(),
                out.final_checkpoint.display()
            );
        }
        Command::Eval { common, policy, ckpt, num_ues, episodes } => {
            let cfg = load_config(&common)?;
            let kind = PolicyKind::parse(&policy)?;
            let ck = match (&kind, ckpt) {
                (PolicyKind::RlLearned, Some(path)) => Some(Checkpoint::load(&path)?),
                (PolicyKind::RlLearned, None) => bail!("--policy rl requires --ckpt"),
                (_, Some(_)) => bail!("--ckpt only applies to --policy rl"),
                _ => None,
            };
            let episodes = episodes.unwrap_or(cfg.eval_episodes);
            let out =
                runner::evaluate(&cfg, kind, ck.as_ref(), num_ues, episodes, Some(&common.out))?;
            println!(
                "{} @ {} UE(s), {} episodes: mean activity {:.4}, mean satisfaction {:.4}",
                out.policy,
                out.num_ues,
                episodes,
                out.mean_activity(),
                out.mean_satisfaction()
            );
            for (ue, agg) in out.per_ue.iter().enumerate() {
                println!(
                    "  ue {ue}: activity {:.4}, p95 delay {} ms",
                    agg.activity,
                    agg.delay_p95.map_or_else(|| "NA".into(), |v| v.to_string())
                );
            }
        }
        Command::SweepEval { common, ckpt, episodes } => {
            let cfg = load_config(&common)?;
            let checkpoints: Vec<Checkpoint> = ckpt
                .iter()
                .map(|p| Checkpoint::load(p).with_context(|| format!("loading {}", p.display())))
                .collect::<Result<_>>()?;
            let episodes = episodes.unwrap_or(cfg.eval_episodes);
            let cells = runner::sweep_eval(&cfg, &checkpoints, episodes, &common.out)?;
            let mut failed = 0usize;
            for cell in &cells {
                match &cell.outcome {
                    Ok(out) => println!(
                        "{} @ {}: activity {:.4}, satisfaction {:.4}",
                        cell.policy,
                        cell.num_ues,
                        out.mean_activity(),
                        out.mean_satisfaction()
                    ),
                    Err(e) => {
                        failed += 1;
                        eprintln!("{} @ {}: aborted: {e}", cell.policy, cell.num_ues);
                    }
                }
            }
            if failed > 0 {
                eprintln!(
                    "{failed} cell(s) aborted (expected once the offered load exceeds the \
                     one-TB-per-TTI link; raise queue_hard_cap_bits to force them through)"
                );
            }
        }
    }
    Ok(())
}
