//! Experiment drivers: the training loop, fixed-UE-count evaluation, and
//! the all-policies sweep. One `train` call is one independent run; parallel
//! runs are separate processes with their own seeds.

use std::path::{Path, PathBuf};

use rand::Rng;

use crate::config::ExperimentConfig;
use crate::error::{Result, SimError};
use crate::metrics::{
    finalize, nearest_rank_percentile, ActionRow, CsvAppender, EpisodeRecord, EvalRow,
    LearningCurveRow, ACTIONS_HEADER, EVAL_HEADER, LEARNING_CURVE_HEADER,
};
use crate::policy::{ActionSpace, PolicyEngine, PolicyKind, RlPolicy};
use crate::rl::{Checkpoint, CheckpointMeta, DqnTrainer, QNetwork, STATE_DIM};
use crate::sim::{EpisodeTrace, SimOptions, Simulation};
use crate::seeds::{episode_seed, stream, StreamId};

/// Training-time draw of the episode's UE count, weighted toward the fullest
/// cells (counts 8 and 9 carry weight 2.5 against 1 for the rest).
pub fn sample_num_ues<R: Rng + ?Sized>(weights: &[f64; 9], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i + 1;
        }
        u -= w;
    }
    9
}

pub struct TrainOutput {
    pub best_checkpoint: PathBuf,
    pub final_checkpoint: PathBuf,
    pub learning_curve: PathBuf,
    pub best_cum_reward_per_ue: f64,
    pub best_episode: u64,
    /// Per-episode cumulative reward per UE, in episode order.
    pub episode_rewards: Vec<f64>,
}

/// Runs one full training session and writes the learning curve plus the
/// best-episode and final checkpoints.
pub fn train(cfg: &ExperimentConfig, run_label: u64, out_dir: &Path) -> Result<TrainOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| SimError::io(out_dir, e))?;
    let action_space = ActionSpace::new(cfg.action_space)?;
    let norms = cfg.feature_norms();

    let mut init_rng = stream(cfg.seed, StreamId::WeightInit);
    let net = QNetwork::new(
        STATE_DIM,
        cfg.hidden_neurons,
        cfg.action_space,
        cfg.output_activation,
        &mut init_rng,
    );
    let trainer = DqnTrainer::new(
        &net,
        cfg.erm_capacity,
        cfg.batch_size,
        cfg.gamma,
        cfg.learning_rate,
        cfg.target_sync_period,
        stream(cfg.seed, StreamId::ReplaySampling),
    );
    let mut engine = PolicyEngine::Rl(Box::new(RlPolicy::new(
        net,
        cfg.epsilon_start,
        stream(cfg.seed, StreamId::Exploration),
        Some(trainer),
    )));
    let mut ue_rng = stream(cfg.seed, StreamId::UeCount);
    let schedule = cfg.epsilon_schedule();

    let curve_path = out_dir.join("learning_curve.csv");
    let mut curve = CsvAppender::open(&curve_path, LEARNING_CURVE_HEADER)?;
    let best_path = out_dir.join("checkpoint_best.json");
    let final_path = out_dir.join("checkpoint_final.json");

    let mut best = f64::NEG_INFINITY;
    let mut best_episode = 0u64;
    let mut episode_rewards = Vec::with_capacity(cfg.episodes as usize);

    for ep in 0..cfg.episodes {
        let num_ues = if cfg.train_num_ues > 0 {
            cfg.train_num_ues
        } else {
            sample_num_ues(&cfg.ue_count_weights, &mut ue_rng)
        };
        let ep_seed = episode_seed(cfg.seed, ep);
        let epsilon = schedule.value(ep);
        if let PolicyEngine::Rl(rl) = &mut engine {
            rl.epsilon = epsilon;
            rl.rng = stream(ep_seed, StreamId::Exploration);
        }
        let mut sim = Simulation::new(
            cfg,
            num_ues,
            ep_seed,
            action_space,
            SimOptions { drx_enabled: true, trace: false, enforce_queue_cap: false },
        )?;
        sim.run_to_end(&mut engine)?;
        let record = sim.finish(&mut engine);
        let metrics = finalize(&record);

        curve.write_row(
            &LearningCurveRow {
                run: run_label,
                episode: ep,
                num_ues,
                epsilon,
                cum_reward_per_ue: metrics.cum_reward_per_ue,
                mean_satisfaction: metrics.mean_satisfaction(),
            }
            .to_csv(),
        )?;
        episode_rewards.push(metrics.cum_reward_per_ue);

        if metrics.cum_reward_per_ue > best {
            best = metrics.cum_reward_per_ue;
            best_episode = ep;
            save_checkpoint(&engine, norms, cfg, ep, best, &best_path)?;
        }
    }
    save_checkpoint(&engine, norms, cfg, cfg.episodes.saturating_sub(1), best, &final_path)?;

    Ok(TrainOutput {
        best_checkpoint: best_path,
        final_checkpoint: final_path,
        learning_curve: curve_path,
        best_cum_reward_per_ue: best,
        best_episode,
        episode_rewards,
    })
}

fn save_checkpoint(
    engine: &PolicyEngine,
    norms: crate::rl::FeatureNorms,
    cfg: &ExperimentConfig,
    episode: u64,
    cum_reward: f64,
    path: &Path,
) -> Result<()> {
    let PolicyEngine::Rl(rl) = engine else {
        unreachable!("training always uses the learned policy");
    };
    Checkpoint::from_network(
        &rl.net,
        norms,
        CheckpointMeta {
            episodes_trained: episode + 1,
            seed: cfg.seed,
            episode: Some(episode),
            cum_reward_per_ue: Some(cum_reward),
        },
    )
    .save(path)
}

/// Per-UE aggregate over all evaluation episodes: activity over all TTIs,
/// delay statistics pooled over every delivered SDU, satisfaction averaged
/// over episode-final values.
#[derive(Debug, Clone)]
pub struct UeAggregate {
    pub activity: f64,
    pub mean_delay_ttis: Option<f64>,
    pub delay_p5: Option<u64>,
    pub delay_p50: Option<u64>,
    pub delay_p95: Option<u64>,
    pub satisfaction: f64,
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub policy: String,
    pub action_space: usize,
    pub num_ues: usize,
    pub episodes: u64,
    pub per_ue: Vec<UeAggregate>,
    pub action_counts: Vec<u64>,
}

impl EvalOutput {
    pub fn mean_activity(&self) -> f64 {
        self.per_ue.iter().map(|u| u.activity).sum::<f64>() / self.per_ue.len() as f64
    }

    pub fn mean_satisfaction(&self) -> f64 {
        self.per_ue.iter().map(|u| u.satisfaction).sum::<f64>() / self.per_ue.len() as f64
    }

    /// 95th percentile over the union of all UEs' pooled delays.
    pub fn pooled_delay_p95(&self) -> Option<u64> {
        self.per_ue.iter().filter_map(|u| u.delay_p95).max()
    }
}

fn checkpoint_network(cfg: &ExperimentConfig, ck: &Checkpoint) -> Result<QNetwork> {
    if ck.action_space_size != cfg.action_space {
        return Err(SimError::CheckpointMismatch(format!(
            "checkpoint was trained with |A| = {} but the config says {}",
            ck.action_space_size, cfg.action_space
        )));
    }
    if ck.input_dim != STATE_DIM {
        return Err(SimError::CheckpointMismatch(format!(
            "checkpoint input width {} does not match the {STATE_DIM}-entry encoding",
            ck.input_dim
        )));
    }
    if ck.norms != cfg.feature_norms() {
        return Err(SimError::CheckpointMismatch(
            "checkpoint normalization constants differ from the config".into(),
        ));
    }
    ck.to_network()
}

fn build_engine(
    cfg: &ExperimentConfig,
    kind: PolicyKind,
    net: Option<&QNetwork>,
    ep_seed: u64,
) -> PolicyEngine {
    match kind {
        PolicyKind::AlwaysOn => PolicyEngine::AlwaysOn,
        PolicyKind::TimersOnly => PolicyEngine::TimersOnly,
        PolicyKind::Naive => PolicyEngine::Naive,
        PolicyKind::Random => PolicyEngine::Random { rng: stream(ep_seed, StreamId::Policy) },
        PolicyKind::RlLearned => PolicyEngine::Rl(Box::new(RlPolicy::new(
            net.expect("rl evaluation needs a checkpoint").clone(),
            cfg.eval_epsilon,
            stream(ep_seed, StreamId::Exploration),
            None,
        ))),
    }
}

/// Evaluates one policy at a fixed UE count. Rows are appended to eval.csv
/// and actions.csv when `out_dir` is given; aggregates are always returned.
pub fn evaluate(
    cfg: &ExperimentConfig,
    kind: PolicyKind,
    checkpoint: Option<&Checkpoint>,
    num_ues: usize,
    episodes: u64,
    out_dir: Option<&Path>,
) -> Result<EvalOutput> {
    cfg.validate()?;
    let net = match (kind, checkpoint) {
        (PolicyKind::RlLearned, Some(ck)) => Some(checkpoint_network(cfg, ck)?),
        (PolicyKind::RlLearned, None) => {
            return Err(SimError::Config("the rl policy needs --ckpt".into()))
        }
        _ => None,
    };
    let action_space = match kind {
        PolicyKind::RlLearned => ActionSpace::new(cfg.action_space)?,
        _ => ActionSpace::legacy(),
    };

    let n_t = cfg.ttis_per_episode;
    let mut active_ttis = vec![0u64; num_ues];
    let mut pooled_delays: Vec<Vec<u64>> = vec![Vec::new(); num_ues];
    let mut sat_sum = vec![0.0f64; num_ues];
    let mut action_counts = vec![0u64; action_space.size];

    for ep in 0..episodes {
        let ep_seed = episode_seed(cfg.seed, ep);
        let mut engine = build_engine(cfg, kind, net.as_ref(), ep_seed);
        let mut sim = Simulation::new(
            cfg,
            num_ues,
            ep_seed,
            action_space,
            SimOptions {
                drx_enabled: !engine.disables_drx(),
                trace: false,
                enforce_queue_cap: true,
            },
        )?;
        sim.run_to_end(&mut engine)?;
        let record = sim.finish(&mut engine);
        for u in 0..num_ues {
            active_ttis[u] += record.w[u].iter().filter(|&&x| x).count() as u64;
            pooled_delays[u].extend_from_slice(&record.delays[u]);
            sat_sum[u] += record.satisfaction_final[u];
        }
        for (slot, c) in action_counts.iter_mut().zip(&record.action_histogram) {
            *slot += c;
        }
    }

    let per_ue = (0..num_ues)
        .map(|u| {
            let mut sorted = pooled_delays[u].clone();
            sorted.sort_unstable();
            let (mean, p5, p50, p95) = if sorted.is_empty() {
                (None, None, None, None)
            } else {
                (
                    Some(sorted.iter().sum::<u64>() as f64 / sorted.len() as f64),
                    Some(nearest_rank_percentile(&sorted, 5.0)),
                    Some(nearest_rank_percentile(&sorted, 50.0)),
                    Some(nearest_rank_percentile(&sorted, 95.0)),
                )
            };
            UeAggregate {
                activity: active_ttis[u] as f64 / (episodes * n_t) as f64,
                mean_delay_ttis: mean,
                delay_p5: p5,
                delay_p50: p50,
                delay_p95: p95,
                satisfaction: sat_sum[u] / episodes as f64,
            }
        })
        .collect::<Vec<_>>();

    let out = EvalOutput {
        policy: kind.label().to_string(),
        action_space: action_space.size,
        num_ues,
        episodes,
        per_ue,
        action_counts,
    };
    if let Some(dir) = out_dir {
        write_eval_output(&out, &action_space, dir)?;
    }
    Ok(out)
}

fn write_eval_output(out: &EvalOutput, action_space: &ActionSpace, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
    let mut eval_csv = CsvAppender::open(&dir.join("eval.csv"), EVAL_HEADER)?;
    for (ue_id, agg) in out.per_ue.iter().enumerate() {
        eval_csv.write_row(
            &EvalRow {
                policy: out.policy.clone(),
                action_space: out.action_space,
                num_ues: out.num_ues,
                ue_id,
                activity: agg.activity,
                mean_delay_ms: agg.mean_delay_ttis,
                delay_p5_ms: agg.delay_p5,
                delay_p50_ms: agg.delay_p50,
                delay_p95_ms: agg.delay_p95,
                satisfaction: agg.satisfaction,
            }
            .to_csv(),
        )?;
    }
    let total: u64 = out.action_counts.iter().sum();
    let mut actions_csv = CsvAppender::open(&dir.join("actions.csv"), ACTIONS_HEADER)?;
    for (index, &count) in out.action_counts.iter().enumerate() {
        actions_csv.write_row(
            &ActionRow {
                policy: out.policy.clone(),
                action_space: out.action_space,
                action_index: index,
                skip_ms: action_space.skip_ms(index),
                count,
                frequency: if total == 0 { 0.0 } else { count as f64 / total as f64 },
            }
            .to_csv(),
        )?;
    }
    Ok(())
}

/// One cell of the sweep: a policy evaluated at one UE count. Cells that
/// abort (for example on the queue hard cap at high load) carry the error.
pub struct SweepCell {
    pub policy: String,
    pub num_ues: usize,
    pub outcome: Result<EvalOutput>,
}

/// Evaluates every baseline, plus one learned policy per checkpoint, for
/// U = 1..=9 into a single eval.csv/actions.csv pair.
pub fn sweep_eval(
    cfg: &ExperimentConfig,
    checkpoints: &[Checkpoint],
    episodes: u64,
    out_dir: &Path,
) -> Result<Vec<SweepCell>> {
    let mut cells = Vec::new();
    let baselines =
        [PolicyKind::AlwaysOn, PolicyKind::TimersOnly, PolicyKind::Naive, PolicyKind::Random];
    for num_ues in 1..=9 {
        for kind in baselines {
            let outcome = evaluate(cfg, kind, None, num_ues, episodes, Some(out_dir));
            cells.push(SweepCell { policy: kind.label().to_string(), num_ues, outcome });
        }
        for ck in checkpoints {
            let mut cfg_rl = cfg.clone();
            cfg_rl.action_space = ck.action_space_size;
            let outcome =
                evaluate(&cfg_rl, PolicyKind::RlLearned, Some(ck), num_ues, episodes, Some(out_dir));
            cells.push(SweepCell {
                policy: format!("rl_a{}", ck.action_space_size),
                num_ues,
                outcome,
            });
        }
    }
    Ok(cells)
}

/// Runs a single traced episode of one policy; used by audits and tests.
pub fn run_traced_episode(
    cfg: &ExperimentConfig,
    kind: PolicyKind,
    checkpoint: Option<&Checkpoint>,
    num_ues: usize,
    episode: u64,
) -> Result<(EpisodeRecord, EpisodeTrace, Vec<u64>)> {
    let net = match (kind, checkpoint) {
        (PolicyKind::RlLearned, Some(ck)) => Some(checkpoint_network(cfg, ck)?),
        (PolicyKind::RlLearned, None) => {
            return Err(SimError::Config("the rl policy needs a checkpoint".into()))
        }
        _ => None,
    };
    let action_space = match kind {
        PolicyKind::RlLearned => ActionSpace::new(cfg.action_space)?,
        _ => ActionSpace::legacy(),
    };
    let ep_seed = episode_seed(cfg.seed, episode);
    let mut engine = build_engine(cfg, kind, net.as_ref(), ep_seed);
    let mut sim = Simulation::new(
        cfg,
        num_ues,
        ep_seed,
        action_space,
        SimOptions { drx_enabled: !engine.disables_drx(), trace: true, enforce_queue_cap: true },
    )?;
    sim.run_to_end(&mut engine)?;
    let streaming = sim.streaming_active_ttis();
    let record = sim.finish(&mut engine);
    let trace = sim.take_trace().expect("tracing was enabled");
    Ok((record, trace, streaming))
}
