//! Action selection, exploration schedule, the training step with its
//! target-network sync, and checkpoint serialization.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SimError};
use crate::rl::net::{
    apply_sgd, compute_batch_gradients, BatchItem, Gradients, OutputActivation, QNetwork,
    TrainScratch,
};
use crate::rl::replay::ReplayMemory;
use crate::rl::FeatureNorms;

/// Epsilon-greedy over the Q-vector. Sleeping UEs are forced to the null
/// action without consulting the network or spending exploration draws.
/// Ties in the greedy branch break toward the lowest index.
pub fn select_action<R: Rng + ?Sized>(
    q: &[f64],
    epsilon: f64,
    rng: &mut R,
    ue_active: bool,
) -> usize {
    if !ue_active {
        return 0;
    }
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        return rng.gen_range(0..q.len());
    }
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// Exponential step decay: epsilon starts at `start`, is multiplied by a
/// constant factor every `step_every` episodes and pins at `end` from
/// episode `end_episode` on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub step_every: u64,
    pub end_episode: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule { start: 0.8, end: 1e-6, step_every: 30, end_episode: 300 }
    }
}

impl EpsilonSchedule {
    pub fn value(&self, episode: u64) -> f64 {
        if episode >= self.end_episode {
            return self.end;
        }
        let num_steps = (self.end_episode / self.step_every) as f64;
        let k = (self.end / self.start).powf(1.0 / num_steps);
        self.start * k.powi((episode / self.step_every) as i32)
    }
}

/// Everything train_step needs besides the online network.
#[derive(Debug)]
pub struct DqnTrainer {
    pub erm: ReplayMemory,
    target: QNetwork,
    batch_size: usize,
    gamma: f64,
    lr: f64,
    /// Target weights are refreshed every this many train steps.
    sync_period: u64,
    steps: u64,
    rng: ChaCha8Rng,
    grads: Gradients,
    scratch: TrainScratch,
    indices: Vec<usize>,
}

impl DqnTrainer {
    pub fn new(
        online: &QNetwork,
        erm_capacity: usize,
        batch_size: usize,
        gamma: f64,
        lr: f64,
        sync_period: u64,
        rng: ChaCha8Rng,
    ) -> Self {
        DqnTrainer {
            erm: ReplayMemory::new(erm_capacity),
            target: online.clone(),
            batch_size,
            gamma,
            lr,
            sync_period,
            steps: 0,
            rng,
            grads: Gradients::zeros_like(online),
            scratch: TrainScratch::for_net(online),
            indices: Vec::with_capacity(batch_size),
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One minibatch SGD step. Returns Ok(None) while the memory holds fewer
    /// than `batch_size` transitions (no-op), the mean Huber loss otherwise.
    pub fn train_step(&mut self, online: &mut QNetwork) -> Result<Option<f64>> {
        if self.erm.len() < self.batch_size {
            return Ok(None);
        }
        self.erm.sample_indices(self.batch_size, &mut self.rng, &mut self.indices)?;
        let batch: Vec<BatchItem<'_>> = self
            .indices
            .iter()
            .map(|&i| {
                let t = self.erm.get(i);
                BatchItem { s: &t.s.x, a: t.a, r: t.r, s_next: &t.s_next.x, terminal: t.terminal }
            })
            .collect();
        let loss = compute_batch_gradients(
            online,
            &self.target,
            &batch,
            self.gamma,
            &mut self.grads,
            &mut self.scratch,
        );
        if !loss.is_finite() {
            return Err(SimError::NonFiniteLoss { loss, step: self.steps });
        }
        apply_sgd(online, &self.grads, self.lr);
        self.steps += 1;
        if self.steps.is_multiple_of(self.sync_period) {
            self.target = online.clone();
        }
        Ok(Some(loss))
    }
}

/// On-disk network snapshot. JSON keeps the exchange format readable;
/// serde_json round-trips f64 exactly, so a reloaded network reproduces
/// bit-identical Q-values.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Checkpoint {
    pub action_space_size: usize,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_activation: OutputActivation,
    /// hidden x input, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// actions x hidden, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub norms: FeatureNorms,
    pub meta: CheckpointMeta,
}

#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct CheckpointMeta {
    pub episodes_trained: u64,
    pub seed: u64,
    /// Episode whose weights these are, for best-of-run snapshots.
    pub episode: Option<u64>,
    pub cum_reward_per_ue: Option<f64>,
}

impl Checkpoint {
    pub fn from_network(net: &QNetwork, norms: FeatureNorms, meta: CheckpointMeta) -> Self {
        let (in_dim, hidden, out) = net.dims();
        let (w1, b1, w2, b2) = net.weights();
        Checkpoint {
            action_space_size: out,
            input_dim: in_dim,
            hidden_dim: hidden,
            output_activation: net.activation(),
            w1: w1.to_vec(),
            b1: b1.to_vec(),
            w2: w2.to_vec(),
            b2: b2.to_vec(),
            norms,
            meta,
        }
    }

    pub fn to_network(&self) -> Result<QNetwork> {
        QNetwork::from_parts(
            self.input_dim,
            self.hidden_dim,
            self.action_space_size,
            self.w1.clone(),
            self.b1.clone(),
            self.w2.clone(),
            self.b2.clone(),
            self.output_activation,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self).expect("checkpoint serialization cannot fail");
        std::fs::write(path, json).map_err(|e| SimError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let data = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        serde_json::from_str(&data)
            .map_err(|e| SimError::CheckpointMismatch(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::{EncodedState, Transition, STATE_DIM};
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn inactive_ue_always_gets_null_action() {
        let mut r = rng(1);
        for _ in 0..100 {
            assert_eq!(select_action(&[0.0, 9.9], 1.0, &mut r, false), 0);
        }
    }

    #[test]
    fn greedy_picks_argmax_with_low_tie_break() {
        let mut r = rng(2);
        assert_eq!(select_action(&[0.1, 0.9], 0.0, &mut r, true), 1);
        assert_eq!(select_action(&[0.4, 0.4, 0.1], 0.0, &mut r, true), 0);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut r = rng(3);
        let q = [0.0; 7];
        let mut counts = [0u64; 7];
        let n = 100_000;
        for _ in 0..n {
            counts[select_action(&q, 1.0, &mut r, true)] += 1;
        }
        for (a, &c) in counts.iter().enumerate() {
            let freq = c as f64 / n as f64;
            assert!((freq - 1.0 / 7.0).abs() < 0.02, "action {a}: {freq}");
        }
    }

    #[test]
    fn scaling_q_outputs_keeps_the_argmax() {
        let mut r = rng(4);
        let q = [1.5, -0.2, 3.1, 3.0];
        let a = select_action(&q, 0.0, &mut r, true);
        for c in [0.1, 2.0, 1000.0] {
            let scaled: Vec<f64> = q.iter().map(|v| v * c).collect();
            assert_eq!(select_action(&scaled, 0.0, &mut r, true), a);
        }
    }

    #[test]
    fn epsilon_schedule_endpoints() {
        let s = EpsilonSchedule::default();
        assert_eq!(s.value(0), 0.8);
        assert_eq!(s.value(29), 0.8);
        // One decay step: 0.8 * (1.25e-6)^(1/10), computed independently.
        let k = (1.25e-6f64).powf(0.1);
        assert!((s.value(30) - 0.8 * k).abs() < 1e-12);
        assert!((s.value(30) - 0.2054).abs() < 5e-4);
        assert_eq!(s.value(300), 1e-6);
        assert_eq!(s.value(10_000), 1e-6);
    }

    #[test]
    fn epsilon_schedule_is_monotone_nonincreasing() {
        let s = EpsilonSchedule::default();
        let mut prev = f64::INFINITY;
        for ep in 0..400 {
            let v = s.value(ep);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    fn dummy_transition(r: f64, terminal: bool) -> Transition {
        let mut s = EncodedState::zeroed();
        s.x[0] = 0.3;
        // Non-zero next state so that gamma * max Q_target(s') would be
        // visibly non-zero if the terminal/gamma branch were wrong.
        let mut s_next = EncodedState::zeroed();
        s_next.x[0] = 0.9;
        s_next.x[5] = 0.7;
        Transition { s, a: 1, r, s_next, terminal }
    }

    #[test]
    fn trainer_noops_until_batch_available() {
        let mut r = rng(5);
        let mut online = QNetwork::new(STATE_DIM, 8, 2, OutputActivation::Linear, &mut r);
        let mut trainer = DqnTrainer::new(&online, 100, 16, 1.0, 1e-3, 10, rng(6));
        for _ in 0..15 {
            trainer.erm.push(dummy_transition(1.0, true));
        }
        assert!(trainer.train_step(&mut online).unwrap().is_none());
        trainer.erm.push(dummy_transition(1.0, true));
        assert!(trainer.train_step(&mut online).unwrap().is_some());
        assert_eq!(trainer.steps(), 1);
    }

    #[test]
    fn terminal_target_is_plain_reward() {
        // A terminal transition regresses to r alone even with gamma 1 and a
        // next state the target network scores away from zero.
        let mut r = rng(7);
        let mut online = QNetwork::new(STATE_DIM, 8, 2, OutputActivation::Linear, &mut r);
        let mut trainer = DqnTrainer::new(&online, 10, 1, 1.0, 0.05, u64::MAX, rng(8));
        let tr = dummy_transition(2.5, true);
        trainer.erm.push(tr.clone());
        for _ in 0..4000 {
            trainer.train_step(&mut online).unwrap();
        }
        let q = online.forward(&tr.s.x).unwrap();
        assert!((q[1] - 2.5).abs() < 0.05, "Q {q:?}");
    }

    #[test]
    fn gamma_zero_is_supervised_regression() {
        let mut r = rng(9);
        let mut online = QNetwork::new(STATE_DIM, 8, 2, OutputActivation::Linear, &mut r);
        let mut trainer = DqnTrainer::new(&online, 10, 1, 0.0, 0.05, u64::MAX, rng(10));
        let tr = dummy_transition(-1.25, false);
        trainer.erm.push(tr.clone());
        for _ in 0..4000 {
            trainer.train_step(&mut online).unwrap();
        }
        let q = online.forward(&tr.s.x).unwrap();
        assert!((q[1] + 1.25).abs() < 0.05, "Q {q:?}");
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let mut r = rng(11);
        let net = QNetwork::new(STATE_DIM, 40, 7, OutputActivation::Linear, &mut r);
        let ck = Checkpoint::from_network(&net, FeatureNorms::default(), CheckpointMeta::default());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        ck.save(&path).unwrap();
        let reloaded = Checkpoint::load(&path).unwrap().to_network().unwrap();
        let x: Vec<f64> = (0..STATE_DIM).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        assert_eq!(net.forward(&x).unwrap(), reloaded.forward(&x).unwrap());
    }

    #[test]
    fn corrupt_checkpoint_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, "{\"w1\": [1,2,3]}").unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(SimError::CheckpointMismatch(_))));
    }
}
