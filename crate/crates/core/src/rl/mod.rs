//! DQN machinery: state encoding, reward, the Q-network with its target
//! copy, epsilon-greedy selection and the replay memory.

mod agent;
mod net;
mod replay;

pub use agent::{select_action, Checkpoint, CheckpointMeta, DqnTrainer, EpsilonSchedule};
pub use net::{
    apply_sgd, compute_batch_gradients, huber_loss, BatchItem, Gradients, OutputActivation,
    QNetwork, TrainScratch,
};
pub use replay::{ReplayMemory, Transition};

/// Numeric + one-hot width of one observation frame.
pub const FRAME_DIM: usize = 12;
/// Number of stacked frames fed to the network.
pub const HISTORY_LEN: usize = 3;
/// Network input width.
pub const STATE_DIM: usize = FRAME_DIM * HISTORY_LEN;

/// How the radio resource granted at the previous TTI was used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResourceUsage {
    /// Scheduled, TB delivered, at least one payload sub-PDU.
    PayloadDelivered = 0,
    /// Scheduled, TB delivered, no payload (CE and/or padding only).
    ControlOnly = 1,
    /// Scheduled but the TB failed.
    Failed = 2,
    NotScheduled = 3,
}

/// Category of the previous TTI's grant outcome for one UE.
pub fn resource_usage_of(scheduled: bool, delivered: bool, payload_bits: u64) -> ResourceUsage {
    if !scheduled {
        ResourceUsage::NotScheduled
    } else if !delivered {
        ResourceUsage::Failed
    } else if payload_bits > 0 {
        ResourceUsage::PayloadDelivered
    } else {
        ResourceUsage::ControlOnly
    }
}

/// Raw per-decision observation, before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateFeatures {
    /// TB at t-1 was acknowledged.
    pub ack: bool,
    /// This UE would receive the data grant this TTI.
    pub scheduled: bool,
    /// TTIs until the next long-cycle start.
    pub ttnc: u64,
    /// Age of the oldest queued SDU, 0 when the queue is empty.
    pub age_ttis: u64,
    pub queue_bits: u64,
    /// TTIs until the timer logic alone would change the DRX state.
    pub remaining_state: u64,
    pub resource_usage: ResourceUsage,
    pub n_active_ues: u32,
    /// Queued bits summed over the listening UEs.
    pub total_queue_bits: u64,
}

impl StateFeatures {
    pub fn zeroed() -> Self {
        StateFeatures {
            ack: false,
            scheduled: false,
            ttnc: 0,
            age_ttis: 0,
            queue_bits: 0,
            remaining_state: 0,
            resource_usage: ResourceUsage::PayloadDelivered,
            n_active_ues: 0,
            total_queue_bits: 0,
        }
    }
}

/// Normalization constants; every encoded entry is clamped to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeatureNorms {
    /// Divisor for the cycle countdown and the remaining-state countdown.
    pub ttnc_ttis: f64,
    /// Divisor for the head-of-line age.
    pub age_ttis: f64,
    /// Queue saturation level in bits; also the stabilization threshold.
    pub queue_sat_bits: f64,
    /// Largest supported UE count.
    pub max_ues: f64,
}

impl Default for FeatureNorms {
    fn default() -> Self {
        FeatureNorms { ttnc_ttis: 16.0, age_ttis: 20.0, queue_sat_bits: 2e6, max_ues: 9.0 }
    }
}

fn unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Normalized 12-entry encoding of one frame.
pub fn encode_frame(f: &StateFeatures, norms: &FeatureNorms) -> [f64; FRAME_DIM] {
    let mut out = [0.0; FRAME_DIM];
    out[0] = f.ack as u8 as f64;
    out[1] = f.scheduled as u8 as f64;
    out[2] = unit(f.ttnc as f64 / norms.ttnc_ttis);
    out[3] = unit(f.age_ttis as f64 / norms.age_ttis);
    out[4] = unit(f.queue_bits as f64 / norms.queue_sat_bits);
    out[5] = unit(f.remaining_state as f64 / norms.ttnc_ttis);
    out[6 + f.resource_usage as usize] = 1.0;
    out[10] = unit(f.n_active_ues as f64 / norms.max_ues);
    out[11] = unit(f.total_queue_bits as f64 / (norms.max_ues * norms.queue_sat_bits));
    out
}

/// Network input: the three most recent frames, oldest first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodedState {
    pub x: [f64; STATE_DIM],
}

impl EncodedState {
    pub fn zeroed() -> Self {
        EncodedState { x: [0.0; STATE_DIM] }
    }
}

/// Sliding window of the frames observed at this UE's decision points.
/// Frames missing at episode start are zero-filled.
#[derive(Debug, Clone, Copy)]
pub struct FeatureHistory {
    frames: [[f64; FRAME_DIM]; HISTORY_LEN],
    len: usize,
}

impl Default for FeatureHistory {
    fn default() -> Self {
        FeatureHistory { frames: [[0.0; FRAME_DIM]; HISTORY_LEN], len: 0 }
    }
}

impl FeatureHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, frame: [f64; FRAME_DIM]) {
        if self.len < HISTORY_LEN {
            self.frames[self.len] = frame;
            self.len += 1;
        } else {
            self.frames.rotate_left(1);
            self.frames[HISTORY_LEN - 1] = frame;
        }
    }

    /// Concatenation oldest-first, zero frames first while the history is
    /// still short.
    pub fn encode(&self) -> EncodedState {
        let mut s = EncodedState::zeroed();
        let missing = HISTORY_LEN - self.len;
        for (slot, frame) in self.frames[..self.len].iter().enumerate() {
            let base = (missing + slot) * FRAME_DIM;
            s.x[base..base + FRAME_DIM].copy_from_slice(frame);
        }
        s
    }
}

/// Window of the most recent delivered-SDU delays used for sigma.
#[derive(Debug, Clone)]
pub struct SatisfactionWindow {
    delays: std::collections::VecDeque<u64>,
    capacity: usize,
}

impl SatisfactionWindow {
    pub fn new(capacity: usize) -> Self {
        SatisfactionWindow { delays: std::collections::VecDeque::with_capacity(capacity), capacity }
    }

    pub fn record(&mut self, delay_ttis: u64) {
        if self.delays.len() == self.capacity {
            self.delays.pop_front();
        }
        self.delays.push_back(delay_ttis);
    }

    /// Fraction of windowed deliveries within the delay budget. An empty
    /// window counts as fully satisfied: no SDU means no violated deadline.
    pub fn sigma(&self, delta_ttis: u64) -> f64 {
        if self.delays.is_empty() {
            return 1.0;
        }
        let ok = self.delays.iter().filter(|&&d| d <= delta_ttis).count();
        ok as f64 / self.delays.len() as f64
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }
}

/// Per-TTI reward: the satisfaction gap when violating the latency target,
/// the sleep indicator otherwise.
pub fn reward(sigma: f64, beta: f64, listening: bool) -> f64 {
    debug_assert!((0.0..=1.0).contains(&sigma));
    if sigma < beta {
        sigma - beta
    } else if listening {
        0.0
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_features_encode_to_one_hot_only() {
        let norms = FeatureNorms::default();
        let mut hist = FeatureHistory::new();
        for _ in 0..3 {
            hist.push(encode_frame(&StateFeatures::zeroed(), &norms));
        }
        let s = hist.encode();
        for (i, v) in s.x.iter().enumerate() {
            let expected = if i % FRAME_DIM == 6 { 1.0 } else { 0.0 };
            assert_eq!(*v, expected, "entry {i}");
        }
    }

    #[test]
    fn ttnc_full_cycle_normalizes_to_one() {
        let norms = FeatureNorms::default();
        let f = StateFeatures { ttnc: 16, ..StateFeatures::zeroed() };
        assert_eq!(encode_frame(&f, &norms)[2], 1.0);
    }

    #[test]
    fn oversized_queue_clamps_to_one() {
        let norms = FeatureNorms::default();
        let f = StateFeatures { queue_bits: 4_000_000, ..StateFeatures::zeroed() };
        assert_eq!(encode_frame(&f, &norms)[4], 1.0);
    }

    #[test]
    fn short_history_zero_fills_oldest_slots() {
        let norms = FeatureNorms::default();
        let mut hist = FeatureHistory::new();
        let f = StateFeatures { ack: true, ..StateFeatures::zeroed() };
        hist.push(encode_frame(&f, &norms));
        let s = hist.encode();
        assert!(s.x[..2 * FRAME_DIM].iter().all(|&v| v == 0.0));
        assert_eq!(s.x[2 * FRAME_DIM], 1.0);
    }

    #[test]
    fn history_keeps_newest_three_oldest_first() {
        let norms = FeatureNorms::default();
        let mut hist = FeatureHistory::new();
        for age in [1u64, 2, 3, 4] {
            let f = StateFeatures { age_ttis: age, ..StateFeatures::zeroed() };
            hist.push(encode_frame(&f, &norms));
        }
        let s = hist.encode();
        assert_eq!(s.x[3], 2.0 / 20.0);
        assert_eq!(s.x[FRAME_DIM + 3], 3.0 / 20.0);
        assert_eq!(s.x[2 * FRAME_DIM + 3], 4.0 / 20.0);
    }

    #[test]
    fn encoded_entries_stay_in_unit_interval() {
        let norms = FeatureNorms::default();
        let f = StateFeatures {
            ack: true,
            scheduled: true,
            ttnc: 500,
            age_ttis: 10_000,
            queue_bits: u64::MAX / 4,
            remaining_state: 99,
            resource_usage: ResourceUsage::Failed,
            n_active_ues: 40,
            total_queue_bits: u64::MAX / 4,
        };
        for v in encode_frame(&f, &norms) {
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn resource_usage_categories() {
        use ResourceUsage::*;
        assert_eq!(resource_usage_of(false, false, 0), NotScheduled);
        assert_eq!(resource_usage_of(true, true, 1_000), PayloadDelivered);
        // A delivered TB whose sub-PDUs carry no payload (a CE-only TB).
        assert_eq!(resource_usage_of(true, true, 0), ControlOnly);
        assert_eq!(resource_usage_of(true, false, 249_079), Failed);
    }

    #[test]
    fn sigma_examples() {
        let mut w = SatisfactionWindow::new(20);
        assert_eq!(w.sigma(20), 1.0);
        for _ in 0..20 {
            w.record(15);
        }
        assert_eq!(w.sigma(20), 1.0);
        let mut w = SatisfactionWindow::new(20);
        for i in 0..20 {
            w.record(if i < 10 { 25 } else { 5 });
        }
        assert_eq!(w.sigma(20), 0.5);
    }

    #[test]
    fn window_keeps_most_recent_n() {
        let mut w = SatisfactionWindow::new(3);
        for d in [100, 100, 1, 1, 1] {
            w.record(d);
        }
        assert_eq!(w.len(), 3);
        assert_eq!(w.sigma(20), 1.0);
    }

    #[test]
    fn reward_branches() {
        assert!((reward(0.90, 0.95, true) - (-0.05)).abs() < 1e-12);
        assert_eq!(reward(0.95, 0.95, true), 0.0);
        assert_eq!(reward(1.0, 0.95, false), 1.0);
    }

    #[test]
    fn reward_is_bounded() {
        for sigma in [0.0, 0.3, 0.94, 0.95, 1.0] {
            for listening in [true, false] {
                let r = reward(sigma, 0.95, listening);
                assert!((-0.95..=1.0).contains(&r), "r={r}");
            }
        }
    }
}
