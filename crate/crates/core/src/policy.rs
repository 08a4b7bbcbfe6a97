//! Sleep-signaling policies: the four baselines and the learned one, behind
//! a single decision interface, plus the queue-saturation guard.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SimError};
use crate::mac::MacCe;
use crate::rl::{select_action, DqnTrainer, EncodedState, QNetwork};

/// Index-to-CE mapping for a given action-space size.
///
/// |A| = 2: {null, LongDrxCommand}. |A| = 7: {null, skip 2,4,...,12 TTIs}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSpace {
    pub size: usize,
}

impl ActionSpace {
    pub fn new(size: usize) -> Result<Self> {
        if size != 2 && size != 7 {
            return Err(SimError::InvalidParameter(format!(
                "action space must have 2 or 7 actions, got {size}"
            )));
        }
        Ok(ActionSpace { size })
    }

    /// The legacy-CE space the baselines are defined over.
    pub fn legacy() -> Self {
        ActionSpace { size: 2 }
    }

    pub fn ce_for(&self, action: usize) -> Option<MacCe> {
        match (self.size, action) {
            (_, 0) => None,
            (2, 1) => Some(MacCe::LongDrxCommand),
            (7, k) if k <= 6 => Some(MacCe::SkipDuration(2 * k as u64)),
            _ => panic!("action {action} outside |A| = {}", self.size),
        }
    }

    /// Commanded inactivity in ms for the actions file; the legacy command
    /// sleeps until the next cycle start, reported as the 16 ms cycle.
    pub fn skip_ms(&self, action: usize) -> u64 {
        match (self.size, action) {
            (_, 0) => 0,
            (2, 1) => 16,
            (7, k) if k <= 6 => 2 * k as u64,
            _ => panic!("action {action} outside |A| = {}", self.size),
        }
    }
}

/// Baseline selector as exposed on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    AlwaysOn,
    TimersOnly,
    Naive,
    Random,
    RlLearned,
}

impl PolicyKind {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "always_on" => PolicyKind::AlwaysOn,
            "timers" => PolicyKind::TimersOnly,
            "naive" => PolicyKind::Naive,
            "random" => PolicyKind::Random,
            "rl" => PolicyKind::RlLearned,
            other => {
                return Err(SimError::Config(format!(
                    "unknown policy '{other}' (expected always_on|timers|naive|random|rl)"
                )))
            }
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            PolicyKind::AlwaysOn => "always_on",
            PolicyKind::TimersOnly => "timers",
            PolicyKind::Naive => "naive",
            PolicyKind::Random => "random",
            PolicyKind::RlLearned => "rl",
        }
    }
}

/// What a policy sees when deciding for one listening UE.
#[derive(Debug, Clone, Copy)]
pub struct DecisionView<'a> {
    pub encoded: &'a EncodedState,
    pub queue_bits: u64,
}

/// The learned policy: Q-network, exploration, and (in training) the
/// optimizer state.
pub struct RlPolicy {
    pub net: QNetwork,
    pub epsilon: f64,
    pub rng: ChaCha8Rng,
    pub trainer: Option<DqnTrainer>,
    hidden_buf: Vec<f64>,
    q_buf: Vec<f64>,
}

impl RlPolicy {
    pub fn new(net: QNetwork, epsilon: f64, rng: ChaCha8Rng, trainer: Option<DqnTrainer>) -> Self {
        let (_, hidden, out) = net.dims();
        RlPolicy {
            net,
            epsilon,
            rng,
            trainer,
            hidden_buf: vec![0.0; hidden],
            q_buf: vec![0.0; out],
        }
    }

    fn decide(&mut self, view: &DecisionView<'_>) -> usize {
        self.net.forward_into(&view.encoded.x, &mut self.hidden_buf, &mut self.q_buf);
        select_action(&self.q_buf, self.epsilon, &mut self.rng, true)
    }
}

/// A runnable policy with whatever state it needs.
pub enum PolicyEngine {
    AlwaysOn,
    TimersOnly,
    Naive,
    Random { rng: ChaCha8Rng },
    Rl(Box<RlPolicy>),
}

impl PolicyEngine {
    pub fn kind(&self) -> PolicyKind {
        match self {
            PolicyEngine::AlwaysOn => PolicyKind::AlwaysOn,
            PolicyEngine::TimersOnly => PolicyKind::TimersOnly,
            PolicyEngine::Naive => PolicyKind::Naive,
            PolicyEngine::Random { .. } => PolicyKind::Random,
            PolicyEngine::Rl(_) => PolicyKind::RlLearned,
        }
    }

    /// AlwaysOn bypasses the DRX engine entirely.
    pub fn disables_drx(&self) -> bool {
        matches!(self, PolicyEngine::AlwaysOn)
    }

    pub fn action_space(&self) -> ActionSpace {
        match self {
            PolicyEngine::Rl(rl) => ActionSpace { size: rl.net.dims().2 },
            _ => ActionSpace::legacy(),
        }
    }

    /// Action for one listening UE. Callers never invoke this for sleeping
    /// UEs; those are forced to the null action upstream.
    pub fn decide(&mut self, view: &DecisionView<'_>) -> usize {
        match self {
            PolicyEngine::AlwaysOn | PolicyEngine::TimersOnly => 0,
            PolicyEngine::Naive => usize::from(view.queue_bits == 0),
            PolicyEngine::Random { rng } => usize::from(rng.gen_bool(0.5)),
            PolicyEngine::Rl(rl) => rl.decide(view),
        }
    }
}

/// Queue-saturation guard: suppress any CE while the queue holds at least
/// `q_sat_bits`. Applied to the naive, random and learned policies.
pub fn stabilize(action: usize, queue_bits: u64, q_sat_bits: u64) -> usize {
    if queue_bits >= q_sat_bits {
        0
    } else {
        action
    }
}
