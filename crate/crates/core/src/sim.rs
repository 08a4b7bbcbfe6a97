//! The TTI loop. Event order within one TTI t:
//!
//! 1. HARQ feedback for the TB of t-1 lands: queue bits of ACKed segments
//!    are removed, completed SDUs recorded, a carried CE takes effect on
//!    both sides of the link.
//! 2. Traffic arrivals stamped t enter the queues.
//! 3. UEs whose CSI report is due (and who are listening) report h(t).
//! 4. The policy decides one action per listening UE (features reflect the
//!    t-1 outcome, which arrived in step 1).
//! 5. The scheduler grants at most one UE; its TB is assembled (carrying
//!    that UE's CE if it decided one) and transmitted. A CE decided by a UE
//!    that did not get the grant is discarded this TTI.
//! 6. Every UE's DRX machine ticks into the next TTI.
//! 7. Rewards accrue; metrics are recorded.
//! 8. In training, one gradient step once the replay memory can fill a
//!    batch.

use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::drx::{
    apply_ce, drx_tick, remaining_in_state, time_until_next_cycle, DrxConfig, DrxState,
};
use crate::error::{Result, SimError};
use crate::mac::{assemble_tb, process_feedback, DlQueue, MacCe, Sdu, TransportBlock};
use crate::metrics::EpisodeRecord;
use crate::phy::{
    csi_report_due, deliver_csi_report, select_tbs, step_channel, tb_outcome, ChannelState,
    PhyParams,
};
use crate::policy::{stabilize, ActionSpace, DecisionView, PolicyEngine};
use crate::rl::{
    encode_frame, resource_usage_of, reward, EncodedState, FeatureHistory, FeatureNorms,
    ResourceUsage, SatisfactionWindow, StateFeatures, Transition,
};
use crate::scheduler::{RrState, UeSchedView};
use crate::seeds::{stream, StreamId};
use crate::traffic::{generate_arrivals, SduArrival};

/// A decision awaiting its closing state: rewards accumulate on it until the
/// UE's next decision TTI (or the episode end, which closes it as terminal).
#[derive(Debug, Clone)]
struct PendingDecision {
    s: EncodedState,
    s_tti: u64,
    action: usize,
    acc_reward: f64,
    /// Cleared when a non-null action was discarded for lack of a grant.
    storable: bool,
}

/// Everything the simulator tracks for one UE.
pub struct UeContext {
    pub id: usize,
    pub queue: DlQueue,
    pub drx: DrxState,
    pub channel: ChannelState,
    chan_rng: ChaCha8Rng,
    arrivals: Vec<SduArrival>,
    next_arrival: usize,
    next_sdu_id: u64,
    pub sat_window: SatisfactionWindow,
    history: FeatureHistory,
    pending: Option<PendingDecision>,
    // Outcome of TTI t-1, feeding the features of TTI t.
    last_ack: bool,
    last_ru: ResourceUsage,
    // Valid for the TTI being processed.
    active_now: bool,
    // Episode accumulators.
    pub active_ttis: u64,
    pub cum_reward: f64,
    pub delays: Vec<u64>,
    w_trace: Vec<bool>,
}

/// TB in the air: the PHY outcome is fixed at transmission time but only
/// revealed to the MAC by the feedback one TTI later.
struct InFlightTb {
    tb: TransportBlock,
    delivered: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    /// False for the Always-ON policy, which bypasses the DRX engine.
    pub drx_enabled: bool,
    /// Record the detailed per-TTI trace (tests and audits).
    pub trace: bool,
    /// Abort on a queue exceeding the configured hard cap (evaluation runs).
    pub enforce_queue_cap: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CeEmission {
    pub tti: u64,
    pub ue: usize,
    pub ce: MacCe,
    pub queue_bits_at_decision: u64,
}

/// Detailed per-episode trace for oracle cross-checks.
#[derive(Debug, Clone, Default)]
pub struct EpisodeTrace {
    /// Online sigma per UE per TTI.
    pub sigma: Vec<Vec<f64>>,
    pub queue_bits: Vec<Vec<u64>>,
    /// (tti, ue, post-stabilization action) for every listening-UE decision.
    pub decisions: Vec<(u64, usize, usize)>,
    /// (tti, ue, raw features) at every decision point.
    pub features: Vec<(u64, usize, StateFeatures)>,
    /// (tti, ue) grants.
    pub scheduled: Vec<(u64, usize)>,
    pub ce_emissions: Vec<CeEmission>,
    /// (s_tti, ue) for every transition pushed into the replay memory.
    pub erm_pushes: Vec<(u64, usize)>,
    /// (feedback_tti, delay) per UE in recording order.
    pub deliveries: Vec<Vec<(u64, u64)>>,
}

pub struct Simulation {
    phy: PhyParams,
    drxc: DrxConfig,
    norms: FeatureNorms,
    beta: f64,
    delta_ttis: u64,
    q_sat_bits: u64,
    queue_cap: Option<u64>,
    n_t: u64,
    train_period: u64,
    drx_enabled: bool,

    pub ues: Vec<UeContext>,
    rr: RrState,
    t: u64,
    in_flight: Option<InFlightTb>,
    max_queue_bits: u64,
    action_counts: Vec<u64>,

    trace: Option<EpisodeTrace>,

    // per-TTI scratch
    views: Vec<UeSchedView>,
    decisions: Vec<Option<usize>>,
}

impl Simulation {
    pub fn new(
        cfg: &ExperimentConfig,
        num_ues: usize,
        episode_seed: u64,
        action_space: ActionSpace,
        opts: SimOptions,
    ) -> Result<Self> {
        if !(1..=9).contains(&num_ues) {
            return Err(SimError::InvalidParameter(format!("num_ues {num_ues} outside 1..=9")));
        }
        let traffic = cfg.traffic_params();
        let n_t = cfg.ttis_per_episode;
        let drxc = cfg.drx_config();
        let mut ues = Vec::with_capacity(num_ues);
        for id in 0..num_ues {
            let mut traffic_rng = stream(episode_seed, StreamId::Traffic { ue: id });
            let arrivals = generate_arrivals(&traffic, n_t, &mut traffic_rng)?;
            let mut chan_rng = stream(episode_seed, StreamId::Channel { ue: id });
            let channel = ChannelState::init(&mut chan_rng);
            ues.push(UeContext {
                id,
                queue: DlQueue::new(),
                drx: DrxState::at_episode_start(&drxc),
                channel,
                chan_rng,
                arrivals,
                next_arrival: 0,
                next_sdu_id: 0,
                sat_window: SatisfactionWindow::new(cfg.satisfaction_window),
                history: FeatureHistory::new(),
                pending: None,
                last_ack: false,
                last_ru: ResourceUsage::NotScheduled,
                active_now: false,
                active_ttis: 0,
                cum_reward: 0.0,
                delays: Vec::new(),
                w_trace: Vec::with_capacity(n_t as usize),
            });
        }
        let trace = opts.trace.then(|| EpisodeTrace {
            sigma: vec![Vec::with_capacity(n_t as usize); num_ues],
            queue_bits: vec![Vec::with_capacity(n_t as usize); num_ues],
            deliveries: vec![Vec::new(); num_ues],
            ..Default::default()
        });
        Ok(Simulation {
            phy: cfg.phy_params(),
            drxc,
            norms: cfg.feature_norms(),
            beta: cfg.beta,
            delta_ttis: cfg.delta_ttis(),
            q_sat_bits: cfg.q_sat_bits,
            queue_cap: opts.enforce_queue_cap.then_some(cfg.queue_hard_cap_bits),
            n_t,
            train_period: cfg.train_period_ttis,
            drx_enabled: opts.drx_enabled,
            ues,
            rr: RrState::new(),
            t: 0,
            in_flight: None,
            max_queue_bits: 0,
            action_counts: vec![0; action_space.size],
            trace,
            views: Vec::with_capacity(num_ues),
            decisions: vec![None; num_ues],
        })
    }

    pub fn now(&self) -> u64 {
        self.t
    }

    pub fn max_queue_bits(&self) -> u64 {
        self.max_queue_bits
    }

    fn ue_listening(&self, ue: &UeContext) -> bool {
        if self.drx_enabled {
            ue.drx.listening()
        } else {
            true
        }
    }

    /// One TTI of the world under `policy`.
    pub fn step(&mut self, policy: &mut PolicyEngine) -> Result<()> {
        let t = self.t;
        assert!(t < self.n_t, "episode over");
        let training = matches!(policy, PolicyEngine::Rl(rl) if rl.trainer.is_some());
        let action_space = policy.action_space();

        // The fading process advances exactly one step per TTI; h(0) is the
        // init draw.
        if t > 0 {
            for ue in &mut self.ues {
                step_channel(&mut ue.channel, self.phy.rho, &mut ue.chan_rng);
            }
        }

        // (1) Feedback for the TB of t-1.
        for ue in &mut self.ues {
            ue.last_ack = false;
            ue.last_ru = ResourceUsage::NotScheduled;
        }
        if let Some(fl) = self.in_flight.take() {
            let ue = &mut self.ues[fl.tb.ue_id];
            ue.last_ack = fl.delivered;
            ue.last_ru = resource_usage_of(true, fl.delivered, fl.tb.payload_bits());
            let fb = process_feedback(&mut ue.queue, &fl.tb, fl.delivered);
            for &(_, delay) in &fb.delivered_sdus {
                ue.sat_window.record(delay);
                ue.delays.push(delay);
                if let Some(trace) = &mut self.trace {
                    trace.deliveries[fl.tb.ue_id].push((t, delay));
                }
            }
            if fb.ce_applied && self.drx_enabled {
                if let Some(ce) = fl.tb.ce {
                    ue.drx = apply_ce(ue.drx, ce);
                }
            }
        }

        // (2) Arrivals stamped t.
        for ue in &mut self.ues {
            while ue.next_arrival < ue.arrivals.len()
                && ue.arrivals[ue.next_arrival].arrival_tti == t
            {
                let a = ue.arrivals[ue.next_arrival];
                ue.queue.enqueue(Sdu::new(ue.next_sdu_id, t, a.size_bits));
                ue.next_sdu_id += 1;
                ue.next_arrival += 1;
            }
            self.max_queue_bits = self.max_queue_bits.max(ue.queue.total_bits());
            if let Some(cap) = self.queue_cap {
                if ue.queue.total_bits() > cap {
                    return Err(SimError::QueueCapExceeded {
                        ue: ue.id,
                        tti: t,
                        bits: ue.queue.total_bits(),
                        cap,
                    });
                }
            }
        }

        // W_u(t) is now fixed for this TTI.
        let mut n_active = 0u32;
        let mut total_active_queue_bits = 0u64;
        for i in 0..self.ues.len() {
            let listening = self.ue_listening(&self.ues[i]);
            let ue = &mut self.ues[i];
            ue.active_now = listening;
            ue.w_trace.push(listening);
            if listening {
                ue.active_ttis += 1;
                n_active += 1;
                total_active_queue_bits += ue.queue.total_bits();
            }
        }

        // (3) CSI reports due at t, listening UEs only.
        for ue in &mut self.ues {
            if csi_report_due(t, self.phy.csi_period_ttis, ue.active_now) {
                deliver_csi_report(&mut ue.channel, t);
            }
        }

        // (4) One decision per listening UE. The scheduling indicator is the
        // data grant the round-robin scan would hand out this TTI, computed
        // before decisions since the CE choices cannot precede it.
        self.views.clear();
        for ue in &self.ues {
            self.views.push(UeSchedView {
                active: ue.active_now,
                queue_bits: ue.queue.total_bits(),
                pending_ce: false,
            });
        }
        let tentative_grant = self.rr.peek(&self.views);
        for i in 0..self.ues.len() {
            self.decisions[i] = None;
            if !self.ues[i].active_now {
                continue;
            }
            let feats = StateFeatures {
                ack: self.ues[i].last_ack,
                scheduled: tentative_grant == Some(i),
                ttnc: time_until_next_cycle(t, &self.drxc),
                age_ttis: self.ues[i].queue.oldest_arrival_tti().map_or(0, |a| t - a),
                queue_bits: self.ues[i].queue.total_bits(),
                remaining_state: remaining_in_state(&self.ues[i].drx, &self.drxc, t),
                resource_usage: self.ues[i].last_ru,
                n_active_ues: n_active,
                total_queue_bits: total_active_queue_bits,
            };
            if let Some(trace) = &mut self.trace {
                trace.features.push((t, i, feats));
            }
            let frame = encode_frame(&feats, &self.norms);
            self.ues[i].history.push(frame);
            let encoded = self.ues[i].history.encode();
            let queue_bits = self.ues[i].queue.total_bits();
            let action = policy.decide(&DecisionView { encoded: &encoded, queue_bits });
            let action = stabilize(action, queue_bits, self.q_sat_bits);
            self.decisions[i] = Some(action);
            self.action_counts[action] += 1;
            if let Some(trace) = &mut self.trace {
                trace.decisions.push((t, i, action));
            }
            if training {
                // Close the previous pending decision against today's state.
                if let Some(prev) = self.ues[i].pending.take() {
                    if prev.storable {
                        let s_tti = prev.s_tti;
                        push_transition(policy, prev, encoded, false);
                        if let Some(trace) = &mut self.trace {
                            trace.erm_pushes.push((s_tti, i));
                        }
                    }
                }
                self.ues[i].pending = Some(PendingDecision {
                    s: encoded,
                    s_tti: t,
                    action,
                    acc_reward: 0.0,
                    storable: true,
                });
            }
        }

        // (5) Scheduling and transmission.
        for (i, d) in self.decisions.iter().enumerate() {
            self.views[i].pending_ce = matches!(d, Some(a) if *a != 0);
        }
        let picked = self.rr.schedule(&self.views);
        if let Some(i) = picked {
            debug_assert!(self.ues[i].active_now);
            let action = self.decisions[i].unwrap_or(0);
            let ce = action_space.ce_for(action);
            let ue = &mut self.ues[i];
            let tbs = select_tbs(ue.channel.h_reported, &self.phy);
            let tb = assemble_tb(&ue.queue, i, tbs, ce, t);
            // A TB whose sub-PDUs carry no payload cannot fail in a way that
            // matters; control payloads are tiny next to the TB.
            let delivered =
                tb.payload_bits() == 0 || tb_outcome(ue.channel.h, tb.tbs_bits, &self.phy);
            if let Some(trace) = &mut self.trace {
                trace.scheduled.push((t, i));
                if let Some(ce) = tb.ce {
                    trace.ce_emissions.push(CeEmission {
                        tti: t,
                        ue: i,
                        ce,
                        queue_bits_at_decision: ue.queue.total_bits(),
                    });
                }
            }
            self.in_flight = Some(InFlightTb { tb, delivered });
        }
        if training {
            // A CE decided by a UE that was not granted had no effect and is
            // kept out of the replay memory.
            for i in 0..self.ues.len() {
                if let Some(action) = self.decisions[i] {
                    if action != 0 && picked != Some(i) {
                        if let Some(p) = &mut self.ues[i].pending {
                            p.storable = false;
                        }
                    }
                }
            }
        }

        // (6) DRX machines tick into t+1.
        if self.drx_enabled {
            for i in 0..self.ues.len() {
                let granted = picked == Some(i);
                self.ues[i].drx = drx_tick(self.ues[i].drx, &self.drxc, t, granted);
            }
        }

        // (7) Rewards for every UE, listening or not.
        for i in 0..self.ues.len() {
            let ue = &mut self.ues[i];
            let sigma = ue.sat_window.sigma(self.delta_ttis);
            let r = reward(sigma, self.beta, ue.active_now);
            ue.cum_reward += r;
            if let Some(p) = &mut ue.pending {
                p.acc_reward += r;
            }
            if let Some(trace) = &mut self.trace {
                trace.sigma[i].push(sigma);
                trace.queue_bits[i].push(ue.queue.total_bits());
            }
        }

        // (8) Learning.
        if training && t.is_multiple_of(self.train_period) {
            if let PolicyEngine::Rl(rl) = policy {
                if let Some(trainer) = &mut rl.trainer {
                    trainer.train_step(&mut rl.net)?;
                }
            }
        }

        self.t += 1;
        Ok(())
    }

    /// Runs the remaining TTIs of the episode.
    pub fn run_to_end(&mut self, policy: &mut PolicyEngine) -> Result<()> {
        while self.t < self.n_t {
            self.step(policy)?;
        }
        Ok(())
    }

    /// Closes the episode: open decisions become terminal transitions and
    /// the per-episode record is assembled.
    pub fn finish(&mut self, policy: &mut PolicyEngine) -> EpisodeRecord {
        assert_eq!(self.t, self.n_t, "finish called mid-episode");
        let training = matches!(policy, PolicyEngine::Rl(rl) if rl.trainer.is_some());
        if training {
            for i in 0..self.ues.len() {
                if let Some(prev) = self.ues[i].pending.take() {
                    if prev.storable {
                        let s_tti = prev.s_tti;
                        push_transition(policy, prev, EncodedState::zeroed(), true);
                        if let Some(trace) = &mut self.trace {
                            trace.erm_pushes.push((s_tti, i));
                        }
                    }
                }
            }
        }
        EpisodeRecord {
            w: self.ues.iter().map(|u| u.w_trace.clone()).collect(),
            delays: self.ues.iter().map(|u| u.delays.clone()).collect(),
            cum_rewards: self.ues.iter().map(|u| u.cum_reward).collect(),
            satisfaction_final: self
                .ues
                .iter()
                .map(|u| u.sat_window.sigma(self.delta_ttis))
                .collect(),
            action_histogram: self.action_counts.clone(),
            max_queue_bits: self.max_queue_bits,
            n_t: self.n_t,
        }
    }

    /// Streaming per-UE active-TTI counters (must equal the trace recount).
    pub fn streaming_active_ttis(&self) -> Vec<u64> {
        self.ues.iter().map(|u| u.active_ttis).collect()
    }

    pub fn take_trace(&mut self) -> Option<EpisodeTrace> {
        self.trace.take()
    }
}

fn push_transition(
    policy: &mut PolicyEngine,
    prev: PendingDecision,
    s_next: EncodedState,
    terminal: bool,
) {
    if let PolicyEngine::Rl(rl) = policy {
        if let Some(trainer) = &mut rl.trainer {
            trainer.erm.push(Transition {
                s: prev.s,
                a: prev.action,
                r: prev.acc_reward,
                s_next,
                terminal,
            });
        }
    }
}
