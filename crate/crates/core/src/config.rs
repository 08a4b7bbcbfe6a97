//! Experiment configuration: flat `key = value` text, one key per line,
//! `#` starts a comment. Unknown keys are fatal. Defaults reproduce the
//! standard system and training settings.

use std::path::Path;

use crate::drx::DrxConfig;
use crate::error::{Result, SimError};
use crate::phy::PhyParams;
use crate::rl::{EpsilonSchedule, FeatureNorms, OutputActivation};
use crate::traffic::XrTrafficParams;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    // system
    pub tti_ms: f64,
    pub bw_eff_hz: f64,
    pub rho: f64,
    pub csi_period_ttis: u64,
    pub snr_db: f64,
    pub drx_long_cycle_ttis: u64,
    pub drx_on_duration_ttis: u64,
    pub drx_inactivity_timer_ttis: u64,
    /// Fixed UE count for evaluation.
    pub num_ues: usize,
    /// Fixed UE count for training; 0 draws a fresh count per episode.
    pub train_num_ues: usize,
    /// Categorical weights for UE counts 1..=9 in training.
    pub ue_count_weights: [f64; 9],

    // traffic
    pub frame_interval_ms: f64,
    pub mean_packet_bits: f64,
    pub size_std_frac: f64,
    pub size_min_frac: f64,
    pub size_max_frac: f64,
    pub jitter_std_ms: f64,
    pub jitter_min_ms: f64,
    pub jitter_max_ms: f64,

    // learning
    pub erm_capacity: usize,
    pub batch_size: usize,
    pub action_space: usize,
    pub hidden_neurons: usize,
    pub output_activation: OutputActivation,
    pub target_sync_period: u64,
    /// Gradient-step cadence in TTIs (1 = every TTI once the memory fills).
    pub train_period_ttis: u64,
    pub satisfaction_window: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    pub episodes: u64,
    pub eval_episodes: u64,
    pub ttis_per_episode: u64,
    pub num_runs: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_step_episodes: u64,
    pub epsilon_end_episode: u64,
    pub eval_epsilon: f64,
    pub beta: f64,
    pub delta_ms: u64,

    /// Link-adaptation backoff in dB applied when sizing TBs.
    pub link_margin_db: f64,

    // guards and normalization
    pub q_sat_bits: u64,
    pub queue_hard_cap_bits: u64,
    pub norm_ttnc_ttis: f64,
    pub norm_age_ttis: f64,

    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            tti_ms: 1.0,
            bw_eff_hz: 72e6,
            rho: 0.99,
            csi_period_ttis: 10,
            snr_db: 10.0,
            drx_long_cycle_ttis: 16,
            drx_on_duration_ttis: 8,
            drx_inactivity_timer_ttis: 8,
            num_ues: 1,
            train_num_ues: 0,
            ue_count_weights: [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2.5, 2.5],
            frame_interval_ms: 16.6,
            mean_packet_bits: 1e6,
            size_std_frac: 0.105,
            size_min_frac: 0.5,
            size_max_frac: 1.5,
            jitter_std_ms: 2.0,
            jitter_min_ms: -4.0,
            jitter_max_ms: 4.0,
            erm_capacity: 100_000,
            batch_size: 256,
            action_space: 2,
            hidden_neurons: 40,
            output_activation: OutputActivation::Linear,
            target_sync_period: 100,
            train_period_ttis: 1,
            satisfaction_window: 20,
            gamma: 1.0,
            learning_rate: 1e-3,
            episodes: 750,
            eval_episodes: 250,
            ttis_per_episode: 8000,
            num_runs: 30,
            epsilon_start: 0.8,
            epsilon_end: 1e-6,
            epsilon_step_episodes: 30,
            epsilon_end_episode: 300,
            eval_epsilon: 1e-6,
            beta: 0.95,
            delta_ms: 20,
            link_margin_db: 0.0,
            q_sat_bits: 2_000_000,
            queue_hard_cap_bits: 50_000_000,
            norm_ttnc_ttis: 16.0,
            norm_age_ttis: 20.0,
            seed: 1,
        }
    }
}

macro_rules! parse_key {
    ($cfg:ident, $key:ident, $value:ident, { $($name:ident : $kind:tt),* $(,)? }) => {
        match $key {
            $(stringify!($name) => parse_key!(@set $cfg, $name, $value, $kind),)*
            other => {
                return Err(SimError::Config(format!("unknown key '{other}'")));
            }
        }
    };
    (@set $cfg:ident, $name:ident, $value:ident, num) => {
        $cfg.$name = parse_num($value, stringify!($name))?
    };
    (@set $cfg:ident, $name:ident, $value:ident, special) => {
        set_special(&mut $cfg, stringify!($name), $value)?
    };
}

fn parse_num<T: TryFromF64>(value: &str, key: &str) -> Result<T> {
    let v: f64 = value
        .parse()
        .map_err(|_| SimError::Config(format!("key '{key}': '{value}' is not a number")))?;
    T::try_from_f64(v).ok_or_else(|| {
        SimError::Config(format!("key '{key}': {value} is out of range for this field"))
    })
}

trait TryFromF64: Sized {
    fn try_from_f64(v: f64) -> Option<Self>;
}

impl TryFromF64 for f64 {
    fn try_from_f64(v: f64) -> Option<Self> {
        v.is_finite().then_some(v)
    }
}

impl TryFromF64 for u64 {
    fn try_from_f64(v: f64) -> Option<Self> {
        (v.is_finite() && v >= 0.0 && v <= u64::MAX as f64 && v.fract() == 0.0).then_some(v as u64)
    }
}

impl TryFromF64 for usize {
    fn try_from_f64(v: f64) -> Option<Self> {
        u64::try_from_f64(v).and_then(|x| usize::try_from(x).ok())
    }
}

fn set_special(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "output_activation" => {
            cfg.output_activation = match value {
                "linear" => OutputActivation::Linear,
                "softmax" => OutputActivation::Softmax,
                other => {
                    return Err(SimError::Config(format!(
                        "output_activation must be 'linear' or 'softmax', got '{other}'"
                    )))
                }
            };
        }
        "ue_count_weights" => {
            let parts: Vec<&str> = value.split(',').map(str::trim).collect();
            if parts.len() != 9 {
                return Err(SimError::Config(format!(
                    "ue_count_weights needs 9 comma-separated values, got {}",
                    parts.len()
                )));
            }
            for (i, p) in parts.iter().enumerate() {
                cfg.ue_count_weights[i] = p.parse().map_err(|_| {
                    SimError::Config(format!("ue_count_weights entry '{p}' is not a number"))
                })?;
            }
        }
        _ => unreachable!("unhandled special key {key}"),
    }
    Ok(())
}

impl std::str::FromStr for ExperimentConfig {
    type Err = SimError;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                SimError::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            parse_key!(cfg, key, value, {
                tti_ms: num, bw_eff_hz: num, rho: num, csi_period_ttis: num, snr_db: num,
                drx_long_cycle_ttis: num, drx_on_duration_ttis: num,
                drx_inactivity_timer_ttis: num, num_ues: num, train_num_ues: num,
                ue_count_weights: special,
                frame_interval_ms: num, mean_packet_bits: num, size_std_frac: num,
                size_min_frac: num, size_max_frac: num, jitter_std_ms: num,
                jitter_min_ms: num, jitter_max_ms: num,
                erm_capacity: num, batch_size: num, action_space: num, hidden_neurons: num,
                output_activation: special, target_sync_period: num, train_period_ttis: num,
                satisfaction_window: num, gamma: num, learning_rate: num, episodes: num,
                eval_episodes: num, ttis_per_episode: num, num_runs: num,
                epsilon_start: num, epsilon_end: num, epsilon_step_episodes: num,
                epsilon_end_episode: num, eval_epsilon: num, beta: num, delta_ms: num,
                link_margin_db: num,
                q_sat_bits: num, queue_hard_cap_bits: num, norm_ttnc_ttis: num,
                norm_age_ttis: num, seed: num,
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        text.parse::<Self>().map_err(|e| SimError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        fn bail(msg: impl Into<String>) -> Result<()> {
            Err(SimError::Config(msg.into()))
        }
        if self.tti_ms != 1.0 {
            return bail("tti_ms: only the 1 ms TTI grid is supported");
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bail(format!("rho must lie in (0,1), got {}", self.rho));
        }
        if self.bw_eff_hz <= 0.0 {
            return bail("bw_eff_hz must be positive");
        }
        if self.csi_period_ttis < 1 {
            return bail("csi_period_ttis must be >= 1");
        }
        self.drx_config().validate()?;
        if !(1..=9).contains(&self.num_ues) {
            return bail(format!("num_ues must lie in 1..=9, got {}", self.num_ues));
        }
        if self.train_num_ues > 9 {
            return bail("train_num_ues must lie in 0..=9 (0 = resample per episode)");
        }
        if self.ue_count_weights.iter().any(|&w| w < 0.0)
            || self.ue_count_weights.iter().sum::<f64>() <= 0.0
        {
            return bail("ue_count_weights must be non-negative with a positive sum");
        }
        self.traffic_params().validate()?;
        if self.batch_size < 1 || self.erm_capacity < self.batch_size {
            return bail("need batch_size >= 1 and erm_capacity >= batch_size");
        }
        if self.action_space != 2 && self.action_space != 7 {
            return bail(format!("action_space must be 2 or 7, got {}", self.action_space));
        }
        if self.hidden_neurons < 1 {
            return bail("hidden_neurons must be >= 1");
        }
        if self.target_sync_period < 1 || self.train_period_ttis < 1 {
            return bail("target_sync_period and train_period_ttis must be >= 1");
        }
        if self.satisfaction_window < 1 {
            return bail("satisfaction_window must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bail("gamma must lie in [0,1]");
        }
        if self.learning_rate <= 0.0 {
            return bail("learning_rate must be positive");
        }
        if self.episodes < 1 || self.eval_episodes < 1 || self.ttis_per_episode < 1 {
            return bail("episode counts and episode length must be >= 1");
        }
        if !(0.0 < self.epsilon_end && self.epsilon_end <= self.epsilon_start)
            || self.epsilon_start > 1.0
        {
            return bail("need 0 < epsilon_end <= epsilon_start <= 1");
        }
        if self.epsilon_step_episodes < 1
            || self.epsilon_end_episode < self.epsilon_step_episodes
            || self.epsilon_end_episode % self.epsilon_step_episodes != 0
        {
            return bail("epsilon_end_episode must be a positive multiple of epsilon_step_episodes");
        }
        if !(0.0..=1.0).contains(&self.eval_epsilon) {
            return bail("eval_epsilon must lie in [0,1]");
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bail("beta must lie in (0,1]");
        }
        if self.delta_ms < 1 {
            return bail("delta_ms must be >= 1");
        }
        if self.q_sat_bits == 0 || self.queue_hard_cap_bits <= self.q_sat_bits {
            return bail("need 0 < q_sat_bits < queue_hard_cap_bits");
        }
        if self.norm_ttnc_ttis <= 0.0 || self.norm_age_ttis <= 0.0 {
            return bail("normalization constants must be positive");
        }
        if !(0.0..=30.0).contains(&self.link_margin_db) {
            return bail("link_margin_db must lie in [0, 30]");
        }
        Ok(())
    }

    pub fn snr_linear(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    /// Delay budget in TTIs (the TTI grid is 1 ms).
    pub fn delta_ttis(&self) -> u64 {
        self.delta_ms
    }

    pub fn phy_params(&self) -> PhyParams {
        PhyParams {
            rho: self.rho,
            snr_linear: self.snr_linear(),
            bw_eff_hz: self.bw_eff_hz,
            tti_s: self.tti_ms * 1e-3,
            csi_period_ttis: self.csi_period_ttis,
            link_margin_db: self.link_margin_db,
        }
    }

    pub fn drx_config(&self) -> DrxConfig {
        DrxConfig {
            long_cycle_ttis: self.drx_long_cycle_ttis,
            on_duration_ttis: self.drx_on_duration_ttis,
            inactivity_timer_ttis: self.drx_inactivity_timer_ttis,
            cycle_offset_ttis: 0,
        }
    }

    pub fn traffic_params(&self) -> XrTrafficParams {
        XrTrafficParams {
            frame_interval_ms: self.frame_interval_ms,
            mean_packet_bits: self.mean_packet_bits,
            size_std_frac: self.size_std_frac,
            size_min_frac: self.size_min_frac,
            size_max_frac: self.size_max_frac,
            jitter_std_ms: self.jitter_std_ms,
            jitter_min_ms: self.jitter_min_ms,
            jitter_max_ms: self.jitter_max_ms,
        }
    }

    pub fn feature_norms(&self) -> FeatureNorms {
        FeatureNorms {
            ttnc_ttis: self.norm_ttnc_ttis,
            age_ttis: self.norm_age_ttis,
            queue_sat_bits: self.q_sat_bits as f64,
            max_ues: 9.0,
        }
    }

    pub fn epsilon_schedule(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            start: self.epsilon_start,
            end: self.epsilon_end,
            step_every: self.epsilon_step_episodes,
            end_episode: self.epsilon_end_episode,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::str::FromStr;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn defaults_match_the_standard_tables() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.tti_ms, 1.0);
        assert_eq!(cfg.bw_eff_hz, 72e6);
        assert_eq!(cfg.rho, 0.99);
        assert_eq!(cfg.csi_period_ttis, 10);
        assert_eq!(cfg.snr_db, 10.0);
        assert_eq!(cfg.drx_long_cycle_ttis, 16);
        assert_eq!(cfg.drx_on_duration_ttis, 8);
        assert_eq!(cfg.drx_inactivity_timer_ttis, 8);
        assert_eq!(cfg.frame_interval_ms, 16.6);
        assert_eq!(cfg.mean_packet_bits, 1e6);
        assert_eq!(cfg.size_std_frac, 0.105);
        assert_eq!(cfg.erm_capacity, 100_000);
        assert_eq!(cfg.batch_size, 256);
        assert_eq!(cfg.hidden_neurons, 40);
        assert_eq!(cfg.target_sync_period, 100);
        assert_eq!(cfg.satisfaction_window, 20);
        assert_eq!(cfg.gamma, 1.0);
        assert_eq!(cfg.learning_rate, 1e-3);
        assert_eq!(cfg.episodes, 750);
        assert_eq!(cfg.eval_episodes, 250);
        assert_eq!(cfg.ttis_per_episode, 8000);
        assert_eq!(cfg.num_runs, 30);
        assert_eq!(cfg.epsilon_start, 0.8);
        assert_eq!(cfg.epsilon_end, 1e-6);
        assert_eq!(cfg.beta, 0.95);
        assert_eq!(cfg.delta_ms, 20);
    }

    #[test]
    fn parses_keys_comments_and_blanks() {
        let cfg = ExperimentConfig::from_str(
            "# system\n\
             rho = 0.95\n\
             action_space = 7   # custom CEs\n\
             \n\
             ue_count_weights = 1,1,1,1,1,1,1,1,1\n\
             output_activation = softmax\n\
             seed = 99\n",
        )
        .unwrap();
        assert_eq!(cfg.rho, 0.95);
        assert_eq!(cfg.action_space, 7);
        assert_eq!(cfg.ue_count_weights[7], 1.0);
        assert_eq!(cfg.output_activation, OutputActivation::Softmax);
        assert_eq!(cfg.seed, 99);
    }

    #[test]
    fn unknown_key_is_fatal() {
        let err = ExperimentConfig::from_str("no_such_knob = 3\n").unwrap_err();
        assert!(format!("{err}").contains("no_such_knob"));
    }

    #[test]
    fn out_of_range_values_are_fatal() {
        assert!(ExperimentConfig::from_str("rho = 1.5\n").is_err());
        assert!(ExperimentConfig::from_str("action_space = 3\n").is_err());
        assert!(ExperimentConfig::from_str("beta = 0\n").is_err());
        assert!(ExperimentConfig::from_str("num_ues = 10\n").is_err());
        assert!(ExperimentConfig::from_str("drx_on_duration_ttis = 40\n").is_err());
        assert!(ExperimentConfig::from_str("batch_size = 0\n").is_err());
        assert!(ExperimentConfig::from_str("erm_capacity = 10\n").is_err());
    }

    #[test]
    fn malformed_lines_are_fatal() {
        assert!(ExperimentConfig::from_str("rho 0.9\n").is_err());
        assert!(ExperimentConfig::from_str("rho = abc\n").is_err());
        assert!(ExperimentConfig::from_str("num_ues = 1.5\n").is_err());
    }

    #[test]
    fn snr_conversion() {
        let cfg = ExperimentConfig::default();
        assert!((cfg.snr_linear() - 10.0).abs() < 1e-12);
    }
}
