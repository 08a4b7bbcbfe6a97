//! The DRX state machine, mirrored identically at BTS and UE.
//!
//! Timer logic: a long cycle of `long_cycle_ttis` opens a listening window
//! of `on_duration_ttis` at each cycle start; any received grant re-arms the
//! inactivity timer; timer expiry sends the UE to sleep until the next cycle
//! start. Control elements override the timers: `LongDrxCommand` sleeps the
//! UE until the next cycle start, `SkipDuration(d)` blanks PDCCH monitoring
//! for d TTIs and then resumes listening with a fresh inactivity timer.
//!
//! Both ends advance the machine from the same observable events (grants and
//! ACK-confirmed CEs), which is what keeps the BTS replica in lockstep with
//! the UE. A CE lost with its TB has no effect on either side.

use crate::mac::MacCe;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DrxConfig {
    pub long_cycle_ttis: u64,
    pub on_duration_ttis: u64,
    pub inactivity_timer_ttis: u64,
    pub cycle_offset_ttis: u64,
}

impl Default for DrxConfig {
    fn default() -> Self {
        DrxConfig {
            long_cycle_ttis: 16,
            on_duration_ttis: 8,
            inactivity_timer_ttis: 8,
            cycle_offset_ttis: 0,
        }
    }
}

impl DrxConfig {
    pub fn validate(&self) -> crate::error::Result<()> {
        if self.long_cycle_ttis < 1 || self.on_duration_ttis < 1 || self.inactivity_timer_ttis < 1 {
            return Err(crate::error::SimError::InvalidParameter(
                "DRX timers must be >= 1 TTI".into(),
            ));
        }
        if self.on_duration_ttis > self.long_cycle_ttis {
            return Err(crate::error::SimError::InvalidParameter(
                "onDuration cannot exceed the long cycle".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrxMode {
    /// Cycle-start listening window with its remaining budget.
    OnDuration { remaining: u64 },
    /// Listening kept alive by the inactivity timer.
    InactivityExtended { remaining: u64 },
    /// Asleep until the next cycle start.
    Sleep,
    /// PDCCH skipping for the remaining TTIs, then listening resumes.
    Skip { remaining: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DrxState {
    pub mode: DrxMode,
}

impl DrxState {
    /// State at TTI 0: the on-duration window when the cycle starts there,
    /// sleep until the first cycle start otherwise.
    pub fn at_episode_start(cfg: &DrxConfig) -> Self {
        let mut s = DrxState { mode: DrxMode::Sleep };
        if time_until_next_cycle(0, cfg) == cfg.long_cycle_ttis {
            s.mode = DrxMode::OnDuration { remaining: cfg.on_duration_ttis };
        }
        s
    }

    /// W_u(t): is the UE listening (monitoring PDCCH) this TTI.
    pub fn listening(&self) -> bool {
        matches!(self.mode, DrxMode::OnDuration { .. } | DrxMode::InactivityExtended { .. })
    }
}

/// Smallest k >= 1 with (t + k - offset) = 0 mod long_cycle.
pub fn time_until_next_cycle(t: u64, cfg: &DrxConfig) -> u64 {
    let cycle = cfg.long_cycle_ttis;
    let phase = (t + cycle - cfg.cycle_offset_ttis % cycle) % cycle;
    cycle - phase
}

/// Advances the machine by one TTI.
///
/// Called exactly once per TTI per UE after the scheduling outcome of TTI `t`
/// is known; the returned state is the one in force during TTI `t + 1`.
/// `data_notified` means the UE decoded a grant this TTI, which re-arms the
/// inactivity timer regardless of whether the TB payload survived.
pub fn drx_tick(state: DrxState, cfg: &DrxConfig, t: u64, data_notified: bool) -> DrxState {
    debug_assert!(!data_notified || state.listening(), "grant delivered to a sleeping UE");
    let mut mode = if data_notified {
        DrxMode::InactivityExtended { remaining: cfg.inactivity_timer_ttis }
    } else {
        match state.mode {
            DrxMode::OnDuration { remaining } => {
                if remaining <= 1 {
                    DrxMode::Sleep
                } else {
                    DrxMode::OnDuration { remaining: remaining - 1 }
                }
            }
            DrxMode::InactivityExtended { remaining } => {
                if remaining <= 1 {
                    DrxMode::Sleep
                } else {
                    DrxMode::InactivityExtended { remaining: remaining - 1 }
                }
            }
            DrxMode::Sleep => DrxMode::Sleep,
            DrxMode::Skip { remaining } => {
                if remaining <= 1 {
                    // Skipping over: back to listening with a fresh timer.
                    DrxMode::InactivityExtended { remaining: cfg.inactivity_timer_ttis }
                } else {
                    DrxMode::Skip { remaining: remaining - 1 }
                }
            }
        }
    };
    // A cycle boundary at t+1 reopens the listening window for sleepers.
    if mode == DrxMode::Sleep && time_until_next_cycle(t, cfg) == 1 {
        mode = DrxMode::OnDuration { remaining: cfg.on_duration_ttis };
    }
    DrxState { mode }
}

/// Applies a successfully decoded CE. The new mode is in force from the TTI
/// at which the feedback is processed (one TTI after the carrying TB).
pub fn apply_ce(_state: DrxState, ce: MacCe) -> DrxState {
    match ce {
        MacCe::LongDrxCommand => DrxState { mode: DrxMode::Sleep },
        MacCe::SkipDuration(d) => {
            debug_assert!(d >= 1);
            DrxState { mode: DrxMode::Skip { remaining: d } }
        }
    }
}

/// TTIs until the timer logic would change state on its own: the governing
/// timer for listening modes, the next cycle start for sleep, the remaining
/// skip for skipping.
pub fn remaining_in_state(state: &DrxState, cfg: &DrxConfig, t: u64) -> u64 {
    match state.mode {
        DrxMode::OnDuration { remaining } | DrxMode::InactivityExtended { remaining } => remaining,
        DrxMode::Sleep => time_until_next_cycle(t, cfg),
        DrxMode::Skip { remaining } => remaining,
    }
}
