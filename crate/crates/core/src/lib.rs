//! TTI-resolution simulator of a downlink cell where the base station
//! learns, with a small DQN, when to send MAC-layer sleep commands so that
//! UE listening time shrinks without breaking the latency budget.
//!
//! The crate splits along the system's seams:
//!
//! - [`traffic`]: quasi-periodic XR frame arrivals (truncated Gaussians).
//! - [`phy`]: AR(1) Rayleigh fading, periodic CSI with sleep-induced skips,
//!   TB sizing from the last report, capacity-outage delivery.
//! - [`mac`]: per-UE FIFO queue, TB segmentation and padding, control
//!   elements, ACK-gated removal.
//! - [`drx`]: the timer state machine both link ends replicate.
//! - [`scheduler`]: round-robin, one TB per TTI.
//! - [`rl`]: feature encoding, reward, Q-network, replay memory.
//! - [`policy`]: the baselines and the learned policy behind one interface.
//! - [`metrics`]: KPI aggregation and the CSV formats.
//! - [`sim`] / [`runner`] / [`config`]: the TTI loop and experiment drivers.

pub mod config;
pub mod drx;
pub mod error;
pub mod mac;
pub mod metrics;
pub mod phy;
pub mod policy;
pub mod rl;
pub mod runner;
pub mod scheduler;
pub mod seeds;
pub mod sim;
pub mod traffic;

pub use config::ExperimentConfig;
pub use error::{Result, SimError};
pub use policy::{ActionSpace, PolicyKind};
pub use runner::{evaluate, sweep_eval, train, EvalOutput, TrainOutput};
