use std::path::PathBuf;

/// Errors surfaced by the simulator.
///
/// Internal invariant breaches (e.g. a HARQ feedback that does not match the
/// queue head) are programming errors and panic with the TTI index instead of
/// returning a variant here.
#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("input dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("cannot sample from an empty replay memory")]
    EmptyReplay,

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error(
        "downlink queue of UE {ue} exceeded the hard cap at TTI {tti}: \
         {bits} bits > {cap} bits (unstable system; raise queue_hard_cap_bits \
         only if the overload is intentional)"
    )]
    QueueCapExceeded { ue: usize, tti: u64, bits: u64, cap: u64 },

    #[error("non-finite training loss ({loss}) at train step {step}")]
    NonFiniteLoss { loss: f64, step: u64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SimError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
