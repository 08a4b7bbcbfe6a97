//! Deterministic derivation of independent RNG substreams.
//!
//! Every source of randomness in an experiment (per-UE traffic, per-UE
//! fading, policy exploration, replay sampling, weight init, UE-count draw)
//! gets its own ChaCha stream derived from the master seed plus a tag path.
//! Keeping the streams separate is what makes the null-action RL run
//! reproduce the timers-only trajectory bit for bit: policy draws never
//! perturb the world.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. The numeric values are part of the reproducibility contract:
/// changing them changes every seeded trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamId {
    Traffic { ue: usize },
    Channel { ue: usize },
    ChannelInit { ue: usize },
    Policy,
    Exploration,
    ReplaySampling,
    WeightInit,
    UeCount,
}

impl StreamId {
    fn tag(self) -> u64 {
        match self {
            StreamId::Traffic { ue } => 0x0100 + ue as u64,
            StreamId::Channel { ue } => 0x0200 + ue as u64,
            StreamId::ChannelInit { ue } => 0x0300 + ue as u64,
            StreamId::Policy => 0x0400,
            StreamId::Exploration => 0x0401,
            StreamId::ReplaySampling => 0x0402,
            StreamId::WeightInit => 0x0403,
            StreamId::UeCount => 0x0404,
        }
    }
}

/// splitmix64 finalizer; good enough to decorrelate tagged substreams.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for episode `episode` of run `run_seed`.
pub fn episode_seed(run_seed: u64, episode: u64) -> u64 {
    splitmix64(splitmix64(run_seed) ^ episode.wrapping_mul(0xa076_1d64_78bd_642f))
}

/// A ChaCha stream for one randomness source within one episode.
pub fn stream(episode_seed: u64, id: StreamId) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(episode_seed ^ splitmix64(id.tag())))
}
