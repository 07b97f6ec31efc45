//! Seeded random streams.
//!
//! All randomness goes through ChaCha8, which produces the same stream on every
//! platform. A run derives independent streams from its seed by stream id, so
//! the agent's exploration draws never perturb the environment's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type PortableRng = ChaCha8Rng;

/// Stream used for agent-side decisions (exploration, tie-free sampling).
pub const AGENT_STREAM: u64 = 0;
/// Stream used by environments (resets, stochastic transitions).
pub const ENV_STREAM: u64 = 1;
/// Stream used by fixture generators and property probes.
pub const FIXTURE_STREAM: u64 = 2;

pub fn stream(seed: u64, stream_id: u64) -> PortableRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}
