//! Per-component RNG streams split from one master seed.
//!
//! Every consumer of randomness in a run (prompt construction, protocol
//! sampling, channel transitions, agent exploration, weight init) draws from
//! its own ChaCha8 stream. The streams share the master seed and differ only
//! in the ChaCha stream id, so changing how much randomness one component
//! consumes never shifts another component's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Prompt = 1,
    Sampling = 2,
    Channel = 3,
    Exploration = 4,
    Init = 5,
    Replay = 6,
}

pub fn stream_rng(master_seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream as u64);
    rng
}
