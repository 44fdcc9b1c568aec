//! Deterministic random number streams.
//!
//! Every source of randomness in a run is a separate named stream derived
//! from the single master seed. Streams never share state, so changing how
//! one consumer draws (say, a worker taking larger minibatches) cannot
//! perturb any other consumer (say, the event scheduler). That separation
//! is what makes runs reproducible and defensible: two runs with the same
//! master seed see the same activation schedule even if per-worker
//! behavior differs.
//!
//! Streams are ChaCha12 generators keyed by (master seed, stream tag,
//! stream index) through a splitmix64 expansion.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// A named random stream within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Global event scheduler: activation order and exponential gaps.
    Scheduler,
    /// Initial parameter vector of worker `i`.
    WorkerInit(usize),
    /// Private per-worker randomness: minibatch sampling for honest
    /// workers, response noise for Byzantine ones.
    WorkerPrivate(usize),
    /// Dataset shard assignment of worker `i`.
    Shard(usize),
    /// Synthetic problem generation for worker `i`.
    Centers(usize),
}

impl Stream {
    fn tag_index(self) -> (u64, u64) {
        match self {
            Stream::Scheduler => (1, 0),
            Stream::WorkerInit(i) => (2, i as u64),
            Stream::WorkerPrivate(i) => (3, i as u64),
            Stream::Shard(i) => (4, i as u64),
            Stream::Centers(i) => (5, i as u64),
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Build the generator for one stream of a run keyed by `master_seed`.
pub fn stream_rng(master_seed: u64, stream: Stream) -> ChaCha12Rng {
    let (tag, index) = stream.tag_index();
    // Fold tag and index into the state with distinct odd multipliers so
    // every (tag, index) pair lands on a different splitmix64 trajectory.
    let mut state = master_seed
        .wrapping_add(tag.wrapping_mul(0xA24B_AED4_963E_E407))
        .wrapping_add(index.wrapping_mul(0x9FB2_1C65_1E98_DF25));
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}
