//! The asynchronous time model.
//!
//! Every worker wakes up on its own rate-1 Poisson clock. Superposing `N`
//! such clocks gives a rate-`N` Poisson master clock whose ticks each
//! belong to a uniformly random worker, so the scheduler simulates the
//! master clock directly: one `Exponential(N)` gap plus one uniform worker
//! draw per tick, O(1) instead of maintaining `N` competing timers.
//!
//! The scheduler owns a dedicated rng stream, so nothing a worker does
//! (batch sizes, attack noise) can perturb the activation sequence.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp};

use crate::rng::{stream_rng, Stream};

/// One master-clock tick: who acts, and when.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickEvent {
    /// 0-based tick index, increasing by exactly 1 per tick.
    pub index: u64,
    /// Simulated master time; gaps are iid `Exponential(N)`.
    pub time: f64,
    /// The worker this tick activates, uniform over `0..N`.
    pub worker: usize,
}

/// Generates the run's tick sequence deterministically from the master seed.
pub struct Scheduler {
    n: usize,
    rng: ChaCha12Rng,
    gap: Exp<f64>,
    next_index: u64,
    time: f64,
}

impl Scheduler {
    pub fn new(n: usize, master_seed: u64) -> Self {
        assert!(n >= 1, "need at least one worker");
        Scheduler {
            n,
            rng: stream_rng(master_seed, Stream::Scheduler),
            gap: Exp::new(n as f64).expect("positive rate"),
            next_index: 0,
            time: 0.0,
        }
    }

    pub fn next_tick(&mut self) -> TickEvent {
        let gap = self.gap.sample(&mut self.rng);
        self.time += gap;
        let event = TickEvent {
            index: self.next_index,
            time: self.time,
            worker: self.rng.random_range(0..self.n),
        };
        self.next_index += 1;
        event
    }
}
