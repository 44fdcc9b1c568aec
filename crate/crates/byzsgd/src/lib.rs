//! Deterministic simulator for decentralized, asynchronous SGD in the
//! presence of Byzantine workers.
//!
//! A fleet of `n` workers trains over disjoint data shards without a central
//! server. Workers wake up one at a time on independent exponential clocks;
//! the awake worker pulls the current parameter vectors of all its peers,
//! filters out the ones it distrusts, averages what survives with its own
//! parameters, and takes a local SGD step from that average. A configurable
//! subset of workers is Byzantine and answers pulls with adversarial vectors
//! instead of its true parameters.
//!
//! Two filtering rules are implemented, together with reference baselines:
//!
//! * **closest** keeps the `n - p - 1` peer vectors nearest to the
//!   requester's own parameters in Euclidean distance,
//! * **descent-threshold** keeps peers that are both within a shrinking
//!   distance threshold and in a descent direction for the requester's
//!   minibatch gradient,
//! * **krum** evaluates the worker's minibatch gradient at every shared
//!   parameter, scores those gradients by summed squared distance to
//!   their nearest neighbors, and applies only the best-scoring one,
//! * **non-collaborative** ignores peers entirely and runs plain local SGD.
//!
//! Everything is driven by a single master seed through named, independent
//! RNG streams, so a run is a pure function of its configuration: repeating
//! a run reproduces every tick, every minibatch, and every output file
//! byte for byte.
//!
//! The crate is organized bottom-up:
//!
//! * [`rng`] derives the per-purpose random streams,
//! * [`model`] holds parameter vectors and the two objective functions
//!   (softmax regression and a synthetic quadratic),
//! * [`data`] reads IDX image/label files and builds worker shards,
//! * [`filters`] implements the acceptance rules and the SGD update,
//! * [`adversary`] implements the Byzantine response models,
//! * [`clock`] samples the asynchronous activation sequence,
//! * [`engine`] wires the above into full runs and checks the two
//!   closed-form convergence bounds against measured trajectories,
//! * [`config`] resolves file, flag, and default settings,
//! * [`sweep`] plans mechanism comparisons and parameter sweeps and writes
//!   their CSV/JSON outputs.
//!
//! The `byzsgd` binary in this crate exposes `run`, `sweep`, and
//! `verify-bounds` subcommands over these modules.

pub mod adversary;
pub mod clock;
pub mod config;
pub mod data;
pub mod engine;
pub mod error;
pub mod filters;
pub mod model;
pub mod rng;
pub mod sweep;

pub use error::{Error, Result};
