//! Byzantine worker behavior.
//!
//! Byzantine workers run their own local SGD like everyone else but lie
//! when asked for their parameters. Three response attacks are modeled,
//! evaluated one per experiment:
//!
//! * add-noise: return the requester's own parameter plus fresh zero-mean
//!   Gaussian noise with a fixed per-coordinate variance, a stealthy
//!   attack that stays close to the requester;
//! * random-uniform: return a fresh vector with iid `U[0, 1)` coordinates,
//!   ignoring all training state;
//! * inverse: return the negation of the worker's own current parameter.
//!
//! Attackers never see anyone else's parameters: their local update takes
//! no responses argument, only the requester's parameter reaches the
//! response function, and fresh noise is drawn per request.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::filters::{honest_update, FilterRule, UpdateContext, UpdateOutcome};
use crate::model::ParamVector;

/// Which lie Byzantine workers tell when queried.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttackKind {
    /// Requester's parameter plus iid `N(0, sigma_sq)` per coordinate.
    AddNoise { sigma_sq: f64 },
    /// Fresh iid `U[0, 1)` coordinates.
    RandomUniform,
    /// Negation of the attacker's own parameter.
    Inverse,
}

/// The parameter a Byzantine worker reports to one requester.
pub fn byzantine_response(
    attack: AttackKind,
    requester_param: &ParamVector,
    own_param: &ParamVector,
    rng: &mut ChaCha12Rng,
) -> ParamVector {
    debug_assert_eq!(requester_param.dim(), own_param.dim());
    match attack {
        AttackKind::AddNoise { sigma_sq } => {
            assert!(sigma_sq >= 0.0, "noise variance must be non-negative");
            let normal = Normal::new(0.0, sigma_sq.sqrt()).expect("finite variance");
            ParamVector(
                requester_param
                    .iter()
                    .map(|&w| w + normal.sample(rng))
                    .collect(),
            )
        }
        AttackKind::RandomUniform => ParamVector(
            (0..requester_param.dim())
                .map(|_| rng.random::<f64>())
                .collect(),
        ),
        AttackKind::Inverse => {
            let mut w = own_param.clone();
            w.scale(-1.0);
            w
        }
    }
}

/// A Byzantine worker's own training step: plain local SGD on its shard,
/// identical to an honest non-collaborative update.
pub fn byzantine_local_update(
    worker_id: usize,
    own: &ParamVector,
    ctx: &UpdateContext,
    rng: &mut ChaCha12Rng,
) -> UpdateOutcome {
    honest_update(worker_id, own, &[], &FilterRule::NonCollaborative, ctx, rng)
}
