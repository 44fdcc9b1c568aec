//! Acceptance rules and the honest worker update.
//!
//! An honest worker that has fetched everyone else's parameters must decide
//! whose to trust. Four rules are implemented:
//!
//! * closest-subset: keep the `N - p - 1` parameters nearest its own in
//!   Euclidean distance, for an assumed attacker count `p`;
//! * descent-threshold: keep any parameter that is both within a shrinking
//!   distance budget `delta / (t + 1)` and a descent direction for the
//!   worker's current minibatch loss (the candidate's minibatch gradient
//!   must not point away from the worker's own parameter);
//! * krum: evaluate the worker's minibatch gradient at every fetched
//!   parameter (its own is not a candidate), score those gradient
//!   vectors by the summed squared distance to their `N - p - 2`
//!   nearest peers, and apply only the minimum-score gradient; no
//!   averaging at all;
//! * non-collaborative: ignore everyone, plain local SGD.
//!
//! After filtering, the worker averages (fixed divisor `N - p` for the
//! closest rule, accepted-count + 1 for the descent rule), takes one SGD
//! step on a fresh minibatch at the averaged point (krum instead steps
//! from its own parameter along the selected gradient), and optionally
//! projects back to the unit sphere. All ties break toward the lower
//! worker id so runs are reproducible.

use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::data::{sample_minibatch, Shard};
use crate::model::{Model, ParamVector};

/// Which acceptance rule a worker runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterRule {
    /// Accept the `n - p_assumed - 1` closest parameters; average with
    /// fixed divisor `n - p_assumed`.
    Closest { p_assumed: usize },
    /// Accept parameters passing the distance threshold and descent
    /// conditions; average with divisor `accepted + 1`. `delta` may be
    /// `f64::INFINITY` to disable the distance threshold.
    Descent { delta: f64 },
    /// Apply the krum-selected gradient of one fetched parameter instead
    /// of averaging.
    Krum { p_assumed: usize },
    /// No communication: plain local SGD.
    NonCollaborative,
}

/// Per-responder verdict recorded for audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Accepted,
    /// Not among the closest slots (closest rule) or not selected (krum).
    DistanceRank,
    /// Failed the shrinking distance threshold.
    ThresholdFail,
    /// Failed the descent-direction test.
    DescentFail,
}

impl Decision {
    pub fn accepted(self) -> bool {
        self == Decision::Accepted
    }
}

/// Everything one worker decided about one tick's responses.
#[derive(Debug, Clone, PartialEq)]
pub struct AcceptanceRecord {
    pub tick: u64,
    pub requester: usize,
    /// One `(responder id, decision)` pair per response received.
    pub decisions: Vec<(usize, Decision)>,
}

impl AcceptanceRecord {
    pub fn accepted_count(&self) -> usize {
        self.decisions.iter().filter(|(_, d)| d.accepted()).count()
    }
}

/// Ids of the `n - p_assumed - 1` responders closest to `own`.
/// Ties break toward the lower id. The returned ids are sorted.
pub fn filter_closest(
    own: &ParamVector,
    shared: &[(usize, &ParamVector)],
    n: usize,
    p_assumed: usize,
) -> Vec<usize> {
    let slots = (n.max(p_assumed + 1) - p_assumed - 1).min(shared.len());
    let mut ranked: Vec<(f64, usize)> = shared
        .iter()
        .map(|&(id, w)| (own.dist_sq(w), id))
        .collect();
    ranked.sort_by(|a, b| a.partial_cmp(b).expect("non-finite distance"));
    let mut ids: Vec<usize> = ranked[..slots].iter().map(|&(_, id)| id).collect();
    ids.sort_unstable();
    ids
}

/// The descent-threshold verdict given the precomputed ingredients: the
/// requester-candidate distance and the inner product of the candidate's
/// minibatch gradient with (own - candidate).
pub fn descent_decision(dist: f64, grad_inner: f64, t: u64, delta: f64) -> Decision {
    if dist > delta / (t as f64 + 1.0) {
        Decision::ThresholdFail
    } else if grad_inner < 0.0 {
        Decision::DescentFail
    } else {
        Decision::Accepted
    }
}

/// Reference form of the descent-threshold rule for one candidate, taking
/// the candidate's minibatch gradient explicitly.
pub fn filter_descent(
    own: &ParamVector,
    candidate: &ParamVector,
    grad_at_candidate: &ParamVector,
    t: u64,
    delta: f64,
) -> Decision {
    let inner: f64 = grad_at_candidate
        .iter()
        .zip(own.iter().zip(candidate.iter()))
        .map(|(g, (o, c))| g * (o - c))
        .sum();
    descent_decision(own.dist(candidate), inner, t, delta)
}

/// How the post-filter average divides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivisorMode {
    /// Divide by a fixed `n - p_assumed` regardless of how many were
    /// accepted (an under-full set pulls the average toward the origin).
    Fixed(usize),
    /// Divide by `accepted + 1`.
    AcceptedPlusOne,
}

/// Average `own` with the accepted parameters under the divisor mode.
pub fn aggregate_average(
    own: &ParamVector,
    accepted: &[&ParamVector],
    mode: DivisorMode,
) -> ParamVector {
    let divisor = match mode {
        DivisorMode::Fixed(d) => d,
        DivisorMode::AcceptedPlusOne => accepted.len() + 1,
    };
    assert!(divisor >= 1, "average divisor must be at least 1");
    let mut sum = own.clone();
    for w in accepted {
        sum.add_assign(w);
    }
    sum.scale(1.0 / divisor as f64);
    sum
}

/// One gradient step: `w_half - eta * grad`.
pub fn sgd_step(w_half: &ParamVector, grad: &ParamVector, eta: f64) -> ParamVector {
    assert!(eta > 0.0, "step size must be positive");
    ParamVector(
        w_half
            .iter()
            .zip(grad.iter())
            .map(|(w, g)| w - eta * g)
            .collect(),
    )
}

/// Project onto the unit sphere in place. A zero vector is left unchanged
/// (there is no direction to keep) and logged.
pub fn normalize(w: &mut ParamVector) {
    let norm = w.norm();
    if norm == 0.0 {
        log::warn!("skipping normalization of a zero parameter vector");
        return;
    }
    w.scale(1.0 / norm);
}

/// Krum selection over a list of candidate vectors: each candidate's
/// score is the sum of squared distances to its `n - p_assumed - 2`
/// nearest other candidates, and the lowest score wins. Ties break
/// toward the lower id. `n` is the cluster size, which may exceed the
/// candidate count when the caller's own vector is not in the list.
pub fn krum_select(shared: &[(usize, &ParamVector)], n: usize, p_assumed: usize) -> usize {
    assert!(
        n >= p_assumed + 3,
        "krum needs n - p_assumed - 2 >= 1 (n = {n}, assumed p = {p_assumed})"
    );
    let neighbors = n - p_assumed - 2;
    let mut best: Option<(f64, usize)> = None;
    let mut dists: Vec<f64> = Vec::with_capacity(shared.len());
    for (i, &(id, w)) in shared.iter().enumerate() {
        dists.clear();
        for (j, &(_, other)) in shared.iter().enumerate() {
            if i != j {
                dists.push(w.dist_sq(other));
            }
        }
        dists.sort_by(|a, b| a.partial_cmp(b).expect("non-finite distance"));
        let score: f64 = dists[..neighbors.min(dists.len())].iter().sum();
        let candidate = (score, id);
        if best.is_none_or(|b| candidate < b) {
            best = Some(candidate);
        }
    }
    best.expect("krum requires at least one candidate").1
}

/// What one update produced, beyond the new parameter itself.
pub struct UpdateOutcome {
    pub new_param: ParamVector,
    pub record: AcceptanceRecord,
    /// Norm of the minibatch gradient applied in the step.
    pub grad_norm: f64,
}

/// Shared, read-only inputs of a single update.
pub struct UpdateContext<'a> {
    pub model: &'a Model,
    pub shard: &'a Shard,
    pub batch_size: usize,
    pub eta: f64,
    pub normalize: bool,
    pub tick: u64,
}

/// One honest update: draw the tick's minibatch, filter the responses,
/// average, take the gradient step at the averaged point, optionally
/// normalize. The same minibatch serves the descent-direction test and
/// the update gradient. Krum mode is the exception to the averaging
/// shape: it keeps the worker's own parameter and steps along its
/// krum-selected candidate gradient.
pub fn honest_update(
    worker_id: usize,
    own: &ParamVector,
    responses: &[(usize, &ParamVector)],
    rule: &FilterRule,
    ctx: &UpdateContext,
    rng: &mut ChaCha12Rng,
) -> UpdateOutcome {
    let batch = sample_minibatch(ctx.shard.len(), ctx.batch_size, rng);
    let n = responses.len() + 1;

    // Krum short-circuits the average-then-differentiate pipeline by
    // supplying the gradient directly; every other rule leaves this unset
    // and the gradient is taken at the averaged point below.
    let mut preset_grad: Option<ParamVector> = None;

    let (w_half, decisions) = match *rule {
        FilterRule::NonCollaborative => (own.clone(), Vec::new()),
        FilterRule::Closest { p_assumed } => {
            let accepted_ids = filter_closest(own, responses, n, p_assumed);
            let decisions = responses
                .iter()
                .map(|&(id, _)| {
                    if accepted_ids.binary_search(&id).is_ok() {
                        (id, Decision::Accepted)
                    } else {
                        (id, Decision::DistanceRank)
                    }
                })
                .collect();
            let accepted: Vec<&ParamVector> = responses
                .iter()
                .filter(|(id, _)| accepted_ids.binary_search(id).is_ok())
                .map(|&(_, w)| w)
                .collect();
            let divisor = n - p_assumed;
            (
                aggregate_average(own, &accepted, DivisorMode::Fixed(divisor)),
                decisions,
            )
        }
        FilterRule::Descent { delta } => {
            let candidates: Vec<&ParamVector> = responses.iter().map(|&(_, w)| w).collect();
            let inners = ctx
                .model
                .grad_inner_products(own, &candidates, ctx.shard, &batch);
            let decisions: Vec<(usize, Decision)> = responses
                .iter()
                .zip(&inners)
                .map(|(&(id, w), &inner)| {
                    (id, descent_decision(own.dist(w), inner, ctx.tick, delta))
                })
                .collect();
            let accepted: Vec<&ParamVector> = responses
                .iter()
                .zip(&decisions)
                .filter(|(_, (_, d))| d.accepted())
                .map(|(&(_, w), _)| w)
                .collect();
            (
                aggregate_average(own, &accepted, DivisorMode::AcceptedPlusOne),
                decisions,
            )
        }
        FilterRule::Krum { p_assumed } => {
            // Krum selects one shared gradient instead of averaging
            // parameters: the requester evaluates its minibatch gradient
            // at every parameter it fetched, scores the resulting
            // gradient vectors by summed squared distance to their
            // nearest peers, and applies only the winning gradient, from
            // its own current position. The worker's own parameter is
            // not a candidate; the rule only considers shared ones.
            let params: Vec<&ParamVector> =
                responses.iter().map(|&(_, w)| w).collect();
            let grads = ctx.model.batch_gradients(&params, ctx.shard, &batch);
            let mut scored: Vec<(usize, &ParamVector)> = Vec::with_capacity(n - 1);
            for (&(id, _), g) in responses.iter().zip(&grads) {
                scored.push((id, g));
            }
            let selected = krum_select(&scored, n, p_assumed);
            let decisions = responses
                .iter()
                .map(|&(id, _)| {
                    if id == selected {
                        (id, Decision::Accepted)
                    } else {
                        (id, Decision::DistanceRank)
                    }
                })
                .collect();
            let chosen = scored
                .iter()
                .find(|&&(id, _)| id == selected)
                .expect("selected id comes from the candidate list");
            preset_grad = Some(chosen.1.clone());
            (own.clone(), decisions)
        }
    };

    let grad = match preset_grad {
        Some(g) => g,
        None => ctx.model.gradient(&w_half, ctx.shard, &batch),
    };
    let grad_norm = grad.norm();
    let mut new_param = sgd_step(&w_half, &grad, ctx.eta);
    if ctx.normalize {
        normalize(&mut new_param);
    }
    debug_assert!(new_param.is_finite(), "update produced non-finite parameter");

    UpdateOutcome {
        new_param,
        record: AcceptanceRecord {
            tick: ctx.tick,
            requester: worker_id,
            decisions,
        },
        grad_norm,
    }
}
