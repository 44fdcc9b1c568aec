//! Closed-form convergence envelopes and their empirical verification.
//!
//! Two bounds are evaluated, both for the strongly convex quadratic
//! problem where curvature constants are known exactly (`lambda = L = 1`).
//!
//! Bound 1 covers the closest-subset rule with exact attacker knowledge:
//! with step size `eta`, strong convexity `lambda`, gradient norms at most
//! `G`, accepted-perturbation second moment at most `sigma^2`, and `n - p`
//! honest workers, the summed squared honest distance to the optimum
//! after `t` ticks is at most
//!
//! ```text
//!   (1 - 2*eta*lambda/(n-p))^t * sum_sq_init
//!     + ((1 - 2*eta*lambda) * sigma^2 + eta^2 * G^2) / (2*eta*lambda)
//! ```
//!
//! a geometric decay into a noise ball whose radius is the second term.
//!
//! Bound 2 covers the descent-threshold rule with finite `delta`: with
//! `r = 1 - eta*lambda*L/((n-p)*(lambda+L))`, the summed honest distance
//! after `t` ticks is at most
//!
//! ```text
//!   r^t * sum_init
//!     + (1 - eta*lambda*L/(lambda+L)) * (delta/(n-p))
//!       * sum_{k=0..t} r^(t-k) / (k+1)
//! ```
//!
//! whose second (threshold) term tends to zero because the acceptance
//! radius shrinks like `delta/(t+1)`.
//!
//! The checks in this module run a fixed quadratic fixture over many
//! seeds, average the measured distance curves, and test containment
//! under each bound with a pinned statistical slack. The bounds hold in
//! expectation, so containment is asserted for the seed average, not per
//! run.

use crate::config::{
    AttackName, Delta, ExperimentConfig, FilterKind, PartialConfig, Problem, TickBudget,
};
use crate::engine::{run_experiment, ProblemData};
use crate::error::{Error, Result};

/// Multiplicative slack applied to both bounds in empirical checks:
/// the seed average must stay within `bound * (1 + BOUND_SLACK)`.
pub const BOUND_SLACK: f64 = 0.25;

/// Fraction of the final ticks averaged to estimate the plateau level.
pub const PLATEAU_FRACTION: f64 = 0.1;

/// Constants the bounds are evaluated with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremBoundParams {
    /// Step size.
    pub eta: f64,
    /// Strong convexity constant.
    pub lambda: f64,
    /// Smoothness constant.
    pub l: f64,
    /// Uniform bound on minibatch gradient norms.
    pub g: f64,
    /// Bound on the root second moment of accepted perturbations.
    pub sigma: f64,
    /// Distance-threshold bound of the descent rule.
    pub delta: f64,
    /// Total workers.
    pub n: usize,
    /// Byzantine workers.
    pub p: usize,
    /// Summed squared honest distance to the optimum at initialization.
    pub sum_sq_init: f64,
    /// Summed honest distance to the optimum at initialization.
    pub sum_init: f64,
}

impl TheoremBoundParams {
    fn n_minus_p(&self) -> Result<f64> {
        if self.n <= self.p {
            return Err(Error::config(format!(
                "bound needs n > p, got n = {}, p = {}",
                self.n, self.p
            )));
        }
        Ok((self.n - self.p) as f64)
    }
}

/// Geometric ratio of bound 1; must lie in (0, 1).
pub fn theorem1_ratio(params: &TheoremBoundParams) -> Result<f64> {
    let nmp = params.n_minus_p()?;
    if !(params.eta > 0.0 && params.eta.is_finite()) {
        return Err(Error::config("bound needs a positive finite eta"));
    }
    let ratio = 1.0 - 2.0 * params.eta * params.lambda / nmp;
    if !(0.0 < ratio && ratio < 1.0) {
        return Err(Error::config(format!(
            "bound 1 needs 1 - 2*eta*lambda/(n-p) in (0, 1), got {ratio}"
        )));
    }
    Ok(ratio)
}

/// The noise-ball level bound 1 decays to.
pub fn theorem1_asymptote(params: &TheoremBoundParams) -> f64 {
    let sigma_sq = params.sigma * params.sigma;
    ((1.0 - 2.0 * params.eta * params.lambda) * sigma_sq
        + params.eta * params.eta * params.g * params.g)
        / (2.0 * params.eta * params.lambda)
}

/// Bound 1 at tick `t`.
pub fn theorem1_bound(params: &TheoremBoundParams, t: u64) -> Result<f64> {
    let ratio = theorem1_ratio(params)?;
    Ok(ratio.powi(t as i32) * params.sum_sq_init + theorem1_asymptote(params))
}

/// Bound 1 evaluated at every tick `0..=t_max`.
pub fn theorem1_curve(params: &TheoremBoundParams, t_max: u64) -> Result<Vec<f64>> {
    let ratio = theorem1_ratio(params)?;
    let asymptote = theorem1_asymptote(params);
    let mut geometric = params.sum_sq_init;
    let mut out = Vec::with_capacity(t_max as usize + 1);
    out.push(geometric + asymptote);
    for _ in 0..t_max {
        geometric *= ratio;
        out.push(geometric + asymptote);
    }
    Ok(out)
}

/// Geometric ratio of bound 2; requires `eta <= 2/(lambda + L)`.
pub fn theorem2_ratio(params: &TheoremBoundParams) -> Result<f64> {
    let nmp = params.n_minus_p()?;
    if !(params.eta > 0.0 && params.eta.is_finite()) {
        return Err(Error::config("bound needs a positive finite eta"));
    }
    if params.eta > 2.0 / (params.lambda + params.l) {
        return Err(Error::config(format!(
            "bound 2 needs eta <= 2/(lambda+L) = {}, got {}",
            2.0 / (params.lambda + params.l),
            params.eta
        )));
    }
    let ratio = 1.0 - params.eta * params.lambda * params.l / (nmp * (params.lambda + params.l));
    if !(0.0 < ratio && ratio < 1.0) {
        return Err(Error::config(format!(
            "bound 2 ratio must lie in (0, 1), got {ratio}"
        )));
    }
    Ok(ratio)
}

fn theorem2_delta_coeff(params: &TheoremBoundParams) -> Result<f64> {
    if !params.delta.is_finite() || params.delta < 0.0 {
        return Err(Error::config(
            "bound 2 needs a finite non-negative delta",
        ));
    }
    let nmp = params.n_minus_p()?;
    Ok((1.0 - params.eta * params.lambda * params.l / (params.lambda + params.l)) * params.delta
        / nmp)
}

/// The threshold term of bound 2 at tick `t`, evaluated standalone:
/// `coeff * sum_{k=0..t} r^(t-k)/(k+1)`. Tends to zero as `t` grows.
pub fn theorem2_delta_term(params: &TheoremBoundParams, t: u64) -> Result<f64> {
    let ratio = theorem2_ratio(params)?;
    let coeff = theorem2_delta_coeff(params)?;
    let mut acc = 0.0;
    for k in 0..=t {
        acc += ratio.powi((t - k) as i32) / (k as f64 + 1.0);
    }
    Ok(coeff * acc)
}

/// Bound 2 at tick `t`.
pub fn theorem2_bound(params: &TheoremBoundParams, t: u64) -> Result<f64> {
    let ratio = theorem2_ratio(params)?;
    Ok(ratio.powi(t as i32) * params.sum_init + theorem2_delta_term(params, t)?)
}

/// Bound 2 evaluated at every tick `0..=t_max`, using the recurrence
/// `S_t = r * S_{t-1} + 1/(t+1)` for the threshold sum.
pub fn theorem2_curve(params: &TheoremBoundParams, t_max: u64) -> Result<Vec<f64>> {
    let ratio = theorem2_ratio(params)?;
    let coeff = theorem2_delta_coeff(params)?;
    let mut geometric = params.sum_init;
    let mut s = 1.0; // sum at t = 0
    let mut out = Vec::with_capacity(t_max as usize + 1);
    out.push(geometric + coeff * s);
    for t in 1..=t_max {
        geometric *= ratio;
        s = ratio * s + 1.0 / (t as f64 + 1.0);
        out.push(geometric + coeff * s);
    }
    Ok(out)
}

/// The quadratic fixture both empirical bound checks run on.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticFixture {
    pub n: usize,
    pub p_true: usize,
    pub dim: usize,
    /// Centers per worker shard.
    pub m: usize,
    pub batch_size: usize,
    pub eta: f64,
    /// Per-coordinate variance of the add-noise attack.
    pub sigma_sq: f64,
    /// Standard deviation of center coordinates.
    pub spread: f64,
    pub ticks: u64,
    pub seeds: usize,
    pub base_seed: u64,
    /// Distance-threshold bound used by the descent-rule check.
    pub delta: f64,
}

impl QuadraticFixture {
    /// Fixture for the closest-subset bound check.
    pub fn theorem1_default() -> Self {
        QuadraticFixture {
            n: 10,
            p_true: 3,
            dim: 10,
            m: 50,
            batch_size: 10,
            eta: 0.05,
            sigma_sq: 0.1,
            spread: 0.5,
            ticks: 1500,
            seeds: 24,
            base_seed: 29,
            delta: f64::INFINITY,
        }
    }

    /// Fixture for the descent-threshold bound check.
    pub fn theorem2_default() -> Self {
        QuadraticFixture {
            delta: 50.0,
            ticks: 1200,
            base_seed: 31,
            ..Self::theorem1_default()
        }
    }

    fn config(&self, filter: FilterKind, seed: u64) -> Result<ExperimentConfig> {
        crate::config::resolve_with_env(
            PartialConfig {
                problem: Some(Problem::Quadratic),
                n: Some(self.n),
                p_true: Some(self.p_true),
                p_assumed: Some(self.p_true),
                m: Some(self.m),
                batch_size: Some(self.batch_size),
                eta: Some(self.eta),
                delta: Some(Delta(self.delta)),
                filter: Some(filter),
                attack: Some(AttackName::AddNoise),
                sigma_sq: Some(self.sigma_sq),
                normalize: Some(false),
                ticks: Some(TickBudget::Fixed(self.ticks)),
                seed: Some(seed),
                dim: Some(self.dim),
                spread: Some(self.spread),
                ..Default::default()
            },
            None,
        )
    }
}

/// Outcome of one empirical containment check.
pub struct BoundCheckReport {
    /// Seed-averaged measured curve, index = tick (0 = initialization).
    pub empirical: Vec<f64>,
    /// Bound curve at the same ticks.
    pub bound: Vec<f64>,
    /// Largest empirical/bound ratio over all ticks.
    pub max_ratio: f64,
    /// Mean of the last `PLATEAU_FRACTION` of the empirical curve.
    pub plateau: f64,
    /// Noise-ball level (bound 1 checks only).
    pub asymptote: Option<f64>,
    /// Constants the bound curve was evaluated with.
    pub params: TheoremBoundParams,
}

impl BoundCheckReport {
    /// Containment under the pinned slack at every tick.
    pub fn contained(&self) -> bool {
        self.max_ratio <= 1.0 + BOUND_SLACK
    }

    /// Plateau at or below the asymptote under the pinned slack
    /// (vacuously true when the bound has no asymptote).
    pub fn plateau_ok(&self) -> bool {
        match self.asymptote {
            Some(a) => self.plateau <= a * (1.0 + BOUND_SLACK),
            None => true,
        }
    }
}

fn plateau_level(curve: &[f64]) -> f64 {
    let window = ((curve.len() as f64 * PLATEAU_FRACTION) as usize).max(1);
    let tail = &curve[curve.len() - window..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

struct FixtureRuns {
    /// Seed-averaged squared-distance curve (index = tick).
    mean_sq: Vec<f64>,
    /// Seed-averaged distance curve (index = tick).
    mean_dist: Vec<f64>,
    /// Largest minibatch gradient norm seen in any run.
    max_grad_norm: f64,
}

fn run_fixture(fix: &QuadraticFixture, filter: FilterKind) -> Result<FixtureRuns> {
    assert!(fix.seeds > 0);
    let len = fix.ticks as usize + 1;
    let mut mean_sq = vec![0.0; len];
    let mut mean_dist = vec![0.0; len];
    let mut max_grad_norm: f64 = 0.0;
    for k in 0..fix.seeds {
        let config = fix.config(filter, fix.base_seed + k as u64)?;
        let out = run_experiment(&config, &ProblemData::Quadratic)?;
        mean_sq[0] += out.log.initial_sum_sq_dist.expect("quadratic run");
        mean_dist[0] += out.log.initial_sum_dist.expect("quadratic run");
        for (t, row) in out.log.rows.iter().enumerate() {
            mean_sq[t + 1] += row.sum_sq_dist.expect("quadratic run");
            mean_dist[t + 1] += row.sum_dist.expect("quadratic run");
        }
        max_grad_norm = max_grad_norm.max(out.log.max_grad_norm);
    }
    let inv = 1.0 / fix.seeds as f64;
    for v in &mut mean_sq {
        *v *= inv;
    }
    for v in &mut mean_dist {
        *v *= inv;
    }
    Ok(FixtureRuns {
        mean_sq,
        mean_dist,
        max_grad_norm,
    })
}

fn containment(empirical: &[f64], bound: &[f64]) -> f64 {
    empirical
        .iter()
        .zip(bound)
        .map(|(e, b)| e / b)
        .fold(0.0, f64::max)
}

/// Run the closest-subset fixture and test containment under bound 1.
///
/// `sigma` is set from the attack's true perturbation second moment
/// (`dim * sigma_sq` per response) and `G` to the largest gradient norm
/// measured on the fixture itself.
pub fn check_theorem1(fix: &QuadraticFixture) -> Result<BoundCheckReport> {
    let runs = run_fixture(fix, FilterKind::Alg1)?;
    let params = TheoremBoundParams {
        eta: fix.eta,
        lambda: 1.0,
        l: 1.0,
        g: runs.max_grad_norm,
        sigma: (fix.dim as f64 * fix.sigma_sq).sqrt(),
        delta: fix.delta,
        n: fix.n,
        p: fix.p_true,
        sum_sq_init: runs.mean_sq[0],
        sum_init: runs.mean_dist[0],
    };
    let bound = theorem1_curve(&params, fix.ticks)?;
    let max_ratio = containment(&runs.mean_sq, &bound);
    let plateau = plateau_level(&runs.mean_sq);
    Ok(BoundCheckReport {
        empirical: runs.mean_sq,
        bound,
        max_ratio,
        plateau,
        asymptote: Some(theorem1_asymptote(&params)),
        params,
    })
}

/// Run the descent-threshold fixture and test containment under bound 2.
pub fn check_theorem2(fix: &QuadraticFixture) -> Result<BoundCheckReport> {
    if !fix.delta.is_finite() {
        return Err(Error::config(
            "delta: the bound 2 check needs a finite delta",
        ));
    }
    let runs = run_fixture(fix, FilterKind::Alg2)?;
    let params = TheoremBoundParams {
        eta: fix.eta,
        lambda: 1.0,
        l: 1.0,
        g: runs.max_grad_norm,
        sigma: (fix.dim as f64 * fix.sigma_sq).sqrt(),
        delta: fix.delta,
        n: fix.n,
        p: fix.p_true,
        sum_sq_init: runs.mean_sq[0],
        sum_init: runs.mean_dist[0],
    };
    let bound = theorem2_curve(&params, fix.ticks)?;
    let max_ratio = containment(&runs.mean_dist, &bound);
    let plateau = plateau_level(&runs.mean_dist);
    Ok(BoundCheckReport {
        empirical: runs.mean_dist,
        bound,
        max_ratio,
        plateau,
        asymptote: None,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_params() -> TheoremBoundParams {
        TheoremBoundParams {
            eta: 0.1,
            lambda: 1.0,
            l: 1.0,
            g: 1.0,
            sigma: 0.0,
            delta: 1.0,
            n: 3,
            p: 1,
            sum_sq_init: 2.0,
            sum_init: 2.0,
        }
    }

    #[test]
    fn bound1_worked_example() {
        // eta 0.1, lambda 1, sigma 0, G 1, n-p = 2, sum 2, t = 0:
        // 2 + 0.01/0.2 = 2.05.
        let p = base_params();
        assert!((theorem1_bound(&p, 0).unwrap() - 2.05).abs() < 1e-12);
    }

    #[test]
    fn bound1_asymptote_simplifies_when_sigma_is_zero() {
        let p = base_params();
        let expect = p.eta * p.g * p.g / (2.0 * p.lambda);
        assert!((theorem1_asymptote(&p) - expect).abs() < 1e-15);
    }

    #[test]
    fn bound1_flattens_to_its_asymptote() {
        let p = base_params();
        let ratio = theorem1_ratio(&p).unwrap();
        let t = ((1e-13 / p.sum_sq_init).ln() / ratio.ln()).ceil() as u64;
        let b = theorem1_bound(&p, t).unwrap();
        assert!((b - theorem1_asymptote(&p)).abs() < 1e-12);
    }

    #[test]
    fn bound1_rejects_contraction_outside_unit_interval() {
        let mut p = base_params();
        p.n = 2; // n - p = 1, ratio = 1 - 0.2 = 0.8: fine
        theorem1_ratio(&p).unwrap();
        p.eta = 1.0; // ratio = -1
        let err = theorem1_ratio(&p).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn bound1_curve_matches_pointwise_evaluation() {
        let p = base_params();
        let curve = theorem1_curve(&p, 50).unwrap();
        for t in [0u64, 1, 7, 50] {
            let direct = theorem1_bound(&p, t).unwrap();
            assert!((curve[t as usize] - direct).abs() < 1e-12 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn bound2_with_zero_delta_is_pure_geometric_decay() {
        let mut p = base_params();
        p.delta = 0.0;
        let ratio = theorem2_ratio(&p).unwrap();
        for t in [0u64, 3, 10] {
            let b = theorem2_bound(&p, t).unwrap();
            assert!((b - ratio.powi(t as i32) * p.sum_init).abs() < 1e-14);
        }
    }

    #[test]
    fn bound2_worked_example_at_tick_zero() {
        let p = base_params();
        // sum_init + (1 - eta*lambda*L/(lambda+L)) * delta / (n-p)
        let expect = 2.0 + (1.0 - 0.1 * 0.5) * 1.0 / 2.0;
        assert!((theorem2_bound(&p, 0).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn bound2_rejects_oversized_step() {
        let mut p = base_params();
        p.eta = 1.01; // 2/(lambda+L) = 1
        assert!(theorem2_ratio(&p).is_err());
    }

    #[test]
    fn bound2_curve_matches_pointwise_evaluation() {
        let p = base_params();
        let curve = theorem2_curve(&p, 60).unwrap();
        for t in [0u64, 1, 13, 60] {
            let direct = theorem2_bound(&p, t).unwrap();
            assert!(
                (curve[t as usize] - direct).abs() < 1e-12 * direct.abs().max(1.0),
                "t = {t}: {} vs {direct}",
                curve[t as usize]
            );
        }
    }

    #[test]
    fn bound2_delta_term_eventually_decreases_monotonically() {
        let p = base_params();
        let ratio = theorem2_ratio(&p).unwrap();
        let start = (1.0 / (1.0 - ratio)).ceil() as u64;
        let mut last = theorem2_delta_term(&p, start).unwrap();
        for t in (start + 1)..(start + 200) {
            let v = theorem2_delta_term(&p, t).unwrap();
            assert!(v < last, "delta term rose at t = {t}: {last} -> {v}");
            last = v;
        }
    }

    #[test]
    fn fixture_configs_resolve() {
        QuadraticFixture::theorem1_default()
            .config(FilterKind::Alg1, 1)
            .unwrap();
        QuadraticFixture::theorem2_default()
            .config(FilterKind::Alg2, 1)
            .unwrap();
    }

    #[test]
    fn bound2_check_demands_finite_delta() {
        let fix = QuadraticFixture::theorem1_default(); // delta = inf
        assert!(check_theorem2(&fix).is_err());
    }
}
