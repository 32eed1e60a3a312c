//! Constructive noise protocols and conditioned samplers.
//!
//! The divergence protocol pushes the lower half of the opinion range down
//! and the upper half up; the contraction protocol does the opposite based on
//! each agent's pre-noise target. Both emit values of magnitude within
//! `[a, delta]`, which any noise law with mass on those two intervals
//! produces with positive probability.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::extremal_agents;
use crate::model::{pre_noise_targets, CommSet, OpinionState};
use crate::rules::{uniform_superset, CommunicationRule, NoiseModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub a: f64,
    pub delta: f64,
    /// Probability mass of each protocol-compatible sign interval.
    pub p_bar: f64,
    /// Magnitude actually emitted, in `[a, delta]`.
    pub magnitude: f64,
}

impl ProtocolParams {
    pub fn new(a: f64, delta: f64, p_bar: f64) -> Result<Self> {
        if !(a > 0.0 && a <= delta) {
            return Err(Error::param("a", format!("need 0 < a <= delta = {delta}, got {a}")));
        }
        if !(p_bar > 0.0 && p_bar < 1.0) {
            return Err(Error::param("p_bar", format!("need 0 < p_bar < 1, got {p_bar}")));
        }
        Ok(ProtocolParams {
            a,
            delta,
            p_bar,
            magnitude: a,
        })
    }

    /// Reads `p_bar` off a noise law for the given atom bound.
    pub fn from_noise(model: &NoiseModel, a: f64) -> Result<Self> {
        let p_bar = model.prob_at_least(a).min(model.prob_at_most(-a));
        Self::new(a, model.delta(), p_bar)
    }

    pub fn with_magnitude(mut self, magnitude: f64) -> Result<Self> {
        if !(magnitude >= self.a && magnitude <= self.delta) {
            return Err(Error::param(
                "magnitude",
                format!("need a <= magnitude <= delta, got {magnitude}"),
            ));
        }
        self.magnitude = magnitude;
        Ok(self)
    }

    /// Lower bound on the probability that one step's i.i.d. draws realize
    /// the protocol for `n` agents: `p_bar^n`.
    pub fn step_probability(&self, n: usize) -> f64 {
        self.p_bar.powi(n as i32)
    }
}

fn midpoint(state: &OpinionState) -> f64 {
    let lo = state.min();
    lo + (state.max() - lo) / 2.0
}

/// Lower half (inclusive of the midpoint) goes down, upper half goes up.
pub fn divergence_noise(state: &OpinionState, params: &ProtocolParams) -> Vec<f64> {
    let mid = midpoint(state);
    let m = params.magnitude;
    state.values().iter().map(|&x| if x <= mid { -m } else { m }).collect()
}

/// Targets in the lower half (inclusive) go up, upper half go down.
pub fn contraction_noise(
    state: &OpinionState,
    comm_set: &CommSet,
    inertia: &[f64],
    epsilon: f64,
    params: &ProtocolParams,
) -> Vec<f64> {
    let mid = midpoint(state);
    let m = params.magnitude;
    pre_noise_targets(state, comm_set, inertia, epsilon)
        .into_iter()
        .map(|t| if t <= mid { m } else { -m })
        .collect()
}

/// Communicating set drawn from the model's law conditioned on containing
/// both extremal agents.
///
/// Sizes are drawn from `p_k C(n-2, k-2)/C(n, k)`, renormalized (or
/// `p_k k/n` when the extremes coincide), then a uniform superset of the
/// extremes of that size.
pub fn forced_a_sampler<R: Rng + ?Sized>(
    rng: &mut R,
    rule: &CommunicationRule,
    state: &OpinionState,
    n: usize,
) -> Result<CommSet> {
    let (m, big_m) = extremal_agents(state);
    let required: Vec<usize> = if m == big_m { vec![m] } else { vec![m, big_m] };
    let weights = conditional_size_weights(rule, n, required.len());
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidRule(
            "no mass on sizes that can contain both extremal agents".into(),
        ));
    }
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut k = weights.iter().rposition(|&w| w > 0.0).unwrap_or(n);
    for (size, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            k = size;
            break;
        }
    }
    Ok(uniform_superset(rng, n, k, &required))
}

/// Unnormalized conditional size law given `r` required members.
pub fn conditional_size_weights(rule: &CommunicationRule, n: usize, r: usize) -> Vec<f64> {
    (0..=n)
        .map(|k| {
            if k < r {
                return 0.0;
            }
            // C(n-r, k-r) / C(n, k) = k!/(k-r)! * (n-r)!/n!
            let ratio: f64 = (0..r).map(|i| (k - i) as f64 / (n - i) as f64).product();
            rule.p(k) * ratio
        })
        .collect()
}

/// Zero-mean two-point law with atoms `+-eps/(2p^2)`, heavy enough that
/// each tail beyond that level has probability at least `p`.
pub fn large_noise_model(epsilon: f64, p: f64) -> Result<NoiseModel> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::param("p", format!("need 0 < p <= 1, got {p}")));
    }
    if p > 0.5 {
        return Err(Error::param(
            "p",
            format!("both tails with probability {p} cannot coexist in a zero-mean law"),
        ));
    }
    if !(epsilon > 0.0 && epsilon <= 2.0 * p * p) {
        return Err(Error::param(
            "epsilon",
            format!("need 0 < epsilon <= 2p^2 = {}, got {epsilon}", 2.0 * p * p),
        ));
    }
    NoiseModel::two_point(epsilon / (2.0 * p * p))
}
