//! Single-step dynamics of the noisy bounded-confidence model.
//!
//! Every agent holds an opinion in `[0, 1]`. At each step a random subset of
//! agents communicates; a communicating agent with at least one neighbor
//! (another communicating agent within distance `epsilon`) moves to a convex
//! combination of its own opinion and its neighbors' mean. Every agent then
//! receives additive noise and the result is projected back onto `[0, 1]`.
//!
//! The functions here take all random ingredients as explicit inputs
//! ([`StepInputs`]) so adversarial noise can be injected deterministically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rules::{CommunicationRule, InertiaPolicy, NoiseModel};

/// Slack used when checking floating-point bounds on injected inputs.
pub(crate) const BOUND_TOL: f64 = 1e-12;

/// Projection onto `[0, 1]`. Values exactly at 0 or 1 are kept as-is.
pub fn clamp_unit(y: f64) -> Result<f64> {
    if !y.is_finite() {
        return Err(Error::NonFinite(y));
    }
    Ok(y.clamp(0.0, 1.0))
}

/// Opinion vector at a given step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpinionState {
    values: Vec<f64>,
    time: u64,
}

impl OpinionState {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::at(values, 0)
    }

    pub fn at(values: Vec<f64>, time: u64) -> Result<Self> {
        for &v in &values {
            if !v.is_finite() {
                return Err(Error::NonFinite(v));
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param("opinion", format!("{v} outside [0, 1]")));
            }
        }
        Ok(OpinionState { values, time })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Sorted, duplicate-free set of agent indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CommSet(Vec<usize>);

impl CommSet {
    pub fn empty() -> Self {
        CommSet(Vec::new())
    }

    pub fn full(n: usize) -> Self {
        CommSet((0..n).collect())
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }
}

impl FromIterator<usize> for CommSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut v: Vec<usize> = iter.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        CommSet(v)
    }
}

impl<const N: usize> From<[usize; N]> for CommSet {
    fn from(a: [usize; N]) -> Self {
        a.into_iter().collect()
    }
}

/// Full parameterization of the dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n: usize,
    pub epsilon: f64,
    /// Inertia floor: every used coefficient lies in `[alpha, 1 - alpha]`.
    pub alpha: f64,
    pub inertia: InertiaPolicy,
    pub noise: NoiseModel,
    pub comm: CommunicationRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Admits an inertia coefficient of exactly 1 (the identity DW update).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub allow_degenerate: bool,
}

impl ModelConfig {
    pub fn new(
        n: usize,
        epsilon: f64,
        alpha: f64,
        inertia: InertiaPolicy,
        noise: NoiseModel,
        comm: CommunicationRule,
    ) -> Result<Self> {
        let config = ModelConfig {
            n,
            epsilon,
            alpha,
            inertia,
            noise,
            comm,
            beta: None,
            allow_degenerate: false,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::param("n", format!("need n >= 2, got {}", self.n)));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::param(
                "epsilon",
                format!("need 0 < epsilon <= 1, got {}", self.epsilon),
            ));
        }
        let inv_n = 1.0 / self.n as f64;
        if !(self.alpha > 0.0 && self.alpha <= inv_n + BOUND_TOL) {
            return Err(Error::param(
                "alpha",
                format!("need 0 < alpha <= 1/n = {inv_n}, got {}", self.alpha),
            ));
        }
        if self.comm.n() != self.n {
            return Err(Error::Dimension {
                what: "size_probs (expects n + 1 entries)",
                expected: self.n + 1,
                actual: self.comm.size_probs().len(),
            });
        }
        self.comm.validate()?;
        self.noise.validate()?;
        self.inertia.validate(self.alpha, self.allow_degenerate)?;
        if let Some(beta) = self.beta {
            let upper_ok = if self.allow_degenerate { beta <= 1.0 } else { beta < 1.0 };
            if !(beta > 0.0 && upper_ok) {
                return Err(Error::param("beta", format!("need 0 < beta < 1, got {beta}")));
            }
        }
        Ok(())
    }

    /// Noise amplitude bound.
    pub fn delta(&self) -> f64 {
        self.noise.delta()
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Result<Self> {
        self.noise = noise;
        self.validate()?;
        Ok(self)
    }

    pub fn with_comm(mut self, comm: CommunicationRule) -> Result<Self> {
        self.comm = comm;
        self.validate()?;
        Ok(self)
    }
}

/// The random ingredients of one step, sampled (or injected) up front.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInputs {
    pub comm_set: CommSet,
    /// Per-agent inertia; only read for communicating agents with neighbors.
    pub inertia: Vec<f64>,
    /// Per-agent noise added before the clamp.
    pub noise: Vec<f64>,
}

impl StepInputs {
    pub fn validate(&self, state: &OpinionState, config: &ModelConfig) -> Result<()> {
        let n = config.n;
        if state.len() != n {
            return Err(Error::Dimension {
                what: "state",
                expected: n,
                actual: state.len(),
            });
        }
        if self.inertia.len() != n {
            return Err(Error::Dimension {
                what: "inertia",
                expected: n,
                actual: self.inertia.len(),
            });
        }
        if self.noise.len() != n {
            return Err(Error::Dimension {
                what: "noise",
                expected: n,
                actual: self.noise.len(),
            });
        }
        if let Some(&last) = self.comm_set.as_slice().last() {
            if last >= n {
                return Err(Error::InvalidInputs(format!(
                    "communicating agent {last} out of range for n = {n}"
                )));
            }
        }
        let delta = config.delta();
        for (i, &xi) in self.noise.iter().enumerate() {
            if !xi.is_finite() || xi.abs() > delta + BOUND_TOL {
                return Err(Error::InvalidInputs(format!(
                    "noise of agent {i} is {xi}, exceeds amplitude bound {delta}"
                )));
            }
        }
        let (lo, hi) = if config.allow_degenerate {
            (config.alpha, 1.0)
        } else {
            (config.alpha, 1.0 - config.alpha)
        };
        for i in self.comm_set.iter() {
            let a = self.inertia[i];
            if a >= lo - BOUND_TOL && a <= hi + BOUND_TOL {
                continue;
            }
            // Out-of-range coefficients are harmless when the agent has no
            // neighbor, since the update then ignores them.
            if neighbor_mean(i, state.values(), &self.comm_set, config.epsilon).is_some() {
                return Err(Error::InvalidInputs(format!(
                    "inertia of agent {i} is {a}, outside [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// Mean opinion of `i`'s neighbors, or `None` when the neighbor set is empty.
fn neighbor_mean(i: usize, values: &[f64], comm: &CommSet, epsilon: f64) -> Option<f64> {
    let xi = values[i];
    let mut sum = 0.0;
    let mut count = 0usize;
    for j in comm.iter() {
        if j != i && (values[j] - xi).abs() <= epsilon {
            sum += values[j];
            count += 1;
        }
    }
    (count > 0).then(|| sum / count as f64)
}

pub(crate) fn neighbor_count(i: usize, values: &[f64], comm: &CommSet, epsilon: f64) -> usize {
    let xi = values[i];
    comm.iter()
        .filter(|&j| j != i && (values[j] - xi).abs() <= epsilon)
        .count()
}

/// Communicating agents other than `i` within `epsilon` of agent `i`.
pub fn neighbor_set(i: usize, state: &OpinionState, comm_set: &CommSet, epsilon: f64) -> Result<Vec<usize>> {
    if !comm_set.contains(i) {
        return Err(Error::NotCommunicating { agent: i });
    }
    let x = state.values();
    Ok(comm_set
        .iter()
        .filter(|&j| j != i && (x[j] - x[i]).abs() <= epsilon)
        .collect())
}

/// Opinion of agent `i` after the confidence update and before noise.
pub fn pre_noise_target(
    i: usize,
    state: &OpinionState,
    comm_set: &CommSet,
    inertia_i: f64,
    epsilon: f64,
) -> Result<f64> {
    let x = state.values();
    if i >= x.len() {
        return Err(Error::Dimension {
            what: "agent index",
            expected: x.len(),
            actual: i,
        });
    }
    Ok(target_of(i, x, comm_set, inertia_i, epsilon))
}

#[inline]
fn target_of(i: usize, x: &[f64], comm: &CommSet, inertia_i: f64, epsilon: f64) -> f64 {
    if !comm.contains(i) {
        return x[i];
    }
    match neighbor_mean(i, x, comm, epsilon) {
        Some(mean) => inertia_i * x[i] + (1.0 - inertia_i) * mean,
        None => x[i],
    }
}

/// Pre-noise targets of every agent.
pub fn pre_noise_targets(state: &OpinionState, comm_set: &CommSet, inertia: &[f64], epsilon: f64) -> Vec<f64> {
    let x = state.values();
    (0..x.len())
        .map(|i| target_of(i, x, comm_set, inertia[i], epsilon))
        .collect()
}

/// Advances the state by one step.
pub fn step(state: &OpinionState, inputs: &StepInputs, config: &ModelConfig) -> Result<OpinionState> {
    inputs.validate(state, config)?;
    let targets = pre_noise_targets(state, &inputs.comm_set, &inputs.inertia, config.epsilon);
    let values = targets
        .iter()
        .zip(&inputs.noise)
        .map(|(t, xi)| clamp_unit(t + xi))
        .collect::<Result<Vec<_>>>()?;
    Ok(OpinionState {
        values,
        time: state.time + 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use proptest::prelude::*;

    fn st(v: &[f64]) -> OpinionState {
        OpinionState::new(v.to_vec()).unwrap()
    }

    fn cfg2(eps: f64) -> ModelConfig {
        presets::general_preset(
            2,
            eps,
            0.1,
            CommunicationRule::fixed(2, 2).unwrap(),
            InertiaPolicy::Constant { value: 0.5 },
        )
        .unwrap()
    }

    #[test]
    fn clamp_examples() {
        assert_eq!(clamp_unit(-0.3).unwrap(), 0.0);
        assert_eq!(clamp_unit(0.5).unwrap(), 0.5);
        assert_eq!(clamp_unit(1.2).unwrap(), 1.0);
        assert_eq!(clamp_unit(0.0).unwrap(), 0.0);
        assert_eq!(clamp_unit(1.0).unwrap(), 1.0);
        assert!(clamp_unit(f64::NAN).is_err());
        assert!(clamp_unit(f64::INFINITY).is_err());
    }

    #[test]
    fn neighbor_set_examples() {
        let x = st(&[0.1, 0.15, 0.9]);
        assert_eq!(neighbor_set(0, &x, &[0, 1, 2].into(), 0.1).unwrap(), vec![1]);
        assert!(neighbor_set(0, &x, &[0, 2].into(), 0.1).unwrap().is_empty());
        assert!(neighbor_set(0, &x, &[0].into(), 1.0).unwrap().is_empty());
        assert!(matches!(
            neighbor_set(1, &x, &[0, 2].into(), 0.1),
            Err(Error::NotCommunicating { agent: 1 })
        ));
    }

    #[test]
    fn neighbor_set_matches_brute_force() {
        let x = st(&[0.1, 0.15, 0.9, 0.2, 0.05]);
        let comm: CommSet = [0, 1, 3, 4].into();
        for i in comm.iter() {
            let mut brute = Vec::new();
            for j in 0..x.len() {
                if j != i && comm.as_slice().contains(&j) && (x.values()[j] - x.values()[i]).abs() <= 0.1 {
                    brute.push(j);
                }
            }
            assert_eq!(neighbor_set(i, &x, &comm, 0.1).unwrap(), brute);
        }
    }

    #[test]
    fn pre_noise_target_examples() {
        let x = st(&[0.2, 0.3]);
        let t = pre_noise_target(0, &x, &[0, 1].into(), 0.5, 0.2).unwrap();
        assert!((t - 0.25).abs() < 1e-15);
        assert_eq!(pre_noise_target(0, &x, &[1].into(), 0.3, 0.2).unwrap(), 0.2);
        let far = st(&[0.2, 0.9]);
        assert_eq!(pre_noise_target(0, &far, &[0, 1].into(), 0.5, 0.2).unwrap(), 0.2);
    }

    #[test]
    fn step_examples() {
        let config = cfg2(0.2);
        let s = st(&[0.2, 0.3]);
        let out = step(
            &s,
            &StepInputs {
                comm_set: [0, 1].into(),
                inertia: vec![0.5, 0.5],
                noise: vec![0.0, 0.0],
            },
            &config,
        )
        .unwrap();
        assert!((out.values()[0] - 0.25).abs() < 1e-15);
        assert!((out.values()[1] - 0.25).abs() < 1e-15);
        assert_eq!(out.time(), 1);

        let config = cfg2(0.2).with_noise(NoiseModel::uniform(0.05).unwrap()).unwrap();
        let out = step(
            &st(&[0.99, 0.5]),
            &StepInputs {
                comm_set: CommSet::empty(),
                inertia: vec![0.5, 0.5],
                noise: vec![0.05, 0.0],
            },
            &config,
        )
        .unwrap();
        assert_eq!(out.values(), &[1.0, 0.5]);

        let out = step(
            &st(&[0.4, 0.4]),
            &StepInputs {
                comm_set: [0, 1].into(),
                inertia: vec![0.5, 0.5],
                noise: vec![0.0, 0.0],
            },
            &cfg2(0.05),
        )
        .unwrap();
        assert_eq!(out.values(), &[0.4, 0.4]);
    }

    #[test]
    fn step_rejects_bad_inputs() {
        let config = cfg2(0.2);
        let s = st(&[0.2, 0.3]);
        let ok = StepInputs {
            comm_set: [0, 1].into(),
            inertia: vec![0.5, 0.5],
            noise: vec![0.0, 0.0],
        };
        let mut bad = ok.clone();
        bad.noise = vec![0.0];
        assert!(matches!(step(&s, &bad, &config), Err(Error::Dimension { .. })));
        let mut bad = ok.clone();
        bad.noise = vec![0.5, 0.0];
        assert!(step(&s, &bad, &config).is_err());
        let mut bad = ok.clone();
        bad.inertia = vec![0.95, 0.5];
        assert!(step(&s, &bad, &config).is_err());
        let mut bad = ok;
        bad.comm_set = [0, 5].into();
        assert!(step(&s, &bad, &config).is_err());
        assert!(step(
            &st(&[0.2, 0.3, 0.4]),
            &StepInputs {
                comm_set: CommSet::empty(),
                inertia: vec![0.5; 3],
                noise: vec![0.0; 3],
            },
            &config
        )
        .is_err());
    }

    #[test]
    fn inertia_ignored_without_neighbors() {
        let config = cfg2(0.2);
        let out = step(
            &st(&[0.1, 0.9]),
            &StepInputs {
                comm_set: [0, 1].into(),
                inertia: vec![1.0, 1.0],
                noise: vec![0.0, 0.0],
            },
            &config,
        )
        .unwrap();
        assert_eq!(out.values(), &[0.1, 0.9]);
    }

    #[test]
    fn state_rejects_out_of_range() {
        assert!(OpinionState::new(vec![0.5, 1.5]).is_err());
        assert!(OpinionState::new(vec![0.5, f64::NAN]).is_err());
    }

    fn arb_case() -> impl Strategy<Value = (Vec<f64>, Vec<bool>, Vec<f64>, Vec<f64>, f64)> {
        (2usize..8).prop_flat_map(|n| {
            (
                prop::collection::vec(0.0f64..=1.0, n),
                prop::collection::vec(any::<bool>(), n),
                prop::collection::vec(0.125f64..=0.875, n),
                prop::collection::vec(-0.02f64..=0.02, n),
                0.01f64..=1.0,
            )
        })
    }

    fn config_for(n: usize, eps: f64) -> ModelConfig {
        presets::general_preset(
            n,
            eps,
            0.02,
            CommunicationRule::uniform(n),
            InertiaPolicy::UniformInterval { low: 0.125 },
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn step_invariants((x, mask, inertia, noise, eps) in arb_case()) {
            let n = x.len();
            let config = config_for(n, eps);
            let delta = config.delta();
            let s = OpinionState::new(x.clone()).unwrap();
            let comm: CommSet = mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect();
            let inputs = StepInputs { comm_set: comm.clone(), inertia: inertia.clone(), noise: noise.clone() };
            let next = step(&s, &inputs, &config).unwrap();

            // boundedness and fixed length
            prop_assert_eq!(next.len(), n);
            prop_assert!(next.values().iter().all(|v| (0.0..=1.0).contains(v)));

            // determinism
            prop_assert_eq!(&step(&s, &inputs, &config).unwrap(), &next);

            // diameter growth bound
            let d0 = s.max() - s.min();
            let d1 = next.max() - next.min();
            prop_assert!(d1 <= d0 + 2.0 * delta + 1e-12);

            for i in 0..n {
                // targets stay inside the current range
                let t = pre_noise_target(i, &s, &comm, inertia[i], eps).unwrap();
                prop_assert!(t >= s.min() - 1e-12 && t <= s.max() + 1e-12);
                // step is clamp(target + noise)
                prop_assert_eq!(next.values()[i], clamp_unit(t + noise[i]).unwrap());
                if !comm.contains(i) {
                    prop_assert!((next.values()[i] - x[i]).abs() <= delta + 1e-12);
                }
            }
        }

        #[test]
        fn extremal_contraction((x, _mask, inertia, noise, _eps) in arb_case()) {
            let n = x.len();
            let s = OpinionState::new(x).unwrap();
            let d0 = s.max() - s.min();
            // all agents communicate and are mutual neighbors
            let config = config_for(n, 1.0);
            let delta = config.delta();
            let alpha = 0.125;
            let (m, big_m) = crate::metrics::extremal_agents(&s);
            let next = step(&s, &StepInputs { comm_set: CommSet::full(n), inertia, noise }, &config).unwrap();
            let gap = (next.values()[big_m] - next.values()[m]).abs();
            prop_assert!(gap <= d0 - 2.0 * alpha / (n as f64 - 1.0) * d0 + 2.0 * delta + 1e-12);
        }
    }
}
