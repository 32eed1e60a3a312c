//! Random ingredients of a step: the communicating set, the noise, and the
//! inertia coefficients, each drawn from its own seedable stream.

use rand::distr::weighted::WeightedIndex;
use rand::distr::{Distribution, Uniform};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{neighbor_count, CommSet, OpinionState};

const SUM_TOL: f64 = 1e-12;

/// Law of the communicating-set size: `size_probs[k] = P{|U(t)| = k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CommunicationRule {
    size_probs: Vec<f64>,
}

impl CommunicationRule {
    pub fn new(size_probs: Vec<f64>) -> Result<Self> {
        let rule = CommunicationRule { size_probs };
        rule.validate()?;
        Ok(rule)
    }

    /// Skips validation. Only useful for exercising the sampler on laws the
    /// model itself rejects (e.g. `p0 = 1`).
    #[doc(hidden)]
    pub fn new_unchecked(size_probs: Vec<f64>) -> Self {
        CommunicationRule { size_probs }
    }

    /// `p_k = 1/(n+1)` for every `k`.
    pub fn uniform(n: usize) -> Self {
        CommunicationRule {
            size_probs: vec![1.0 / (n + 1) as f64; n + 1],
        }
    }

    /// All mass on size `k`.
    pub fn fixed(n: usize, k: usize) -> Result<Self> {
        if k > n {
            return Err(Error::InvalidRule(format!("fixed size {k} exceeds n = {n}")));
        }
        let mut size_probs = vec![0.0; n + 1];
        size_probs[k] = 1.0;
        Self::new(size_probs)
    }

    /// Parses the config shorthands `uniform` and `fixed:k`.
    pub fn parse(spec: &str, n: usize) -> Result<Self> {
        let spec = spec.trim();
        if spec == "uniform" {
            let rule = Self::uniform(n);
            rule.validate()?;
            return Ok(rule);
        }
        if let Some(k) = spec.strip_prefix("fixed:") {
            let k: usize = k
                .trim()
                .parse()
                .map_err(|_| Error::InvalidRule(format!("bad size in `{spec}`")))?;
            return Self::fixed(n, k);
        }
        Err(Error::InvalidRule(format!(
            "unknown size_probs shorthand `{spec}` (expected `uniform` or `fixed:k`)"
        )))
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.size_probs;
        if p.len() < 3 {
            return Err(Error::InvalidRule(format!(
                "need n + 1 >= 3 probabilities, got {}",
                p.len()
            )));
        }
        if let Some((k, v)) = p.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidRule(format!("p_{k} = {v} outside [0, 1]")));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidRule(format!("probabilities sum to {sum}, not 1")));
        }
        if p[0] + p[1] >= 1.0 {
            return Err(Error::InvalidRule(format!(
                "constraint p0 + p1 < 1 violated (p0 + p1 = {})",
                p[0] + p[1]
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.size_probs.len().saturating_sub(1)
    }

    pub fn size_probs(&self) -> &[f64] {
        &self.size_probs
    }

    pub fn p(&self, k: usize) -> f64 {
        self.size_probs.get(k).copied().unwrap_or(0.0)
    }

    /// Inverse-CDF draw of the set size.
    pub fn sample_size<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, &p) in self.size_probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        // rounding left u above the accumulated mass
        self.size_probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

/// Uniformly random `k`-subset of `0..n` that contains every index in
/// `required`, by partial Fisher-Yates over the remaining indices.
pub(crate) fn uniform_superset<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize, required: &[usize]) -> CommSet {
    let mut pool: Vec<usize> = (0..n).filter(|i| !required.contains(i)).collect();
    let extra = k.saturating_sub(required.len()).min(pool.len());
    for i in 0..extra {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    required.iter().copied().chain(pool[..extra].iter().copied()).collect()
}

/// Draws `U(t)`: size from the rule, then a uniform subset of that size.
///
/// # Panics
/// If the rule was built for a different `n`.
pub fn sample_comm_set<R: Rng + ?Sized>(rng: &mut R, rule: &CommunicationRule, n: usize) -> CommSet {
    assert_eq!(rule.n(), n, "communication rule built for a different n");
    let k = rule.sample_size(rng);
    uniform_superset(rng, n, k, &[])
}

/// Zero-mean, amplitude-bounded noise law shared by all agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// Uniform on `[-delta, delta]`.
    Uniform { delta: f64 },
    /// `+delta` or `-delta` with probability one half each.
    TwoPoint { delta: f64 },
    CustomDiscrete {
        delta: f64,
        atoms: Vec<f64>,
        weights: Vec<f64>,
    },
    /// Noise-free dynamics. Violates the positive-variance hypothesis and
    /// exists for deterministic comparisons only.
    None,
}

impl NoiseModel {
    pub fn uniform(delta: f64) -> Result<Self> {
        let m = NoiseModel::Uniform { delta };
        m.validate()?;
        Ok(m)
    }

    pub fn two_point(delta: f64) -> Result<Self> {
        let m = NoiseModel::TwoPoint { delta };
        m.validate()?;
        Ok(m)
    }

    pub fn custom(delta: f64, atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let m = NoiseModel::CustomDiscrete { delta, atoms, weights };
        m.validate()?;
        Ok(m)
    }

    pub fn delta(&self) -> f64 {
        match self {
            NoiseModel::Uniform { delta }
            | NoiseModel::TwoPoint { delta }
            | NoiseModel::CustomDiscrete { delta, .. } => *delta,
            NoiseModel::None => 0.0,
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            NoiseModel::CustomDiscrete { atoms, weights, .. } => atoms.iter().zip(weights).map(|(a, w)| a * w).sum(),
            _ => 0.0,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            NoiseModel::Uniform { delta } => delta * delta / 3.0,
            NoiseModel::TwoPoint { delta } => delta * delta,
            NoiseModel::CustomDiscrete { atoms, weights, .. } => {
                let mean = self.mean();
                atoms
                    .iter()
                    .zip(weights)
                    .map(|(a, w)| w * (a - mean) * (a - mean))
                    .sum()
            }
            NoiseModel::None => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let delta = self.delta();
        if matches!(self, NoiseModel::None) {
            return Ok(());
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidNoise(format!("need delta > 0, got {delta}")));
        }
        if let NoiseModel::CustomDiscrete { atoms, weights, .. } = self {
            if atoms.is_empty() || atoms.len() != weights.len() {
                return Err(Error::InvalidNoise(
                    "atoms and weights must be non-empty and of equal length".into(),
                ));
            }
            if let Some(a) = atoms.iter().find(|a| !a.is_finite() || a.abs() > delta) {
                return Err(Error::InvalidNoise(format!("atom {a} exceeds delta = {delta}")));
            }
            if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
                return Err(Error::InvalidNoise(format!("weight {w} outside [0, 1]")));
            }
            let sum: f64 = weights.iter().sum();
            if (sum - 1.0).abs() > SUM_TOL {
                return Err(Error::InvalidNoise(format!("weights sum to {sum}, not 1")));
            }
            let mean = self.mean();
            if mean.abs() > SUM_TOL {
                return Err(Error::InvalidNoise(format!("mean is {mean}, not zero")));
            }
            if self.variance() <= 0.0 {
                return Err(Error::InvalidNoise("variance must be positive".into()));
            }
        }
        Ok(())
    }

    /// `P{a <= xi <= delta}`; the law is symmetric enough that the matching
    /// negative tail is evaluated separately by [`Self::prob_at_most`].
    pub fn prob_at_least(&self, a: f64) -> f64 {
        let delta = self.delta();
        match self {
            NoiseModel::Uniform { .. } => ((delta - a) / (2.0 * delta)).clamp(0.0, 0.5),
            NoiseModel::TwoPoint { .. } => {
                if a <= delta {
                    0.5
                } else {
                    0.0
                }
            }
            NoiseModel::CustomDiscrete { atoms, weights, .. } => {
                atoms.iter().zip(weights).filter(|(&x, _)| x >= a).map(|(_, w)| w).sum()
            }
            NoiseModel::None => 0.0,
        }
    }

    /// `P{-delta <= xi <= -a}`.
    pub fn prob_at_most(&self, neg_a: f64) -> f64 {
        match self {
            NoiseModel::CustomDiscrete { atoms, weights, .. } => atoms
                .iter()
                .zip(weights)
                .filter(|(&x, _)| x <= neg_a)
                .map(|(_, w)| w)
                .sum(),
            _ => self.prob_at_least(-neg_a),
        }
    }

    /// Default protocol atom bound `a`: half the amplitude for the uniform
    /// law, the smallest one-sided atom magnitude for discrete laws.
    pub fn default_atom(&self) -> Option<f64> {
        match self {
            NoiseModel::Uniform { delta } => Some(delta / 2.0),
            NoiseModel::TwoPoint { delta } => Some(*delta),
            NoiseModel::CustomDiscrete { atoms, .. } => {
                let pos = atoms.iter().copied().filter(|&x| x > 0.0).fold(f64::INFINITY, f64::min);
                let neg = atoms
                    .iter()
                    .copied()
                    .filter(|&x| x < 0.0)
                    .map(f64::abs)
                    .fold(f64::INFINITY, f64::min);
                let a = pos.min(neg);
                a.is_finite().then_some(a)
            }
            NoiseModel::None => None,
        }
    }

    pub fn sampler(&self) -> NoiseSampler {
        let inner = match self {
            NoiseModel::Uniform { delta } => {
                SamplerKind::Uniform(Uniform::new_inclusive(-delta, *delta).expect("validated amplitude"))
            }
            NoiseModel::TwoPoint { delta } => SamplerKind::TwoPoint(*delta),
            NoiseModel::CustomDiscrete { atoms, weights, .. } => {
                SamplerKind::Discrete(atoms.clone(), WeightedIndex::new(weights).expect("validated weights"))
            }
            NoiseModel::None => SamplerKind::Zero,
        };
        NoiseSampler { inner }
    }
}

/// A [`NoiseModel`] prepared for repeated draws.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    inner: SamplerKind,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Uniform(Uniform<f64>),
    TwoPoint(f64),
    Discrete(Vec<f64>, WeightedIndex<f64>),
    Zero,
}

impl Distribution<f64> for NoiseSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.inner {
            SamplerKind::Uniform(u) => u.sample(rng),
            SamplerKind::TwoPoint(d) => {
                if rng.random::<bool>() {
                    *d
                } else {
                    -*d
                }
            }
            SamplerKind::Discrete(atoms, idx) => atoms[idx.sample(rng)],
            SamplerKind::Zero => 0.0,
        }
    }
}

/// `n` i.i.d. draws from `model`.
pub fn sample_noise<R: Rng + ?Sized>(rng: &mut R, model: &NoiseModel, n: usize) -> Vec<f64> {
    model.sampler().sample_iter(rng).take(n).collect()
}

/// How the inertia coefficients are produced each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InertiaPolicy {
    /// `1 / (|N_i(t)| + 1)`, which turns the update into the plain HK average.
    HkRule,
    Constant {
        value: f64,
    },
    /// I.i.d. uniform on `[low, 1 - low]`.
    UniformInterval {
        low: f64,
    },
}

impl InertiaPolicy {
    /// Parses `hk_rule`, `constant:v` or `uniform_interval:low`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let number = |s: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|_| Error::InvalidInertia(format!("bad number in `{spec}`")))
        };
        if spec == "hk_rule" {
            Ok(InertiaPolicy::HkRule)
        } else if let Some(v) = spec.strip_prefix("constant:") {
            Ok(InertiaPolicy::Constant { value: number(v)? })
        } else if let Some(v) = spec.strip_prefix("uniform_interval:") {
            Ok(InertiaPolicy::UniformInterval { low: number(v)? })
        } else {
            Err(Error::InvalidInertia(format!("unknown inertia policy `{spec}`")))
        }
    }

    /// Largest inertia floor compatible with this policy for `n` agents.
    pub fn implied_alpha(&self, n: usize) -> f64 {
        let inv_n = 1.0 / n as f64;
        match *self {
            InertiaPolicy::HkRule => inv_n,
            InertiaPolicy::Constant { value } => value.min(1.0 - value).min(inv_n),
            InertiaPolicy::UniformInterval { low } => low,
        }
    }

    pub fn validate(&self, alpha: f64, allow_degenerate: bool) -> Result<()> {
        match *self {
            InertiaPolicy::HkRule => Ok(()),
            InertiaPolicy::Constant { value } => {
                let hi = if allow_degenerate { 1.0 } else { 1.0 - alpha };
                if value >= alpha && value <= hi {
                    Ok(())
                } else {
                    Err(Error::InvalidInertia(format!(
                        "constant {value} outside [{alpha}, {hi}]"
                    )))
                }
            }
            InertiaPolicy::UniformInterval { low } => {
                if low >= alpha && low <= 0.5 {
                    Ok(())
                } else {
                    Err(Error::InvalidInertia(format!(
                        "interval low end {low} must lie in [alpha = {alpha}, 0.5]"
                    )))
                }
            }
        }
    }
}

/// Per-agent inertia for one step. Non-communicating agents get 1 under
/// the HK rule (their update ignores the value).
pub fn inertia_coefficients<R: Rng + ?Sized>(
    rng: &mut R,
    policy: &InertiaPolicy,
    state: &OpinionState,
    comm_set: &CommSet,
    epsilon: f64,
) -> Vec<f64> {
    let n = state.len();
    match *policy {
        InertiaPolicy::HkRule => {
            let mut out = vec![1.0; n];
            for i in comm_set.iter() {
                out[i] = 1.0 / (neighbor_count(i, state.values(), comm_set, epsilon) + 1) as f64;
            }
            out
        }
        InertiaPolicy::Constant { value } => vec![value; n],
        InertiaPolicy::UniformInterval { low } => {
            let high = 1.0 - low;
            if high <= low {
                return vec![low; n];
            }
            let u = Uniform::new_inclusive(low, high).expect("validated interval");
            u.sample_iter(rng).take(n).collect()
        }
    }
}

/// What a stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Comm = 0,
    Noise = 1,
    Inertia = 2,
    Init = 3,
    Protocol = 4,
}

/// Reproducible random stream keyed by `(seed, replica, purpose)`.
///
/// Backed by ChaCha8 with the stream id `replica * 8 + purpose`, so distinct
/// keys never share keystream positions.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    replica: u64,
    purpose: Purpose,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, replica: u64, purpose: Purpose) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(replica.wrapping_mul(8).wrapping_add(purpose as u64));
        RngStream {
            seed,
            replica,
            purpose,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replica(&self) -> u64 {
        self.replica
    }

    pub fn purpose(&self) -> Purpose {
        self.purpose
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// The per-replica streams a trajectory draws from.
#[derive(Debug, Clone)]
pub struct Streams {
    pub comm: RngStream,
    pub noise: RngStream,
    pub inertia: RngStream,
    pub init: RngStream,
}

impl Streams {
    pub fn for_replica(seed: u64, replica: u64) -> Self {
        Streams {
            comm: RngStream::new(seed, replica, Purpose::Comm),
            noise: RngStream::new(seed, replica, Purpose::Noise),
            inertia: RngStream::new(seed, replica, Purpose::Inertia),
            init: RngStream::new(seed, replica, Purpose::Init),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(tag: u64) -> RngStream {
        RngStream::new(0xB0C5, tag, Purpose::Comm)
    }

    /// `|observed - expected| <= 3 * sqrt(p (1 - p) / trials)`.
    fn within_3se(count: u64, trials: u64, p: f64) -> bool {
        let freq = count as f64 / trials as f64;
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        (freq - p).abs() <= 3.0 * se
    }

    #[test]
    fn rule_validation() {
        assert!(CommunicationRule::new(vec![0.5, 0.5, 0.0]).is_err());
        assert!(CommunicationRule::new(vec![0.0, 0.0, 0.9]).is_err());
        assert!(CommunicationRule::new(vec![-0.1, 0.1, 1.0]).is_err());
        assert!(CommunicationRule::new(vec![0.2, 0.3, 0.5]).is_ok());
        assert!(CommunicationRule::fixed(3, 4).is_err());
        assert!(CommunicationRule::fixed(3, 1).is_err());
        let err = CommunicationRule::new(vec![0.4, 0.6, 0.0]).unwrap_err().to_string();
        assert!(err.contains("p0 + p1 < 1"), "{err}");
    }

    #[test]
    fn rule_shorthands() {
        assert_eq!(CommunicationRule::parse("uniform", 3).unwrap().size_probs(), &[0.25; 4]);
        assert_eq!(
            CommunicationRule::parse("fixed:2", 3).unwrap().size_probs(),
            &[0.0, 0.0, 1.0, 0.0]
        );
        assert!(CommunicationRule::parse("fixed:x", 3).is_err());
        assert!(CommunicationRule::parse("bogus", 3).is_err());
    }

    #[test]
    fn degenerate_size_laws() {
        let mut rng = stream(1);
        let empty = CommunicationRule::new_unchecked(vec![1.0, 0.0, 0.0, 0.0]);
        for _ in 0..100 {
            assert!(sample_comm_set(&mut rng, &empty, 3).is_empty());
        }
        let full = CommunicationRule::fixed(5, 5).unwrap();
        for _ in 0..100 {
            assert_eq!(sample_comm_set(&mut rng, &full, 5), CommSet::full(5));
        }
    }

    #[test]
    fn membership_frequency_n3_uniform() {
        let mut rng = stream(2);
        let rule = CommunicationRule::uniform(3);
        let trials = 200_000u64;
        let mut hits = [0u64; 3];
        for _ in 0..trials {
            for i in sample_comm_set(&mut rng, &rule, 3).iter() {
                hits[i] += 1;
            }
        }
        // sum_k p_k k / n = (0 + 1 + 2 + 3) / 12
        let expected = (0..=3).map(|k| 0.25 * k as f64 / 3.0).sum::<f64>();
        assert!((expected - 0.5).abs() < 1e-15);
        for h in hits {
            assert!(within_3se(h, trials, expected), "{h}");
        }
    }

    #[test]
    fn uniform_pairs_given_size_two() {
        let mut rng = stream(3);
        let rule = CommunicationRule::uniform(4);
        let mut counts = std::collections::HashMap::new();
        let mut total = 0u64;
        for _ in 0..300_000 {
            let u = sample_comm_set(&mut rng, &rule, 4);
            if u.len() == 2 {
                *counts.entry(u.as_slice().to_vec()).or_insert(0u64) += 1;
                total += 1;
            }
        }
        assert_eq!(counts.len(), 6);
        for (_, c) in counts {
            assert!(within_3se(c, total, 1.0 / 6.0));
        }
    }

    #[test]
    fn size_and_noise_draws_independent() {
        // Chi-square on the joint (|U| , sign of noise) table; independent
        // streams must not reject at the 0.001 level (df = 3, critical 16.27).
        let n = 3;
        let rule = CommunicationRule::uniform(n);
        let model = NoiseModel::uniform(0.1).unwrap();
        let mut comm = RngStream::new(9, 0, Purpose::Comm);
        let mut noise = RngStream::new(9, 0, Purpose::Noise);
        let mut table = [[0f64; 2]; 4];
        let trials = 100_000;
        for _ in 0..trials {
            let k = sample_comm_set(&mut comm, &rule, n).len();
            let s = (sample_noise(&mut noise, &model, n)[0] > 0.0) as usize;
            table[k][s] += 1.0;
        }
        let rows: Vec<f64> = table.iter().map(|r| r[0] + r[1]).collect();
        let cols = [
            table.iter().map(|r| r[0]).sum::<f64>(),
            table.iter().map(|r| r[1]).sum::<f64>(),
        ];
        let mut chi2 = 0.0;
        for k in 0..4 {
            for s in 0..2 {
                let e = rows[k] * cols[s] / trials as f64;
                chi2 += (table[k][s] - e).powi(2) / e;
            }
        }
        assert!(chi2 < 16.27, "chi2 = {chi2}");
    }

    #[test]
    fn streams_reproducible_and_distinct() {
        let a: Vec<u64> = (0..8)
            .map({
                let mut r = RngStream::new(5, 1, Purpose::Noise);
                move |_| r.next_u64()
            })
            .collect();
        let b: Vec<u64> = (0..8)
            .map({
                let mut r = RngStream::new(5, 1, Purpose::Noise);
                move |_| r.next_u64()
            })
            .collect();
        let c: Vec<u64> = (0..8)
            .map({
                let mut r = RngStream::new(5, 1, Purpose::Comm);
                move |_| r.next_u64()
            })
            .collect();
        let d: Vec<u64> = (0..8)
            .map({
                let mut r = RngStream::new(5, 2, Purpose::Noise);
                move |_| r.next_u64()
            })
            .collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn noise_support_and_moments() {
        let mut rng = RngStream::new(11, 0, Purpose::Noise);
        let delta = 0.01;
        let model = NoiseModel::uniform(delta).unwrap();
        let draws = sample_noise(&mut rng, &model, 1_000_000);
        assert!(draws.iter().all(|x| x.abs() <= delta));
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let expected = delta * delta / 3.0;
        assert!((expected - 3.333_333_333e-5).abs() < 1e-12);
        // Var of x^2 for U[-d, d] is d^4 (1/5 - 1/9).
        let se = (delta.powi(4) * (1.0 / 5.0 - 1.0 / 9.0) / n).sqrt();
        assert!((var - expected).abs() <= 3.0 * se, "{var}");
        assert!(mean.abs() <= 3.0 * (expected / n).sqrt());
    }

    #[test]
    fn two_point_draws() {
        let mut rng = RngStream::new(12, 0, Purpose::Noise);
        let model = NoiseModel::two_point(0.8).unwrap();
        let draws = sample_noise(&mut rng, &model, 100_000);
        assert!(draws.iter().all(|&x| x == 0.8 || x == -0.8));
        let plus = draws.iter().filter(|&&x| x > 0.0).count() as u64;
        assert!(within_3se(plus, 100_000, 0.5));
    }

    #[test]
    fn custom_noise_validation() {
        assert!(NoiseModel::custom(0.3, vec![-0.2, 0.1], vec![1.0 / 3.0, 2.0 / 3.0]).is_ok());
        assert!(NoiseModel::custom(0.3, vec![-0.2, 0.2], vec![0.4, 0.6]).is_err());
        assert!(NoiseModel::custom(0.1, vec![-0.2, 0.2], vec![0.5, 0.5]).is_err());
        assert!(NoiseModel::custom(0.1, vec![0.0], vec![1.0]).is_err());
        assert!(NoiseModel::uniform(0.0).is_err());
        assert!(NoiseModel::uniform(-1.0).is_err());
        let m = NoiseModel::custom(0.3, vec![-0.2, 0.1], vec![1.0 / 3.0, 2.0 / 3.0]).unwrap();
        assert_eq!(m.default_atom(), Some(0.1));
        let mut rng = RngStream::new(1, 0, Purpose::Noise);
        assert!(sample_noise(&mut rng, &m, 1000).iter().all(|&x| x == -0.2 || x == 0.1));
    }

    #[test]
    fn protocol_tail_masses() {
        let u = NoiseModel::uniform(0.2).unwrap();
        assert!((u.prob_at_least(0.1) - 0.25).abs() < 1e-15);
        assert!((u.prob_at_most(-0.1) - 0.25).abs() < 1e-15);
        let t = NoiseModel::two_point(0.25).unwrap();
        assert_eq!(t.prob_at_least(0.25), 0.5);
        assert_eq!(t.prob_at_most(-0.25), 0.5);
    }

    #[test]
    fn inertia_policies() {
        let s = OpinionState::new(vec![0.1, 0.12, 0.14, 0.16, 0.9]).unwrap();
        let comm = CommSet::full(5);
        let mut rng = RngStream::new(1, 0, Purpose::Inertia);
        let hk = inertia_coefficients(&mut rng, &InertiaPolicy::HkRule, &s, &comm, 0.1);
        assert_eq!(hk[0], 0.25);
        assert_eq!(hk[4], 1.0);
        let c = inertia_coefficients(&mut rng, &InertiaPolicy::Constant { value: 0.5 }, &s, &comm, 0.1);
        assert_eq!(c, vec![0.5; 5]);

        let policy = InertiaPolicy::UniformInterval { low: 0.1 };
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let draws = 100_000 / 5;
        for _ in 0..draws {
            for v in inertia_coefficients(&mut rng, &policy, &s, &comm, 0.1) {
                assert!((0.1..=0.9).contains(&v));
                sum += v;
                sumsq += v * v;
            }
        }
        let m = (draws * 5) as f64;
        let mean = sum / m;
        let sd = ((sumsq / m - mean * mean) / m).sqrt();
        assert!((mean - 0.5).abs() <= 3.0 * sd, "{mean}");
    }

    #[test]
    fn inertia_parse() {
        assert_eq!(InertiaPolicy::parse("hk_rule").unwrap(), InertiaPolicy::HkRule);
        assert_eq!(
            InertiaPolicy::parse("constant:0.2").unwrap(),
            InertiaPolicy::Constant { value: 0.2 }
        );
        assert_eq!(
            InertiaPolicy::parse("uniform_interval:0.1").unwrap(),
            InertiaPolicy::UniformInterval { low: 0.1 }
        );
        assert!(InertiaPolicy::parse("constant:").is_err());
    }
}
