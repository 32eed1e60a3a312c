//! Observables, stopping times, closed-form probabilities and theoretical
//! constants, plus the ensemble estimator for the mean diameter.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CommSet, ModelConfig, OpinionState};
use crate::rules::CommunicationRule;

/// Width of the normal-approximation band, in standard errors.
pub const CONFIDENCE_Z: f64 = 3.0;

/// Hard cap on the integer search for `L`.
pub const L_SEARCH_CAP: u64 = 1_000_000;

/// Default fraction of the horizon treated as the tail window.
pub const DEFAULT_TAIL_FRACTION: f64 = 0.25;

/// `max_i x_i - min_i x_i`.
pub fn diameter(state: &OpinionState) -> f64 {
    state.max() - state.min()
}

/// Indices of a minimal and a maximal agent, lowest index on ties.
pub fn extremal_agents(state: &OpinionState) -> (usize, usize) {
    let x = state.values();
    let mut m = 0;
    let mut big_m = 0;
    for (i, &v) in x.iter().enumerate() {
        if v < x[m] {
            m = i;
        }
        if v > x[big_m] {
            big_m = i;
        }
    }
    (m, big_m)
}

/// Both extremal agents communicate. With `m == M` only that agent must.
pub fn event_a_holds(state: &OpinionState, comm_set: &CommSet) -> bool {
    let (m, big_m) = extremal_agents(state);
    comm_set.contains(m) && comm_set.contains(big_m)
}

/// `P{A(t)} = sum_{k>=2} k(k-1)/(n(n-1)) p_k`.
pub fn prob_event_a(rule: &CommunicationRule, n: usize) -> f64 {
    let pairs = (n * (n - 1)) as f64;
    (2..=n)
        .map(|k| (k * (k - 1)) as f64 / pairs * rule.p(k))
        .sum::<f64>()
        .min(1.0)
}

/// Per-step diameters `d_V(0..=horizon)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DiameterSeries(Vec<f64>);

impl DiameterSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::param("diameter", format!("{v} outside [0, 1]")));
        }
        Ok(DiameterSeries(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Largest value in `[start, end)`.
    pub fn window_max(&self, start: usize, end: usize) -> f64 {
        self.0[start..end.min(self.0.len())]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// First `t` with `d_V(t) <= threshold`.
pub fn stopping_time(series: &DiameterSeries, threshold: f64) -> Option<usize> {
    series.values().iter().position(|&d| d <= threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub mu: f64,
    pub lambda: f64,
    /// `n(n-1)/2`.
    pub l0: u64,
    /// `2(1 - p0 - p1) / (n(n-1))`, lower bound on `P{A(t)}`.
    pub p_tilde: f64,
    /// Smallest `l` with `(1 - p_tilde^L0)^l <= mu*eps/2`.
    pub l: u64,
    pub delta_bar: f64,
    /// Noise ceiling for the contraction step over `L0` forced steps.
    pub lemma3_delta_max: f64,
    /// Noise ceiling for reaching `d_V <= lambda*eps`.
    pub lemma2_delta_max: f64,
    /// Protocol atom bound and per-sign probability, when the noise law has
    /// mass on both sides.
    pub a: Option<f64>,
    pub p_bar: Option<f64>,
    /// `ceil(1/a)`.
    pub t_l: Option<u64>,
    /// `2(1 - p_n)/n`, lower bound on `P{A(t)^C}`.
    pub p_escape: f64,
    /// `p_escape^{t_L} * p_bar^{n t_L}`.
    pub escape_bound: Option<f64>,
}

/// Smallest `l >= 1` with `base^l <= target`, searching up to `cap`.
pub fn l_search(base: f64, target: f64, cap: u64) -> Result<u64> {
    let mut acc = base;
    for l in 1..=cap {
        if acc <= target {
            return Ok(l);
        }
        acc *= base;
    }
    Err(Error::SearchCap { cap, base })
}

pub fn theory_constants(mu: f64, lambda: f64, config: &ModelConfig) -> Result<TheoryConstants> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::param("mu", format!("need 0 < mu <= 1, got {mu}")));
    }
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::param("lambda", format!("need 0 < lambda <= 1, got {lambda}")));
    }
    let n = config.n;
    let nf = n as f64;
    let eps = config.epsilon;
    let alpha = config.alpha;
    let rule = &config.comm;
    let l0 = (n * (n - 1) / 2) as u64;
    let p_tilde = 2.0 * (1.0 - rule.p(0) - rule.p(1)) / (nf * (nf - 1.0));
    let base = 1.0 - p_tilde.powi(l0 as i32);
    let l = l_search(base, mu * eps / 2.0, L_SEARCH_CAP)?;
    let delta_bar =
        (alpha * mu * eps / (2.0 * nf * (nf - 1.0).powi(2))).min(mu * eps / (8.0 * (1.0 + (l0 * l) as f64)));

    let a = config.noise.default_atom();
    let p_bar = a.map(|a| config.noise.prob_at_least(a).min(config.noise.prob_at_most(-a)));
    let t_l = a.map(|a| (1.0 / a).ceil() as u64);
    let p_escape = 2.0 * (1.0 - rule.p(n)) / nf;
    let escape_bound = match (p_bar, t_l) {
        (Some(pb), Some(t)) => Some(p_escape.powi(t as i32) * pb.powi((n as u64 * t) as i32)),
        _ => None,
    };

    Ok(TheoryConstants {
        mu,
        lambda,
        l0,
        p_tilde,
        l,
        delta_bar,
        lemma3_delta_max: alpha * lambda * eps / (2.0 * nf * (nf - 1.0).powi(2)),
        lemma2_delta_max: lambda * eps / 2.0,
        a,
        p_bar,
        t_l,
        p_escape,
        escape_bound,
    })
}

/// Cross-replica aggregates of `d_V(t)`, one entry per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub replicas: usize,
    pub confidence_z: f64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub half_width: Vec<f64>,
}

impl EnsembleStats {
    pub fn steps(&self) -> usize {
        self.mean.len()
    }

    /// Conservative upper estimate of `E d_V(t)`: the mean plus the
    /// half-width, never above the largest observed replica value.
    pub fn upper(&self, t: usize) -> f64 {
        (self.mean[t] + self.half_width[t]).min(self.max[t])
    }

    /// Conservative lower estimate, never below the smallest replica value.
    pub fn lower(&self, t: usize) -> f64 {
        (self.mean[t] - self.half_width[t]).max(self.min[t])
    }
}

/// Whether to reduce replicas in a fixed order or with rayon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    #[default]
    Sequential,
    Parallel,
}

/// Per-step Welford accumulator; merging is Chan's pairwise update.
#[derive(Debug, Clone)]
struct Accumulator {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    min: Vec<f64>,
    max: Vec<f64>,
}

impl Accumulator {
    fn empty(steps: usize) -> Self {
        Accumulator {
            count: 0.0,
            mean: vec![0.0; steps],
            m2: vec![0.0; steps],
            min: vec![f64::INFINITY; steps],
            max: vec![f64::NEG_INFINITY; steps],
        }
    }

    fn push(mut self, series: &[f64]) -> Self {
        self.count += 1.0;
        for (t, &x) in series.iter().enumerate() {
            let d = x - self.mean[t];
            self.mean[t] += d / self.count;
            self.m2[t] += d * (x - self.mean[t]);
            self.min[t] = self.min[t].min(x);
            self.max[t] = self.max[t].max(x);
        }
        self
    }

    fn merge(mut self, other: Self) -> Self {
        if other.count == 0.0 {
            return self;
        }
        if self.count == 0.0 {
            return other;
        }
        let total = self.count + other.count;
        for t in 0..self.mean.len() {
            let d = other.mean[t] - self.mean[t];
            self.mean[t] += d * other.count / total;
            self.m2[t] += other.m2[t] + d * d * self.count * other.count / total;
            self.min[t] = self.min[t].min(other.min[t]);
            self.max[t] = self.max[t].max(other.max[t]);
        }
        self.count = total;
        self
    }

    fn finish(self) -> EnsembleStats {
        let r = self.count;
        let variance: Vec<f64> = self.m2.iter().map(|m2| (m2 / (r - 1.0)).max(0.0)).collect();
        let half_width = variance.iter().map(|v| CONFIDENCE_Z * (v / r).sqrt()).collect();
        EnsembleStats {
            replicas: r as usize,
            confidence_z: CONFIDENCE_Z,
            mean: self.mean,
            variance,
            min: self.min,
            max: self.max,
            half_width,
        }
    }
}

pub fn ensemble_mean_diameter(records: &[DiameterSeries]) -> Result<EnsembleStats> {
    ensemble_mean_diameter_with(records, Reduction::Sequential)
}

pub fn ensemble_mean_diameter_with(records: &[DiameterSeries], reduction: Reduction) -> Result<EnsembleStats> {
    if records.len() < 2 {
        return Err(Error::Ensemble(format!(
            "need at least 2 replicas, got {}",
            records.len()
        )));
    }
    let steps = records[0].len();
    if let Some(bad) = records.iter().find(|r| r.len() != steps) {
        return Err(Error::Ensemble(format!(
            "mismatched horizons: {} vs {} steps",
            steps,
            bad.len()
        )));
    }
    let acc = match reduction {
        Reduction::Sequential => records
            .iter()
            .fold(Accumulator::empty(steps), |acc, r| acc.push(r.values())),
        Reduction::Parallel => records
            .par_iter()
            .fold(|| Accumulator::empty(steps), |acc, r| acc.push(r.values()))
            .reduce(|| Accumulator::empty(steps), Accumulator::merge),
    };
    Ok(acc.finish())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImVerdict {
    pub pass: bool,
    /// `epsilon - worst_upper`; positive when passing.
    pub margin: f64,
    pub worst_step: usize,
    pub worst_upper: f64,
    pub window_start: usize,
    pub window_end: usize,
}

/// First step of the final `tail_fraction` of a series with `steps` entries.
pub fn tail_start(steps: usize, tail_fraction: f64) -> usize {
    let len = ((steps as f64) * tail_fraction).ceil() as usize;
    steps - len.clamp(1, steps)
}

/// Quasi-synchronization in mean over the final `tail_fraction` of steps.
pub fn quasi_sync_im_check(stats: &EnsembleStats, epsilon: f64, tail_fraction: f64) -> Result<ImVerdict> {
    if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        return Err(Error::param(
            "tail_fraction",
            format!("need 0 < tail_fraction < 1, got {tail_fraction}"),
        ));
    }
    let start = tail_start(stats.steps(), tail_fraction);
    quasi_sync_im_window(stats, epsilon, start, stats.steps())
}

/// As [`quasi_sync_im_check`] over the explicit step window `[start, end)`.
pub fn quasi_sync_im_window(stats: &EnsembleStats, epsilon: f64, start: usize, end: usize) -> Result<ImVerdict> {
    let end = end.min(stats.steps());
    if start >= end {
        return Err(Error::param("window", format!("empty window [{start}, {end})")));
    }
    let (worst_step, worst_upper) =
        (start..end)
            .map(|t| (t, stats.upper(t)))
            .fold(
                (start, f64::NEG_INFINITY),
                |best, cur| if cur.1 > best.1 { cur } else { best },
            );
    Ok(ImVerdict {
        pass: worst_upper <= epsilon,
        margin: epsilon - worst_upper,
        worst_step,
        worst_upper,
        window_start: start,
        window_end: end,
    })
}
