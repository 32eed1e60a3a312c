use std::collections::HashSet;

use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::{ensemble_mean_diameter_with, DiameterSeries, EnsembleStats, Reduction};
use crate::model::{step, ModelConfig, OpinionState, StepInputs};
use crate::rules::{inertia_coefficients, sample_comm_set, NoiseSampler, Streams};

/// Short stable hash of the canonical JSON form of a config.
pub fn fingerprint(config: &ModelConfig) -> String {
    let canonical = serde_json::to_vec(config).expect("config serializes");
    Sha256::digest(&canonical)[..8]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Default snapshot stride: `horizon / 400`, at least 1.
pub fn default_snapshot_stride(horizon: usize) -> usize {
    (horizon / 400).max(1)
}

/// Draws every step's inputs from the per-replica streams and advances the
/// state. Callers may replace any input before calling [`Simulator::advance`].
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    config: &'a ModelConfig,
    streams: Streams,
    noise: NoiseSampler,
    state: OpinionState,
}

impl<'a> Simulator<'a> {
    pub fn new(config: &'a ModelConfig, seed: u64, replica: u64, initial: Option<&[f64]>) -> Result<Self> {
        let mut streams = Streams::for_replica(seed, replica);
        let values = match initial {
            Some(v) => {
                if v.len() != config.n {
                    return Err(Error::Dimension {
                        what: "initial state",
                        expected: config.n,
                        actual: v.len(),
                    });
                }
                v.to_vec()
            }
            None => (0..config.n).map(|_| streams.init.random::<f64>()).collect(),
        };
        Ok(Simulator {
            config,
            streams,
            noise: config.noise.sampler(),
            state: OpinionState::new(values)?,
        })
    }

    pub fn state(&self) -> &OpinionState {
        &self.state
    }

    pub fn config(&self) -> &ModelConfig {
        self.config
    }

    pub fn streams_mut(&mut self) -> &mut Streams {
        &mut self.streams
    }

    /// Replaces the current state (time index kept from the new state).
    pub fn reset(&mut self, state: OpinionState) -> Result<()> {
        if state.len() != self.config.n {
            return Err(Error::Dimension {
                what: "state",
                expected: self.config.n,
                actual: state.len(),
            });
        }
        self.state = state;
        Ok(())
    }

    /// Samples communicating set, then inertia, then noise.
    pub fn draw_inputs(&mut self) -> StepInputs {
        let n = self.config.n;
        let comm_set = sample_comm_set(&mut self.streams.comm, &self.config.comm, n);
        let inertia = inertia_coefficients(
            &mut self.streams.inertia,
            &self.config.inertia,
            &self.state,
            &comm_set,
            self.config.epsilon,
        );
        let noise = (&self.noise).sample_iter(&mut self.streams.noise).take(n).collect();
        StepInputs {
            comm_set,
            inertia,
            noise,
        }
    }

    pub fn advance(&mut self, inputs: &StepInputs) -> Result<&OpinionState> {
        self.state = step(&self.state, inputs, self.config)?;
        Ok(&self.state)
    }

    pub fn step(&mut self) -> Result<&OpinionState> {
        let inputs = self.draw_inputs();
        self.advance(&inputs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub d: f64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl StepSummary {
    pub fn of(state: &OpinionState) -> Self {
        let min = state.min();
        let max = state.max();
        StepSummary {
            d: max - min,
            min,
            max,
            mean: state.mean(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub fingerprint: String,
    pub seed: u64,
    pub replica: u64,
    pub horizon: usize,
    /// One entry per step `t = 0..=horizon`.
    pub steps: Vec<StepSummary>,
    pub snapshots: Vec<Snapshot>,
}

impl TrajectoryRecord {
    pub fn diameters(&self) -> DiameterSeries {
        DiameterSeries::new(self.steps.iter().map(|s| s.d).collect()).expect("diameters lie in [0, 1]")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryOptions {
    pub replica: u64,
    /// `None` records no snapshots.
    pub snapshot_stride: Option<usize>,
    pub initial: Option<Vec<f64>>,
}

pub fn run_trajectory(
    config: &ModelConfig,
    seed: u64,
    horizon: usize,
    opts: &TrajectoryOptions,
) -> Result<TrajectoryRecord> {
    if horizon == 0 {
        return Err(Error::param("horizon", "must be at least 1"));
    }
    if opts.snapshot_stride == Some(0) {
        return Err(Error::param("snapshot_stride", "must be at least 1"));
    }
    let mut sim = Simulator::new(config, seed, opts.replica, opts.initial.as_deref())?;
    let mut steps = Vec::with_capacity(horizon + 1);
    let mut snapshots = Vec::new();
    let mut record = |t: usize, s: &OpinionState, steps: &mut Vec<StepSummary>| {
        steps.push(StepSummary::of(s));
        if let Some(stride) = opts.snapshot_stride {
            if t.is_multiple_of(stride) || t == horizon {
                snapshots.push(Snapshot {
                    t,
                    values: s.values().to_vec(),
                });
            }
        }
    };
    record(0, sim.state(), &mut steps);
    for t in 1..=horizon {
        let s = sim.step()?;
        record(t, s, &mut steps);
    }
    Ok(TrajectoryRecord {
        fingerprint: fingerprint(config),
        seed,
        replica: opts.replica,
        horizon,
        steps,
        snapshots,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnsembleOptions {
    pub snapshot_stride: Option<usize>,
    pub initial: Option<Vec<f64>>,
    pub reduction: Reduction,
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    pub stats: EnsembleStats,
    pub records: Vec<TrajectoryRecord>,
}

pub fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.len() < 2 {
        return Err(Error::Ensemble(format!("need at least 2 seeds, got {}", seeds.len())));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = seeds.iter().find(|s| !seen.insert(**s)) {
        return Err(Error::Ensemble(format!("duplicate seed {dup}")));
    }
    Ok(())
}

/// `count` consecutive seeds from `base`.
pub fn seed_range(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| base.wrapping_add(i)).collect()
}

/// One trajectory per seed; replica `i` uses seed `seeds[i]` and stream
/// id `i`, so records do not depend on scheduling.
pub fn run_ensemble(config: &ModelConfig, seeds: &[u64], horizon: usize, opts: &EnsembleOptions) -> Result<Ensemble> {
    check_seeds(seeds)?;
    let run = |(i, &seed): (usize, &u64)| {
        run_trajectory(
            config,
            seed,
            horizon,
            &TrajectoryOptions {
                replica: i as u64,
                snapshot_stride: opts.snapshot_stride,
                initial: opts.initial.clone(),
            },
        )
    };
    let records: Vec<TrajectoryRecord> = match opts.reduction {
        Reduction::Sequential => seeds.iter().enumerate().map(run).collect::<Result<_>>()?,
        Reduction::Parallel => seeds.par_iter().enumerate().map(run).collect::<Result<_>>()?,
    };
    let series: Vec<DiameterSeries> = records.iter().map(|r| r.diameters()).collect();
    let stats = ensemble_mean_diameter_with(&series, opts.reduction)?;
    Ok(Ensemble { stats, records })
}
