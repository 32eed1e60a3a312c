//! Property suites behind `bcsync verify <subcommand>`. Each returns a
//! [`Verdict`] carrying the bound that was checked, the empirical margin, the
//! seeds used and whatever theory constants could be computed.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::harness::config::LoadedConfig;
use crate::harness::run::{run_ensemble, seed_range, EnsembleOptions, Simulator};
use crate::metrics::{
    event_a_holds, prob_event_a, quasi_sync_im_check, quasi_sync_im_window, stopping_time, tail_start,
    theory_constants, DiameterSeries, TheoryConstants, CONFIDENCE_Z,
};
use crate::model::{step, ModelConfig, OpinionState, StepInputs};
use crate::protocols::{contraction_noise, divergence_noise, forced_a_sampler, large_noise_model, ProtocolParams};
use crate::rules::{inertia_coefficients, sample_comm_set, CommunicationRule, Purpose, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Im,
    AsFailure,
    Lemma3,
    Lemma2,
    LargeNoise,
    #[serde(rename = "prob-A")]
    ProbA,
    DeltaBar,
}

impl Check {
    pub const ALL: [Check; 7] = [
        Check::Im,
        Check::AsFailure,
        Check::Lemma3,
        Check::Lemma2,
        Check::LargeNoise,
        Check::ProbA,
        Check::DeltaBar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Im => "im",
            Check::AsFailure => "as-failure",
            Check::Lemma3 => "lemma3",
            Check::Lemma2 => "lemma2",
            Check::LargeNoise => "large-noise",
            Check::ProbA => "prob-A",
            Check::DeltaBar => "delta-bar",
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Check {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Check::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<_> = Check::ALL.iter().map(|c| c.name()).collect();
                Error::Config(format!(
                    "unknown subcommand `{s}` (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}

/// Knobs shared by the subcommands; each reads only what it needs.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    /// Reject configurations outside the hypotheses of the checked claim.
    pub strict: bool,
    pub seed: u64,
    /// Runs, windows, Monte Carlo steps or replicas, depending on the check.
    pub runs: Option<usize>,
    pub horizon: Option<usize>,
    pub mu: f64,
    pub lambda: f64,
    /// Protocol atom bound; defaults to the noise law's own.
    pub a: Option<f64>,
    pub magnitude: Option<f64>,
    /// Tail probability for `large-noise`.
    pub p: f64,
    /// Explicit inclusive `[start, end]` window for `im`, overriding the tail
    /// fraction.
    pub window: Option<(usize, usize)>,
    /// For `im`: double the horizon until every replica's `d_V` has dropped
    /// to this level, up to `horizon_cap`.
    pub settle_threshold: Option<f64>,
    pub horizon_cap: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            strict: false,
            seed: 0,
            runs: None,
            horizon: None,
            mu: 1.0,
            lambda: 1.0,
            a: None,
            magnitude: None,
            p: 0.5,
            window: None,
            settle_threshold: None,
            horizon_cap: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub subcommand: Check,
    pub pass: bool,
    /// Distance from the checked bound, positive when passing.
    pub margin: f64,
    pub seeds: Vec<u64>,
    pub theory: Option<TheoryConstants>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theory_error: Option<String>,
    pub details: Value,
}

impl Verdict {
    fn new(
        check: Check,
        config: &ModelConfig,
        opts: &VerifyOptions,
        pass: bool,
        margin: f64,
        seeds: Vec<u64>,
        details: Value,
    ) -> Self {
        let (theory, theory_error) = match theory_constants(opts.mu, opts.lambda, config) {
            Ok(t) => (Some(t), None),
            Err(e) => (None, Some(e.to_string())),
        };
        Verdict {
            subcommand: check,
            pass,
            margin,
            seeds,
            theory,
            theory_error,
            details,
        }
    }
}

pub fn verify(check: Check, loaded: &LoadedConfig, opts: &VerifyOptions) -> Result<Verdict> {
    match check {
        Check::Im => verify_im(loaded, opts),
        Check::AsFailure => verify_as_failure(loaded, opts),
        Check::Lemma3 => verify_lemma3(loaded, opts),
        Check::Lemma2 => verify_lemma2(loaded, opts),
        Check::LargeNoise => verify_large_noise(loaded, opts),
        Check::ProbA => verify_prob_a(loaded, opts),
        Check::DeltaBar => verify_delta_bar(loaded, opts),
    }
}

fn ensemble_seeds(loaded: &LoadedConfig, opts: &VerifyOptions) -> Vec<u64> {
    match &loaded.settings.seeds {
        Some(s) => s.clone(),
        None => seed_range(opts.seed, opts.runs.unwrap_or(loaded.settings.replicas)),
    }
}

/// Ensemble run plus the i.m. verdict over the tail (or an explicit window).
pub fn verify_im(loaded: &LoadedConfig, opts: &VerifyOptions) -> Result<Verdict> {
    let config = &loaded.model;
    if opts.strict {
        let theory = theory_constants(opts.mu, opts.lambda, config)
            .map_err(|e| Error::Infeasible(format!("delta_bar unavailable: {e}")))?;
        if config.delta() > theory.delta_bar {
            return Err(Error::Infeasible(format!(
                "delta = {} exceeds delta_bar = {:e}",
                config.delta(),
                theory.delta_bar
            )));
        }
    }
    let seeds = ensemble_seeds(loaded, opts);
    let eopts = EnsembleOptions {
        initial: loaded.settings.initial.clone(),
        ..Default::default()
    };
    let mut horizon = opts.horizon.unwrap_or(loaded.settings.horizon);
    let ensemble = loop {
        let e = run_ensemble(config, &seeds, horizon, &eopts)?;
        let Some(threshold) = opts.settle_threshold else {
            break e;
        };
        let settled = e
            .records
            .iter()
            .all(|r| stopping_time(&r.diameters(), threshold).is_some());
        if settled {
            break e;
        }
        if horizon >= opts.horizon_cap {
            return Err(Error::Ensemble(format!(
                "d_V did not reach {threshold} in every replica within the horizon cap {}",
                opts.horizon_cap
            )));
        }
        horizon = (horizon * 2).min(opts.horizon_cap);
    };
    let stats = &ensemble.stats;
    let eps = config.epsilon;
    let verdict = match opts.window {
        Some((start, end)) => quasi_sync_im_window(stats, eps, start, end + 1)?,
        None => quasi_sync_im_check(stats, eps, loaded.settings.tail_fraction)?,
    };
    let exceeding = ensemble
        .records
        .iter()
        .filter(|r| r.diameters().window_max(verdict.window_start, verdict.window_end) > eps)
        .count();
    let window_mean = stats.mean[verdict.window_start..verdict.window_end].iter().sum::<f64>()
        / (verdict.window_end - verdict.window_start) as f64;
    let details = json!({
        "epsilon": eps,
        "delta": config.delta(),
        "horizon": horizon,
        "replicas": seeds.len(),
        "confidence_z": stats.confidence_z,
        "window": [verdict.window_start, verdict.window_end - 1],
        "window_mean_d": window_mean,
        "worst_step": verdict.worst_step,
        "worst_upper": verdict.worst_upper,
        "replicas_exceeding_epsilon": exceeding,
        "fraction_exceeding_epsilon": exceeding as f64 / seeds.len() as f64,
    });
    Ok(Verdict::new(
        Check::Im,
        config,
        opts,
        verdict.pass,
        verdict.margin,
        seeds,
        details,
    ))
}

fn protocol_params(config: &ModelConfig, opts: &VerifyOptions) -> Result<ProtocolParams> {
    let a = match opts.a.or_else(|| config.noise.default_atom()) {
        Some(a) => a,
        None => {
            return Err(Error::Infeasible(
                "the noise law has no mass on both signs, so no protocol atom exists".into(),
            ))
        }
    };
    let params = ProtocolParams::from_noise(&config.noise, a)
        .map_err(|e| Error::Infeasible(format!("noise law cannot realize the protocol: {e}")))?;
    match opts.magnitude {
        Some(m) => params.with_magnitude(m),
        None => Ok(params),
    }
}

/// Restart windows of length `ceil(1/a)` from fresh uniform states; whenever
/// `A(t)` fails the divergence protocol replaces the noise draw. Compares the
/// frequency of `d_V = 1` at the window end with `p_escape^t_L p_bar^(n t_L)`.
pub fn verify_as_failure(loaded: &LoadedConfig, opts: &VerifyOptions) -> Result<Verdict> {
    let config = &loaded.model;
    let n = config.n;
    let p_n = config.comm.p(n);
    if p_n >= 1.0 {
        return Err(Error::Infeasible(
            "p_n = 1: A(t) always holds and the escape cannot start".into(),
        ));
    }
    let params = protocol_params(config, opts)?;
    let t_l = (1.0 / params.a).ceil() as usize;
    let p_escape = 2.0 * (1.0 - p_n) / n as f64;
    let bound = p_escape.powi(t_l as i32) * params.step_probability(n).powi(t_l as i32);
    let windows = opts.runs.unwrap_or(10_000);
    if windows == 0 {
        return Err(Error::param("runs", "need at least one window"));
    }

    let mut hits = 0usize;
    let mut reached_within = 0usize;
    let mut protocol_steps = 0usize;
    for g in 0..windows {
        let mut sim = Simulator::new(config, opts.seed, g as u64, None)?;
        let mut touched = false;
        for _ in 0..t_l {
            let mut inputs = sim.draw_inputs();
            if !event_a_holds(sim.state(), &inputs.comm_set) {
                inputs.noise = divergence_noise(sim.state(), &params);
                protocol_steps += 1;
            }
            let s = sim.advance(&inputs)?;
            touched |= s.max() - s.min() == 1.0;
        }
        let s = sim.state();
        if s.max() - s.min() == 1.0 {
            hits += 1;
        }
        if touched {
            reached_within += 1;
        }
    }
    let w = windows as f64;
    let p_hat = hits as f64 / w;
    let lower = p_hat - CONFIDENCE_Z * (p_hat * (1.0 - p_hat) / w).sqrt();
    let margin = lower - bound;
    let details = json!({
        "windows": windows,
        "t_l": t_l,
        "a": params.a,
        "magnitude": params.magnitude,
        "p_bar": params.p_bar,
        "p_escape": p_escape,
        "bound": bound,
        "hits": hits,
        "p_hat": p_hat,
        "p_hat_lower": lower,
        "fraction_reaching_one_within_window": reached_within as f64 / w,
        "protocol_steps": protocol_steps,
    });
    Ok(Verdict::new(
        Check::AsFailure,
        config,
        opts,
        margin >= 0.0,
        margin,
        vec![opts.seed],
        details,
    ))
}

/// Initial state with diameter exactly `width`, placed uniformly in `[0, 1]`.
fn state_with_diameter<R: Rng + ?Sized>(rng: &mut R, n: usize, width: f64) -> Result<OpinionState> {
    let base = rng.random::<f64>() * (1.0 - width);
    let mut values: Vec<f64> = (0..n).map(|_| base + rng.random::<f64>() * width).collect();
    if n >= 2 {
        let lo = rng.random_range(0..n);
        let hi = (lo + 1 + rng.random_range(0..n - 1)) % n;
        values[lo] = base;
        values[hi] = base + width;
    }
    OpinionState::new(values)
}

/// Outcome of one forced-`A` contraction run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionRun {
    pub diameters: Vec<f64>,
    pub envelope_ok: bool,
    pub contracted: bool,
}

/// `L0` steps from a state with `d_V = lambda*eps/2`, every step's set drawn
/// conditioned on `A(t)`, and divergence noise of the given magnitude.
pub fn contraction_run(
    config: &ModelConfig,
    params: &ProtocolParams,
    lambda: f64,
    seed: u64,
    replica: u64,
) -> Result<ContractionRun> {
    let n = config.n;
    let eps = config.epsilon;
    let l0 = n * (n - 1) / 2;
    let delta = params.magnitude;
    let mut rng = RngStream::new(seed, replica, Purpose::Protocol);
    let mut inertia_rng = RngStream::new(seed, replica, Purpose::Inertia);
    let mut state = state_with_diameter(&mut rng, n, lambda * eps / 2.0)?;
    let d0 = state.max() - state.min();
    let mut diameters = vec![d0];
    let mut envelope_ok = true;
    for t in 1..=l0 {
        let comm_set = forced_a_sampler(&mut rng, &config.comm, &state, n)?;
        let inertia = inertia_coefficients(&mut inertia_rng, &config.inertia, &state, &comm_set, eps);
        let noise = divergence_noise(&state, params);
        state = step(
            &state,
            &StepInputs {
                comm_set,
                inertia,
                noise,
            },
            config,
        )?;
        let d = state.max() - state.min();
        envelope_ok &= d <= d0 + 2.0 * t as f64 * delta;
        diameters.push(d);
    }
    let target = lambda * eps / 2.0 - config.alpha * lambda * eps / (2.0 * (n - 1) as f64);
    let contracted = *diameters.last().expect("at least d(0)") <= target;
    Ok(ContractionRun {
        diameters,
        envelope_ok,
        contracted,
    })
}

/// Worst-case contraction over `L0` forced-`A` steps, every run.
pub fn verify_lemma3(loaded: &LoadedConfig, opts: &VerifyOptions) -> Result<Verdict> {
    let config = &loaded.model;
    let n = config.n;
    let eps = config.epsilon;
    let lambda = opts.lambda;
    let delta = config.delta();
    let delta_max = config.alpha * lambda * eps / (2.0 * n as f64 * ((n - 1) as f64).powi(2));
    if opts.strict && delta > delta_max * (1.0 + 1e-12) {
        return Err(Error::Infeasible(format!(
            "delta = {delta} exceeds alpha*lambda*eps/(2n(n-1)^2) = {delta_max:e}"
        )));
    }
    let params = protocol_params(config, opts)?;
    let params = match opts.magnitude {
        Some(_) => params,
        None => params.with_magnitude(delta)?,
    };
    let runs = opts.runs.unwrap_or(1000);
    let target = lambda * eps / 2.0 - config.alpha * lambda * eps / (2.0 * (n - 1) as f64);
    let mut envelope_ok = 0usize;
    let mut contracted = 0usize;
    let mut worst_final = 0.0f64;
    for r in 0..runs {
        let run = contraction_run(config, &params, lambda, opts.seed, r as u64)?;
        envelope_ok += run.envelope_ok as usize;
        contracted += run.contracted as usize;
        worst_final = worst_final.max(*run.diameters.last().expect("nonempty"));
    }
    let pass = runs > 0 && envelope_ok == runs && contracted == runs;
    let details = json!({
        "runs": runs,
        "l0": n * (n - 1) / 2,
        "delta": delta,
        "delta_max": delta_max,
        "magnitude": params.magnitude,
        "target": target,
        "worst_final_d": worst_final,
        "runs_within_envelope": envelope_ok,
        "runs_contracted": contracted,
    });
    Ok(Verdict::new(
        Check::Lemma3,
        config,
        opts,
        pass,
        target - worst_final,
        vec![opts.seed],
        details,
    ))
}

/// Half the agents at 0, the rest at 1.
pub fn split_state(n: usize) -> Vec<f64> {
    (0..n).map(|i| if i < n / 2 { 0.0 } else { 1.0 }).collect()
}

/// Contraction protocol from the configured (or split) initial state; every
/// run must reach `d_V <= lambda*eps` within the horizon.
pub fn verify_lemma2(loaded: &LoadedConfig, opts: &VerifyOptions) -> Result<Verdict> {
    let config = &loaded.model;
    let eps = config.epsilon;
    let lambda = opts.lambda;
    let delta_max = lambda * eps / 2.0;
    if opts.strict && config.delta() > delta_max {
        return Err(Error::Infeasible(format!(
            "delta = {} exceeds lambda*eps/2 = {delta_max}",
            config.delta()
        )));
    }
    let params = protocol_params(config, opts)?;
    let runs = opts.runs.unwrap_or(1000);
    let horizon = opts.horizon.unwrap_or(10_000);
    let threshold = lambda * eps;
    let initial = loaded.settings.initial.clone().unwrap_or_else(|| split_state(config.n));

    let mut times = Vec::with_capacity(runs);
    let mut missed = 0usize;
    for r in 0..runs {
        let mut sim = Simulator::new(config, opts.seed, r as u64, Some(&initial))?;
        let mut ds = vec![sim.state().max() - sim.state().min()];
        let mut t = 0;
        while t < horizon && ds[t] > threshold {
            let mut inputs = sim.draw_inputs();
            inputs.noise = contraction_noise(sim.state(), &inputs.comm_set, &inputs.inertia, eps, &params);
            let s = sim.advance(&inputs)?;
            ds.push(s.max() - s.min());
            t += 1;
        }
        match stopping_time(&DiameterSeries::new(ds)?, threshold) {
            Some(t) => times.push(t),
            None => missed += 1,
        }
    }
    times.sort_unstable();
    let summary = if times.is_empty() {
        Value::Null
    } else {
        json!({
            "min": times[0],
            "median": times[times.len() / 2],
            "max": times[times.len() - 1],
            "mean": times.iter().sum::<usize>() as f64 / times.len() as f64,
        })
    };
    let details = json!({
        "runs": runs,
        "horizon": horizon,
        "threshold": threshold,
        "a": params.a,
        "magnitude": params.magnitude,
        "delta_max": delta_max,
        "runs_hit": times.len(),
        "runs_missed": missed,
        "stopping_time": summary,
    });
    let pass = runs > 0 && missed == 0;
    let margin = times.last().map_or(-1.0, |&t| (horizon - t) as f64);
    Ok(Verdict::new(
        Check::Lemma2,
        config,
        opts,
        pass,
        margin,
        vec![opts.seed],
        details,
    ))
}

/// Replaces the noise with the heavy two-point law and checks that the tail
/// ensemble mean stays above `eps` with the confidence band.
pub fn verify_large_noise(loaded: &LoadedConfig, opts: &VerifyOptions) -> Result<Verdict> {
    let config = loaded
        .model
        .clone()
        .with_noise(large_noise_model(loaded.model.epsilon, opts.p)?)?;
    let seeds = ensemble_seeds(loaded, opts);
    let horizon = opts.horizon.unwrap_or(loaded.settings.horizon);
    let eopts = EnsembleOptions {
        initial: loaded.settings.initial.clone(),
        ..Default::default()
    };
    let stats = run_ensemble(&config, &seeds, horizon, &eopts)?.stats;
    let start = tail_start(stats.steps(), loaded.settings.tail_fraction);
    let (worst_step, worst_lower) = (start..stats.steps())
        .map(|t| (t, stats.lower(t)))
        .fold((start, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    let margin = worst_lower - config.epsilon;
    let details = json!({
        "p": opts.p,
        "atom": config.delta(),
        "epsilon": config.epsilon,
        "horizon": horizon,
        "replicas": seeds.len(),
        "window": [start, stats.steps() - 1],
        "worst_step": worst_step,
        "worst_lower": worst_lower,
    });
    Ok(Verdict::new(
        Check::LargeNoise,
        &config,
        opts,
        margin > 0.0,
        margin,
        seeds,
        details,
    ))
}

/// Monte Carlo frequency of `A(t)` on fresh uniform states against the
/// closed form.
pub fn prob_a_frequency(rule: &CommunicationRule, n: usize, steps: usize, seed: u64, replica: u64) -> f64 {
    let mut comm_rng = RngStream::new(seed, replica, Purpose::Comm);
    let mut init_rng = RngStream::new(seed, replica, Purpose::Init);
    let mut hits = 0usize;
    for _ in 0..steps {
        let values: Vec<f64> = (0..n).map(|_| init_rng.random::<f64>()).collect();
        let state = OpinionState::new(values).expect("uniform draws lie in [0, 1)");
        let comm = sample_comm_set(&mut comm_rng, rule, n);
        hits += event_a_holds(&state, &comm) as usize;
    }
    hits as f64 / steps as f64
}

pub fn verify_prob_a(loaded: &LoadedConfig, opts: &VerifyOptions) -> Result<Verdict> {
    let config = &loaded.model;
    let n = config.n;
    let steps = opts.runs.unwrap_or(100_000);
    if steps == 0 {
        return Err(Error::param("runs", "need at least one Monte Carlo step"));
    }
    let exact = prob_event_a(&config.comm, n);
    let freq = prob_a_frequency(&config.comm, n, steps, opts.seed, 0);
    let se = (exact * (1.0 - exact) / steps as f64).sqrt();
    let dev = (freq - exact).abs();
    let (pass, margin) = if se == 0.0 {
        (freq == exact, -dev)
    } else {
        (dev <= CONFIDENCE_Z * se, CONFIDENCE_Z * se - dev)
    };
    let uniform = config.comm == CommunicationRule::uniform(n);
    let details = json!({
        "n": n,
        "steps": steps,
        "exact": exact,
        "empirical": freq,
        "standard_error": se,
        "uniform_sizes": uniform,
        "closed_form_one_third": uniform.then(|| (exact - 1.0 / 3.0).abs() <= 1e-12),
    });
    Ok(Verdict::new(
        Check::ProbA,
        config,
        opts,
        pass,
        margin,
        vec![opts.seed],
        details,
    ))
}

/// Evaluates the theory constants; passes when they exist and the configured
/// noise amplitude lies below `delta_bar`.
pub fn verify_delta_bar(loaded: &LoadedConfig, opts: &VerifyOptions) -> Result<Verdict> {
    let config = &loaded.model;
    let theory = theory_constants(opts.mu, opts.lambda, config)?;
    let margin = theory.delta_bar - config.delta();
    let details = json!({
        "delta": config.delta(),
        "delta_bar": theory.delta_bar,
        "l0": theory.l0,
        "l": theory.l,
        "p_tilde": theory.p_tilde,
        "delta_within_bound": margin >= 0.0,
    });
    Ok(Verdict::new(
        Check::DeltaBar,
        config,
        opts,
        true,
        margin,
        Vec::new(),
        details,
    ))
}
