//! Noisy bounded-confidence opinion dynamics where a random subset of agents
//! updates each step.
//!
//! [`model::step`] applies one update to pre-sampled inputs;
//! [`harness::run_trajectory`] and [`harness::run_ensemble`] draw those
//! inputs from seeded streams. [`metrics`] and [`protocols`] hold the
//! diameter statistics, theory constants and the adversarial noise
//! constructions used by `bcsync verify`.

pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod presets;
pub mod protocols;
pub mod rules;

pub use error::{Error, Result};
pub use metrics::{
    diameter, ensemble_mean_diameter, event_a_holds, extremal_agents, prob_event_a, quasi_sync_im_check, stopping_time,
    theory_constants, DiameterSeries, EnsembleStats, ImVerdict, TheoryConstants,
};
pub use model::{step, CommSet, ModelConfig, OpinionState, StepInputs};
pub use presets::{dw_preset, general_preset, hk_preset, PresetName};
pub use protocols::{contraction_noise, divergence_noise, forced_a_sampler, large_noise_model, ProtocolParams};
pub use rules::{CommunicationRule, InertiaPolicy, NoiseModel, Purpose, RngStream};
