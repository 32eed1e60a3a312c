//! Configuration, execution, persistence and plotting around the model.

pub mod config;
pub mod output;
pub mod run;
pub mod svg;
pub mod verify;

pub use config::{load, ConfigFile, LoadedConfig, RunSettings};
pub use output::{export_csv, read_csv, RunManifest, StagedDir, Summary};
pub use run::{
    fingerprint, run_ensemble, run_trajectory, seed_range, Ensemble, EnsembleOptions, Simulator, Snapshot, StepSummary,
    TrajectoryOptions, TrajectoryRecord,
};
pub use verify::{verify, Check, Verdict, VerifyOptions};
