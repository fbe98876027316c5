//! Configuration-driven experiment runner: dictionary training, Monte-Carlo
//! sweeps, CSV tables and plot scripts.

pub mod config;
pub mod experiment;
pub mod table;

pub use config::{DictParams, ExperimentConfig, GeometryKind, Metric, Sweep};
pub use experiment::{
    load_dictionaries, repr_compare, run_experiment, run_experiment_with, run_trials, train_dictionaries,
    train_dictionaries_in_memory, Dictionaries, TrainingReport, TrialOutcome,
};
pub use table::{ResultRow, ResultTable, CSV_HEADER};
