//! Experiment harness for the fracture width direct filter: configuration,
//! presets, twin experiments, sweeps and output formats.

pub mod config;
pub mod exec;
pub mod experiment;
pub mod output;

pub use config::{load_config, parse, ConfigError, ExperimentConfig};
pub use exec::RayonExecutor;
pub use experiment::{forward_only, prepare, run_prepared, run_twin, sweep, sweep_configs, SweepAxis, TwinReport};
