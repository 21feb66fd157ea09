//! Parameter sweeps over road model, fleet size, CBR load, radio range and
//! seed, with figure-ready CSV output.

mod config;
mod sweep;

pub use config::{parse_config, parse_config_with_preset, ConfigError, ExperimentSpec, Preset};
pub use sweep::{
    aggregate, execute_sweep, run_experiment, select_flows, write_outputs, AggregateRow,
    ExperimentError, ExperimentOutcome, Figures, RunRow, RESULTS_HEADER,
};
