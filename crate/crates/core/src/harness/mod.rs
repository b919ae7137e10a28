//! Declarative experiment runner: TOML in, CSV/JSON/SVG artifacts out.

pub mod config;
pub mod plot;
pub mod runner;

pub use config::{parse_config, parse_config_str, Experiment, ExperimentConfig, Plan};
pub use plot::{emit_plot, render_plot, PlotKind};
pub use runner::{list_experiments, run_experiment, Manifest, RunOutcome, Verdict};
