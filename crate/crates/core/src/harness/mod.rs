//! Config ingestion, sweeps over environments, mechanisms and effort costs,
//! and result files.

mod config;
mod generate;
mod report;
mod run;
pub mod verify;

pub use config::{
    load_config, parse_config, resolve_environments, validate_config, EnvironmentEntry,
    ExperimentConfig, NamedEnvironment, Sweeps,
};
pub use generate::{generate_environments, GeneratorSpec};
pub use report::{
    emit_report, load_rows, plot_series, render, render_csv, OutputFormat, PlotPoint, PlotSeries,
};
pub use run::{
    run_experiment, run_experiment_streaming, theorem3_violations, triple_seed, Probe, ResultRow,
    Violation,
};

/// The bundled example: E1 with the ten reference mechanisms.
pub const BUNDLED_E1_CONFIG: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../../configs/e1.json"
));
