//! Experiment configuration, orchestration and CSV output.
//!
//! Every random stream is derived from the config seed and a stable index
//! path, so sweep points and Monte Carlo trials can run in parallel and still
//! produce byte-identical files.

mod config;
mod csvout;
mod experiment;
mod plot;
mod straggler;
pub mod verify;

pub use config::{
    ComputeConfig, ExperimentConfig, FlExperimentConfig, ModelConfig, OneOrMany, RoutingConfig,
    RoutingMode, ScheduleConfig, StragglerConfig, TopologyConfig,
};
pub use csvout::{fmt_g9, write_csv};
pub use experiment::{
    compute_fl_rows, compute_rows, compute_straggler_rows, fl_routing, resolve_delta_t,
    run_experiment, run_point, run_sweep, write_results, ExperimentOutput, FlRow, ResultRow,
    StragglerRow, FL_HEADER, RESULT_HEADER, STRAGGLER_HEADER,
};
pub use plot::{compute_time_figure, write_plot_data, PlotPlan, PlotPoint, PLOT_HEADER};
pub use straggler::{simulate_straggler, straggler_probability, StragglerEstimate};
