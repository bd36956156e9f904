//! Scenario definitions, Monte-Carlo runs, metrics and output files.

pub mod metrics;
pub mod presets;
pub mod runner;
pub mod scenario;

pub use metrics::{compute_frt, match_detections, Matching};
pub use runner::{run_scenario, write_outputs, Method, MethodSummary, RunOptions, RunReport};
pub use scenario::{Scenario, Setup, TrialScene};
