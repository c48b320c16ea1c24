//! Deterministic world simulation, scenarios, metrics and output files.

pub mod course;
pub mod metrics;
pub mod output;
pub mod runner;
pub mod scenario;

pub use course::{eight_path, TargetMotion, TargetTruth};
pub use metrics::{angle_jerk, compute_metrics, ExecutedTrajectories, MetricsReport, UavMetrics, UavSample, UavTrack};
pub use runner::{run, RunStatus, SimOutput, SolveAudit};
pub use scenario::{apply_override, PlannerConfig, Scenario, UavSpec, SCHEMA_VERSION};
