//! Error metric, fixture check, sweeps, spatial SNR maps and reports.

pub mod metric;
pub mod reports;
pub mod spatial;
pub mod sweep;

pub use metric::{error_rate, verify_appendix_file, verify_appendix_fixture, FixtureReport};
pub use reports::{emit_reports, TRIALS_HEADER};
pub use spatial::snr_spatial_map;
pub use sweep::{run_sweep, summarize, ScenarioGrid, State, SweepSummary, TrialRecord};
