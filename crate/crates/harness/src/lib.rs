//! Verification harness: scenario runner, metrics, safety oracle, and the
//! brute-force decision oracle used by the test suites.

pub mod cli;
pub mod metrics;
pub mod oracle;
pub mod safety;
pub mod sweep;

pub use cli::{apply_overrides, run_scenario, Cli, RunArgs, RunOutcome};
pub use metrics::{LatencyStats, Metrics};
pub use oracle::brute_force_decide;
pub use safety::{check_safety, OracleVerdict, Violation};
pub use sweep::{run_all, sweep_scenario, sweep_scenarios};
