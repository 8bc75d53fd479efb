//! Campaign orchestration for the `fblsec` binary: configuration, the five
//! scenarios, CSV/manifest output and the summary table.

pub mod config;
pub mod output;
pub mod scenarios;
pub mod summary;

pub use config::{CampaignConfig, CampaignSettings, ConfigError, Scenario};
pub use scenarios::{run_scenario, OutageCount, ScenarioOutput, Table};
pub use summary::{emit_summary, SummaryRow};

/// Environment variable that fixes the worker count.
pub const WORKERS_ENV: &str = "FBLSEC_WORKERS";

/// Exit status for configuration problems.
pub const EXIT_CONFIG: i32 = 1;
/// Exit status for runtime failures, infeasible setups included.
pub const EXIT_RUNTIME: i32 = 2;
