//! Scenario loading, closed-loop episodes for every planner mode, metrics and
//! the benchmark suite behind the `icf-bench` command.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod dump;
pub mod episode;
mod error;
pub mod mode;
pub mod record;
pub mod scenario;

pub use episode::run_episode;
pub use error::{Result, SimError};
pub use mode::{parse_modes, PlannerMode};
pub use record::{compute_metrics, EpisodeStatus, Metrics, RunRecord, StepLog};
pub use scenario::{load_scenario, parse_scenario, ScenarioSpec};
