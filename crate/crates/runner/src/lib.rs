//! Experiment configuration, orchestration and result files for the zsense
//! simulator.

pub mod config;
pub mod experiment;
pub mod io;
pub mod report;

pub use config::{load_config, parse_config, ExperimentConfig, Task};
pub use experiment::{run_experiment, Payload, ResultSet, Row, RowStatus};
pub use report::{report, ReportKind};
