//! Configuration, snapshots and experiment drivers.

pub mod config;
pub mod experiment;
pub mod snapshot;

pub use config::{parse_config, ConfigError, ConfigIssue, ExperimentKind, RunConfig};

pub use experiment::{run_experiment, ExitCode, ExperimentError, Outcome};
pub use snapshot::{read_snapshot, write_snapshot, FieldSnapshot, SnapshotError};
