//! Scene files, benchmark campaigns and the subcommands behind the `scc`
//! binary.

use std::path::{Path, PathBuf};

use scc_core::metrics::MetricsError;
use scc_core::occupancy::OccupancyError;
use scc_core::planner::PlanError;
use scc_core::velocity::VelocityError;
use thiserror::Error;

pub mod bench;
pub mod commands;
pub mod scene;

pub use bench::{run_benchmark, BenchmarkOutput, Method, RunRecord, RunStatus, SummaryRow};
pub use scene::{BenchmarkSpec, Scene, SweepKind};

pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const INVALID_INPUT: i32 = 3;
    pub const UNSAFE_START: i32 = 10;
    pub const UNSAFE_GOAL: i32 = 11;
    pub const NO_PATH: i32 = 12;
    pub const STALL: i32 = 13;
    pub const VALIDATION_FAILED: i32 = 14;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid value for `{field}`: {msg}")]
    Invalid { field: String, msg: String },
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<CliError>,
    },
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Velocity(#[from] VelocityError),
    #[error(transparent)]
    Occupancy(#[from] OccupancyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("violation fraction {fraction:.5} exceeds threshold {threshold}")]
    ValidationFailed { fraction: f64, threshold: f64 },
    #[error("csv: {0}")]
    Csv(String),
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            msg: e.to_string(),
        }
    }

    pub fn in_file(self, path: &Path) -> Self {
        match self {
            e @ (CliError::Io { .. } | CliError::InFile { .. }) => e,
            e => CliError::InFile {
                path: path.to_path_buf(),
                source: Box::new(e),
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::InFile { source, .. } => source.exit_code(),
            CliError::Parse(_) | CliError::Invalid { .. } | CliError::Occupancy(_) | CliError::Metrics(_) => {
                exit::INVALID_INPUT
            }
            CliError::Plan(PlanError::UnsafeStart) => exit::UNSAFE_START,
            CliError::Plan(PlanError::UnsafeGoal) => exit::UNSAFE_GOAL,
            CliError::Plan(PlanError::NoPathFound { .. }) => exit::NO_PATH,
            CliError::Plan(_) => exit::INVALID_INPUT,
            CliError::Velocity(VelocityError::Stall { .. }) => exit::STALL,
            CliError::Velocity(_) => exit::FAILURE,
            CliError::ValidationFailed { .. } => exit::VALIDATION_FAILED,
            CliError::Io { .. } | CliError::Csv(_) => exit::FAILURE,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Csv(e.to_string())
    }
}
