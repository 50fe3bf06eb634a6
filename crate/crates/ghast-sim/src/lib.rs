//! Round-based simulator for GHAST: honest nodes with local Tree-Graphs,
//! pluggable adversaries with bounded delivery delay, event logs for the
//! analysis oracle, observer metrics, and the scenario runner behind the
//! `ghast` command.

pub mod adversary;
pub mod config;
pub mod events;
pub mod metrics;
pub mod report;
pub mod scenario;
pub mod world;

use std::path::Path;

use ghast_core::confirm::ConfirmError;
use ghast_core::oracle::OracleError;
use ghast_core::{BlockId, GraphError, Ix};

pub use config::{AdversaryKind, ConfigError, Mode, RawConfig, ScenarioConfig, SimConfig};
pub use events::Event;
pub use metrics::{Aggregates, BlockRecord, MetricsRecord};
pub use scenario::{run_scenario, RunOutput};
pub use world::{Adversary, World};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0} oracle invariant violation(s)")]
    InvariantViolation(u64),
    #[error("delivery of {block} requested for round {requested}, deadline is round {deadline}")]
    DeadlineViolation { block: BlockId, requested: u64, deadline: u64 },
    #[error("horizon of {0} rounds exceeded")]
    HorizonExceeded(u64),
    #[error("block {block} missing at node {node} in round {round} after its deadline")]
    Admissibility { block: BlockId, node: usize, round: u64 },
    #[error("unknown block index {0}")]
    UnknownBlock(Ix),
    #[error("unknown honest node {0}")]
    UnknownNode(usize),
    #[error("invalid mining plan: {0}")]
    BadPlan(&'static str),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Confirm(#[from] ConfirmError),
    #[error("output encoding: {0}")]
    Encode(String),
}

impl SimError {
    pub fn io(path: &Path, source: std::io::Error) -> SimError {
        SimError::Io { path: path.display().to_string(), source }
    }

    /// Process exit status for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::InvariantViolation(_) => 2,
            SimError::Config(_) => 3,
            SimError::Io { .. } => 4,
            _ => 1,
        }
    }
}
