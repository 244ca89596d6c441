//! Run configuration, sweeps over the design space, per-run persistence,
//! cross-run aggregation and trajectory rendering.

pub mod aggregate;
pub mod config;
pub mod population;
pub mod render;
pub mod run;

use thiserror::Error;

pub use aggregate::{aggregate, aggregate_rows, AggregateReport, RunRow, Table};
pub use config::{
    random_sweep, BackendParams, DataPaths, EngineParams, GraphParams, GraphType, Proportions, RunConfig, SweepMode,
    SweepSpace, Transport, FACTORS, STUB_BACKENDS,
};
pub use population::{prepare_run, resolve_backend, stub_lambda, PreparedRun, ENDPOINT_ENV};
pub use render::{render_svg, render_trajectories, Trajectory};
pub use run::{
    completed_run_dirs, execute, load_run_graph, load_snapshots, recompute_metrics, run_id_for, run_to_dir,
    ExecutedRun, RunRecord, RunStatus,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("data: {0}")]
    Data(String),
    #[error(transparent)]
    Engine(#[from] crate::engine::EngineError),
    #[error(transparent)]
    Netgen(#[from] crate::netgen::NetgenError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
