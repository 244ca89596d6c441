use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{read_jsonl, run_simulation, write_jsonl};
use crate::metrics::{compute_report, MetricsReport, SurveySnapshot};
use crate::netgen::{read_edge_list, write_edge_list, FollowGraph};
use crate::opinion::PopulationMix;

use super::config::RunConfig;
use super::population::{prepare_run, resolve_backend};
use super::HarnessError;

pub const CONFIG_FILE: &str = "config.json";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const SURVEYS_FILE: &str = "surveys.jsonl";
pub const GRAPH_FILE: &str = "graph.txt";
pub const PLACEMENT_FILE: &str = "placement.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const FINAL_STATE_FILE: &str = "final_state.json";
/// Written last; a run directory without it is incomplete.
pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub wall_clock_secs: f64,
    pub snapshots: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mix: Option<PopulationMix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub assignment: Vec<Option<usize>>,
    pub news_node: Option<usize>,
    pub displaced_agent: Option<usize>,
}

/// `r<index>-<first 12 hex digits of SHA-256 over the config JSON>`.
pub fn run_id_for(index: usize, config: &RunConfig) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    let digest = Sha256::digest(&json);
    let hex: String = digest[..6].iter().map(|b| format!("{b:02x}")).collect();
    format!("r{index:04}-{hex}")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

/// Runs one configuration and writes every artifact into `dir`, finishing
/// with `run.json`. The run id is the directory name.
pub fn run_to_dir(config: &RunConfig, dir: &Path) -> Result<RunRecord, HarnessError> {
    let started = Instant::now();
    fs::create_dir_all(dir)?;
    write_json(&dir.join(CONFIG_FILE), config)?;
    let prepared = prepare_run(config)?;
    let mut resolved = resolve_backend(config, &prepared.question, &prepared.profiles)?;
    let output = run_simulation(
        &config.engine_config(),
        &prepared.graph,
        &prepared.profiles,
        &prepared.question,
        &prepared.news,
        resolved.backend.as_mut(),
    )?;
    drop(resolved.server.take());

    write_edge_list(&prepared.graph, BufWriter::new(File::create(dir.join(GRAPH_FILE))?))?;
    write_json(
        &dir.join(PLACEMENT_FILE),
        &Placement {
            assignment: prepared.graph.assignment.clone(),
            news_node: prepared.graph.news_node,
            displaced_agent: prepared.graph.displaced_agent,
        },
    )?;
    write_jsonl(&output.events, BufWriter::new(File::create(dir.join(EVENTS_FILE))?))?;
    write_jsonl(&output.snapshots, BufWriter::new(File::create(dir.join(SURVEYS_FILE))?))?;
    write_json(&dir.join(FINAL_STATE_FILE), &output.final_state)?;
    write_json(&dir.join(METRICS_FILE), &compute_report(&output.snapshots, &prepared.graph))?;
    let record = RunRecord {
        run_id: dir_name(dir),
        status: RunStatus::Ok,
        error: None,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        snapshots: output.snapshots.len(),
        mix: Some(prepared.mix),
    };
    write_json(&dir.join(RUN_FILE), &record)?;
    Ok(record)
}

fn dir_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Graph with its placement, as persisted in a run directory.
pub fn load_run_graph(dir: &Path) -> Result<FollowGraph, HarnessError> {
    let file = File::open(dir.join(GRAPH_FILE))?;
    let mut graph = read_edge_list(BufReader::new(file)).map_err(|e| HarnessError::Data(e.to_string()))?;
    let placement: Placement = read_json(&dir.join(PLACEMENT_FILE))?;
    if placement.assignment.len() != graph.num_nodes() {
        return Err(HarnessError::Data("placement does not match graph".into()));
    }
    graph.assignment = placement.assignment;
    graph.news_node = placement.news_node;
    graph.displaced_agent = placement.displaced_agent;
    Ok(graph)
}

pub fn load_snapshots(dir: &Path) -> Result<Vec<SurveySnapshot>, HarnessError> {
    Ok(read_jsonl(&fs::read_to_string(dir.join(SURVEYS_FILE))?)?)
}

/// Recomputes the metrics report from the persisted surveys and graph.
pub fn recompute_metrics(dir: &Path) -> Result<MetricsReport, HarnessError> {
    Ok(compute_report(&load_snapshots(dir)?, &load_run_graph(dir)?))
}

fn completed(dir: &Path) -> Option<RunRecord> {
    let record: RunRecord = read_json(&dir.join(RUN_FILE)).ok()?;
    (record.status == RunStatus::Ok).then_some(record)
}

pub struct ExecutedRun {
    pub dir: PathBuf,
    pub record: RunRecord,
    /// Skipped because an earlier execution already completed it.
    pub resumed: bool,
}

/// Runs every config in its own directory under `root` with at most
/// `parallelism` runs in flight. Completed runs are skipped; incomplete or
/// failed ones are wiped and redone. A failing run never stops the others.
pub fn execute(configs: &[RunConfig], parallelism: usize, root: &Path) -> Result<Vec<ExecutedRun>, HarnessError> {
    fs::create_dir_all(root)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
    let runs = pool.install(|| {
        configs
            .par_iter()
            .enumerate()
            .map(|(i, config)| execute_one(i, config, root))
            .collect::<Vec<_>>()
    });
    runs.into_iter().collect()
}

fn execute_one(index: usize, config: &RunConfig, root: &Path) -> Result<ExecutedRun, HarnessError> {
    let run_id = run_id_for(index, config);
    let dir = root.join(&run_id);
    if let Some(record) = completed(&dir) {
        return Ok(ExecutedRun { dir, record, resumed: true });
    }
    if dir.exists() {
        fs::remove_dir_all(&dir)?;
    }
    let started = Instant::now();
    let record = match run_to_dir(config, &dir) {
        Ok(record) => record,
        Err(e) => {
            log::error!("run {run_id} failed: {e}");
            fs::create_dir_all(&dir)?;
            let record = RunRecord {
                run_id,
                status: RunStatus::Failed,
                error: Some(e.to_string()),
                wall_clock_secs: started.elapsed().as_secs_f64(),
                snapshots: 0,
                mix: None,
            };
            write_json(&dir.join(RUN_FILE), &record)?;
            record
        }
    };
    Ok(ExecutedRun { dir, record, resumed: false })
}

/// Immediate subdirectories of `root` holding a completed run, sorted.
pub fn completed_run_dirs(root: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root)? {
        let path = entry?.path();
        if path.is_dir() && completed(&path).is_some() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}
