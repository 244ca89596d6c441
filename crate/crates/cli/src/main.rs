use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use silsim_core::agents::contract::{run_contract_suite, ContractProbe};
use silsim_core::agents::{BackendServer, HealthResponse};
use silsim_core::harness::population::stub_population;
use silsim_core::harness::{
    aggregate, completed_run_dirs, execute, prepare_run, random_sweep, render_trajectories, run_id_for, run_to_dir,
    stub_lambda, RunConfig, RunStatus, SweepMode, SweepSpace, ENDPOINT_ENV,
};
use silsim_core::mixing::{solve_mix, MixProblem, MixVariant, DEFAULT_MAX_ITERS, DEFAULT_TOLERANCE};
use silsim_core::opinion::{OpinionMatrix, PopulationMix};
use silsim_core::stats::{cohens_d, empirical_ci, summarize, welch_t};
use silsim_core::surveys::{builtin_bank, parse_bank, rank_questions};

#[derive(Parser)]
#[command(name = "silsim", version, about = "Social-network simulations with pluggable language-model agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Distribution,
    Average,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Uniform,
    Quota,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single simulation.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Draw configs from a grid and execute them.
    Sweep {
        /// Grid file; the built-in seven-variable grid when omitted.
        #[arg(long)]
        space: Option<PathBuf>,
        #[arg(long, default_value_t = 595)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
    /// Build cross-run tables from a directory of runs.
    Aggregate {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, default_value = "tables")]
        out: PathBuf,
    },
    /// Rank questions by entropy of the population answer vector.
    RankQuestions {
        #[arg(long)]
        bank: Option<PathBuf>,
        /// Opinion matrices, one per model.
        #[arg(long, num_args = 1.., required = true)]
        matrices: Vec<PathBuf>,
        /// Mix weights as written by fit-proportions; uniform when omitted.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Fit model proportions to a target opinion matrix.
    FitProportions {
        #[arg(long)]
        target: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        models: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "distribution")]
        variant: Variant,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plot consensus trajectories of every completed run as SVG.
    Render {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, default_value = "trajectories.svg")]
        out: PathBuf,
    },
    /// Compare a metric across the levels of a factor in a runs CSV.
    Stats {
        #[arg(long)]
        metric: String,
        #[arg(long)]
        factor: String,
        #[arg(long)]
        input: PathBuf,
    },
    /// Serve a stub population over the agent protocol.
    ServeStub {
        #[arg(long, default_value = "stub-conformist")]
        backend: String,
        #[arg(long, default_value = "Q28")]
        question: String,
        #[arg(long, default_value_t = 64)]
        agents: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
    /// Check an agent server against the protocol contract.
    ContractTest {
        #[arg(long, env = ENDPOINT_ENV)]
        endpoint: String,
        #[arg(long, default_value_t = 30)]
        timeout_secs: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn read_matrix(path: &Path) -> Result<OpinionMatrix> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    OpinionMatrix::read_csv(text.as_bytes()).with_context(|| format!("parsing {}", path.display()))
}

fn model_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run { config, out } => {
            let text = fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let config: RunConfig = serde_json::from_str(&text).context("parsing run config")?;
            let record = run_to_dir(&config, &out)?;
            println!("{} snapshots written to {}", record.snapshots, out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { space, n, seed, parallel, mode, out } => {
            let mut space = match space {
                Some(p) => serde_json::from_str::<SweepSpace>(&fs::read_to_string(&p)?)
                    .with_context(|| format!("parsing {}", p.display()))?,
                None => SweepSpace::default_grid(),
            };
            if let Some(mode) = mode {
                space.mode = match mode {
                    Mode::Uniform => SweepMode::Uniform,
                    Mode::Quota => SweepMode::Quota,
                };
            }
            let configs = random_sweep(&space, n, seed)?;
            fs::create_dir_all(&out)?;
            let manifest: Vec<_> = configs
                .iter()
                .enumerate()
                .map(|(i, c)| json!({"run_id": run_id_for(i, c), "config": c}))
                .collect();
            fs::write(out.join("sweep.json"), serde_json::to_string_pretty(&manifest)?)?;
            let runs = execute(&configs, parallel, &out)?;
            let failed = runs.iter().filter(|r| r.record.status == RunStatus::Failed).count();
            let resumed = runs.iter().filter(|r| r.resumed).count();
            println!("{} runs, {} resumed, {} failed", runs.len(), resumed, failed);
            Ok(if failed > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
        Command::Aggregate { runs, out } => {
            let dirs = completed_run_dirs(&runs)?;
            let report = aggregate(&dirs)?;
            report.write(&out)?;
            println!("{} runs aggregated into {}", report.runs.rows.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::RankQuestions { bank, matrices, weights } => {
            let bank = match bank {
                Some(p) => parse_bank(&fs::read_to_string(&p)?)?,
                None => builtin_bank(),
            };
            let mut by_label = BTreeMap::new();
            let mut labels = Vec::new();
            for p in &matrices {
                let label = model_label(p);
                by_label.insert(label.clone(), read_matrix(p)?);
                labels.push(label);
            }
            let mix = match weights {
                Some(p) => {
                    let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(&p)?)?;
                    serde_json::from_value::<PopulationMix>(value.get("mix").cloned().unwrap_or(value))?
                }
                None => PopulationMix::uniform(labels),
            };
            for (rank, (q, h)) in rank_questions(&bank, &by_label, &mix)?.iter().enumerate() {
                println!("{}\t{}\t{h:.4}\t{}", rank + 1, q.question_id, q.text);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::FitProportions { target, models, variant, out } => {
            let problem = MixProblem {
                target: read_matrix(&target)?,
                models: models
                    .iter()
                    .map(|p| Ok((model_label(p), read_matrix(p)?)))
                    .collect::<Result<Vec<_>>>()?,
                variant: match variant {
                    Variant::Distribution => MixVariant::Distribution,
                    Variant::Average => MixVariant::Average,
                },
            };
            let solution = solve_mix(&problem, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERS)?;
            let doc = json!({
                "mix": solution.mix,
                "objective": solution.objective,
                "iterations": solution.iterations,
                "converged": solution.converged,
            });
            fs::write(&out, serde_json::to_string_pretty(&doc)? + "\n")?;
            println!("objective {:.6} after {} iterations", solution.objective, solution.iterations);
            Ok(ExitCode::SUCCESS)
        }
        Command::Render { runs, out } => {
            let dirs = completed_run_dirs(&runs)?;
            fs::write(&out, render_trajectories(&dirs)?)?;
            println!("{} trajectories drawn to {}", dirs.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Stats { metric, factor, input } => stats(&metric, &factor, &input),
        Command::ServeStub { backend, question, agents, seed, addr } => {
            let Some(lambda) = stub_lambda(&backend) else {
                bail!("{backend} is not a stub backend");
            };
            let mut config = SweepSpace::default_grid().base;
            config.backend_id = backend.clone();
            config.question_id = question;
            config.num_agents = agents;
            config.seed = seed;
            let prepared = prepare_run(&config)?;
            let stubs = stub_population(&config, lambda, &prepared.question, &prepared.profiles)?;
            let health = HealthResponse {
                model: backend,
                adapters: (0..config.num_clusters).map(|c| format!("cluster-{c}")).collect(),
            };
            let server = BackendServer::start(stubs, health, &addr)?;
            println!("serving {} stub agents on {}", agents, server.url());
            server.join();
            Ok(ExitCode::SUCCESS)
        }
        Command::ContractTest { endpoint, timeout_secs } => {
            let checks = run_contract_suite(&endpoint, &ContractProbe::default(), Duration::from_secs(timeout_secs));
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(if checks.iter().all(|c| c.passed) { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
    }
}

fn stats(metric: &str, factor: &str, input: &Path) -> Result<ExitCode> {
    let mut reader = csv::Reader::from_path(input).with_context(|| format!("reading {}", input.display()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("no column {name:?} in {}", input.display()))
    };
    let (mi, fi) = (col(metric)?, col(factor)?);
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        if let Ok(v) = record[mi].trim().parse::<f64>() {
            groups.entry(record[fi].to_string()).or_default().push(v);
        }
    }
    println!("level\tn\tmean\tsd\tci95");
    for (level, values) in &groups {
        let s = summarize(values).expect("nonempty group");
        let ci = empirical_ci(values, 0.95).expect("nonempty group");
        let sd = s.sd.map_or_else(|| "-".into(), |v| format!("{v:.4}"));
        println!("{level}\t{}\t{:.4}\t{sd}\t[{:.4}, {:.4}]", s.n, s.mean, ci.0, ci.1);
    }
    let levels: Vec<(&String, &Vec<f64>)> = groups.iter().collect();
    for i in 0..levels.len() {
        for j in i + 1..levels.len() {
            let (a, b) = (levels[i], levels[j]);
            match welch_t(a.1, b.1) {
                Some(w) => println!(
                    "{} vs {}: t={:.4} p={:.3e} d={}{}",
                    a.0,
                    b.0,
                    w.t,
                    w.p,
                    cohens_d(a.1, b.1).map_or_else(|| "-".into(), |d| format!("{d:.4}")),
                    if w.degenerate { " (degenerate)" } else { "" }
                ),
                None => println!("{} vs {}: too few observations", a.0, b.0),
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
