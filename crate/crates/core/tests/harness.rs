use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use silsim_core::harness::{
    aggregate, aggregate_rows, completed_run_dirs, execute, random_sweep, recompute_metrics, render_svg,
    render_trajectories, RunConfig, RunRow, RunStatus, SweepSpace, Trajectory,
};
use silsim_core::metrics::MetricsReport;

const ARTIFACTS: [&str; 7] = [
    "config.json",
    "graph.txt",
    "placement.json",
    "events.jsonl",
    "surveys.jsonl",
    "final_state.json",
    "metrics.json",
];

fn small_sweep(n: usize, seed: u64) -> Vec<RunConfig> {
    let mut space = SweepSpace::default_grid();
    space.num_agents = vec![32, 48];
    space.base.steps = 80;
    space.base.survey_interval = 20;
    random_sweep(&space, n, seed).unwrap()
}

#[test]
fn default_grid_has_1024_settings() {
    let space = SweepSpace::default_grid();
    assert_eq!(space.combinations(), 1024);
    let keys: BTreeSet<String> = space
        .enumerate()
        .iter()
        .map(|c| serde_json::to_string(c).unwrap())
        .collect();
    assert_eq!(keys.len(), 1024);
}

#[test]
fn uniform_sweep_splits_binary_factors_evenly() {
    let n = 4000;
    let runs = random_sweep(&SweepSpace::default_grid(), n, 99).unwrap();
    let sd = (0.25 / n as f64).sqrt();
    let frac = |f: &dyn Fn(&RunConfig) -> bool| runs.iter().filter(|c| f(c)).count() as f64 / n as f64;
    for (name, p) in [
        ("homophily", frac(&|c| c.homophily)),
        ("survey_in_context", frac(&|c| c.survey_in_context)),
        ("news_agents", frac(&|c| c.news_agents == 1)),
        ("graph_type", frac(&|c| c.graph_type == runs[0].graph_type)),
    ] {
        assert!((p - 0.5).abs() < 5.0 * sd, "{name}: {p}");
    }
    let seeds: BTreeSet<u64> = runs.iter().map(|c| c.seed).collect();
    assert_eq!(seeds.len(), n);
    assert_eq!(random_sweep(&SweepSpace::default_grid(), n, 99).unwrap(), runs);
}

fn artifacts(dir: &Path) -> Vec<Vec<u8>> {
    ARTIFACTS.iter().map(|f| fs::read(dir.join(f)).unwrap()).collect()
}

#[test]
fn parallel_and_serial_execution_agree() {
    let configs = small_sweep(6, 3);
    let tmp = tempfile::tempdir().unwrap();
    let serial = execute(&configs, 1, &tmp.path().join("serial")).unwrap();
    let parallel = execute(&configs, 4, &tmp.path().join("parallel")).unwrap();
    assert_eq!(serial.len(), 6);
    for (a, b) in serial.iter().zip(&parallel) {
        assert_eq!(a.record.status, RunStatus::Ok);
        assert_eq!(a.dir.file_name(), b.dir.file_name());
        assert_eq!(artifacts(&a.dir), artifacts(&b.dir));
    }
}

#[test]
fn interrupted_runs_are_redone_and_finished_runs_skipped() {
    let configs = small_sweep(3, 4);
    let tmp = tempfile::tempdir().unwrap();
    let first = execute(&configs, 1, tmp.path()).unwrap();
    let victim = &first[1].dir;
    let before = artifacts(victim);
    fs::remove_file(victim.join("run.json")).unwrap();
    fs::write(victim.join("stray.tmp"), b"partial").unwrap();
    fs::write(victim.join("events.jsonl"), b"{\"trunc").unwrap();

    let second = execute(&configs, 1, tmp.path()).unwrap();
    let resumed: Vec<bool> = second.iter().map(|r| r.resumed).collect();
    assert_eq!(resumed, vec![true, false, true]);
    assert!(!victim.join("stray.tmp").exists());
    assert_eq!(artifacts(victim), before);
    assert_eq!(completed_run_dirs(tmp.path()).unwrap().len(), 3);
}

#[test]
fn a_failing_run_does_not_stop_the_sweep() {
    let mut configs = small_sweep(3, 5);
    configs[0].question_id = "NOT-A-QUESTION".into();
    let tmp = tempfile::tempdir().unwrap();
    let runs = execute(&configs, 2, tmp.path()).unwrap();
    assert_eq!(runs[0].record.status, RunStatus::Failed);
    assert!(runs[0].record.error.is_some());
    assert!(runs[1..].iter().all(|r| r.record.status == RunStatus::Ok));
    let dirs = completed_run_dirs(tmp.path()).unwrap();
    assert_eq!(dirs.len(), 2);
    let report = aggregate(&[runs[0].dir.clone(), runs[1].dir.clone(), runs[2].dir.clone()]).unwrap();
    assert_eq!(report.runs.rows.len(), 2);

    // Failed runs are retried on the next execution.
    let again = execute(&configs, 1, tmp.path()).unwrap();
    assert!(!again[0].resumed);
    assert!(again[1].resumed && again[2].resumed);
}

#[test]
fn persisted_metrics_can_be_recomputed() {
    let configs = small_sweep(4, 6);
    let tmp = tempfile::tempdir().unwrap();
    for run in execute(&configs, 1, tmp.path()).unwrap() {
        let stored: MetricsReport =
            serde_json::from_str(&fs::read_to_string(run.dir.join("metrics.json")).unwrap()).unwrap();
        assert_eq!(recompute_metrics(&run.dir).unwrap(), stored);
    }
}

fn row(id: usize, factors: &[(&str, &str)], metrics: &[(&str, f64)]) -> RunRow {
    RunRow {
        run_id: format!("r{id:04}"),
        factors: factors.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        metrics: metrics.iter().map(|(k, v)| (k.to_string(), Some(*v))).collect(),
    }
}

fn cell(table: &silsim_core::harness::Table, filters: &[(&str, &str)], column: &str) -> String {
    let col = table.column(column).unwrap();
    let matches: Vec<&Vec<String>> = table
        .rows
        .iter()
        .filter(|r| filters.iter().all(|(k, v)| r[table.column(k).unwrap()] == *v))
        .collect();
    assert_eq!(matches.len(), 1, "{filters:?}");
    matches[0][col].clone()
}

#[test]
fn aggregate_recovers_planted_effects() {
    // ncc = 0.1·[backend b] + 0.2·[homophily] + 0.05·[news]·[homophily] + small noise;
    // final_consensus is additive in homophily and news.
    let mut rows = Vec::new();
    let mut id = 0;
    for backend in ["a", "b"] {
        for homophily in ["false", "true"] {
            for news in ["0", "1"] {
                for rep in 0..5 {
                    let h = (homophily == "true") as u8 as f64;
                    let n = (news == "1") as u8 as f64;
                    let b = (backend == "b") as u8 as f64;
                    let noise = (rep as f64 - 2.0) * 0.001;
                    rows.push(row(
                        id,
                        &[
                            ("backend_id", backend),
                            ("homophily", homophily),
                            ("news_agents", news),
                            ("graph_type", "random"),
                        ],
                        &[
                            ("ncc", 0.1 * b + 0.2 * h + 0.05 * n * h + noise),
                            ("final_consensus", 0.5 + 0.125 * h + 0.25 * n),
                        ],
                    ));
                    id += 1;
                }
            }
        }
    }
    let report = aggregate_rows(&rows).unwrap();

    // η² of homophily on ncc, computed by hand.
    let values: Vec<(bool, f64)> = rows
        .iter()
        .map(|r| (r.factors["homophily"] == "true", r.metrics["ncc"].unwrap()))
        .collect();
    let grand = values.iter().map(|v| v.1).sum::<f64>() / values.len() as f64;
    let mut groups: BTreeMap<bool, Vec<f64>> = BTreeMap::new();
    for (g, v) in &values {
        groups.entry(*g).or_default().push(*v);
    }
    let between: f64 = groups
        .values()
        .map(|g| {
            let m = g.iter().sum::<f64>() / g.len() as f64;
            g.len() as f64 * (m - grand).powi(2)
        })
        .sum();
    let total: f64 = values.iter().map(|v| (v.1 - grand).powi(2)).sum();
    let expected = format!("{:.6}", between / total);
    assert_eq!(cell(&report.eta_squared, &[("metric", "ncc"), ("factor", "homophily")], "eta_squared"), expected);
    assert_eq!(report.eta_ranking["ncc"][0].factor, "homophily");
    assert_eq!(report.eta_ranking["ncc"][1].factor, "backend_id");

    let ic = |metric: &str| {
        cell(
            &report.interactions,
            &[("metric", metric), ("factor_a", "homophily"), ("factor_b", "news_agents")],
            "ic",
        )
        .parse::<f64>()
        .unwrap()
    };
    assert_eq!(ic("final_consensus"), 0.0);
    assert!((ic("ncc") - 0.05).abs() < 1e-6);
    // graph_type has one level, so it gets no interaction rows.
    let graph_col = report.interactions.column("factor_a").unwrap();
    assert!(report.interactions.rows.iter().all(|r| r[graph_col] != "graph_type"));

    let tmp = tempfile::tempdir().unwrap();
    report.write(tmp.path()).unwrap();
    for name in ["runs", "eta_squared", "interactions", "crosstab", "model_summary"] {
        assert!(tmp.path().join(format!("{name}.csv")).exists());
        assert!(tmp.path().join(format!("{name}.md")).exists());
    }
}

#[test]
fn svg_vertices_land_on_scaled_coordinates() {
    let svg = render_svg(&[Trajectory { label: "a<b".into(), points: vec![(0, 0.0), (50, 1.0), (100, 0.5)] }]);
    // 640×400 canvas, 50 px margins: x = 50 + 540·s/100, y = 350 − 300·c.
    assert!(svg.contains(r#"points="50.00,350.00 320.00,50.00 590.00,200.00""#), "{svg}");
    assert!(svg.contains("<title>a&lt;b</title>"));
    assert!(svg.starts_with("<svg ") && svg.ends_with("</svg>\n"));
}

#[test]
fn rendering_depends_only_on_runs() {
    let configs = small_sweep(2, 8);
    let tmp = tempfile::tempdir().unwrap();
    let runs = execute(&configs, 1, tmp.path()).unwrap();
    let dirs: Vec<_> = runs.iter().map(|r| r.dir.clone()).collect();
    let mut reversed = dirs.clone();
    reversed.reverse();
    let svg = render_trajectories(&dirs).unwrap();
    assert_eq!(svg, render_trajectories(&reversed).unwrap());
    assert_eq!(svg.matches("<polyline").count(), 2);
}
