//! Cross-run tables: per-factor group statistics with pairwise Welch tests,
//! single-factor η², per-backend crosstabs and 2×2 interaction contrasts.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use crate::metrics::{MetricsReport, SCALAR_METRICS};
use crate::stats::{cohens_d, empirical_ci, eta_squared, interaction_contrast, summarize, welch_t};

use super::config::{RunConfig, FACTORS};
use super::run::{read_json, RunRecord, RunStatus, CONFIG_FILE, METRICS_FILE, RUN_FILE};
use super::HarnessError;

/// One completed run flattened to factor levels and scalar metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub run_id: String,
    pub factors: BTreeMap<String, String>,
    pub metrics: BTreeMap<String, Option<f64>>,
}

impl RunRow {
    pub fn new(run_id: String, config: &RunConfig, report: &MetricsReport) -> Self {
        let factors = config
            .factors()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let mut metrics: BTreeMap<String, Option<f64>> = SCALAR_METRICS
            .iter()
            .map(|m| (m.to_string(), report.scalar(m)))
            .collect();
        if report.bert_accuracy.is_some() {
            metrics.insert("bert_accuracy".into(), report.bert_accuracy);
        }
        RunRow { run_id, factors, metrics }
    }

    fn value(&self, metric: &str) -> Option<f64> {
        self.metrics.get(metric).copied().flatten()
    }
}

/// Reads `config.json`, `metrics.json` and `run.json` from each directory;
/// directories whose run did not complete are skipped.
pub fn load_rows(run_dirs: &[PathBuf]) -> Result<Vec<RunRow>, HarnessError> {
    let mut rows = Vec::new();
    for dir in run_dirs {
        let record: RunRecord = match read_json(&dir.join(RUN_FILE)) {
            Ok(r) => r,
            Err(_) => continue,
        };
        if record.status != RunStatus::Ok {
            continue;
        }
        let config: RunConfig = read_json(&dir.join(CONFIG_FILE))?;
        let report: MetricsReport = read_json(&dir.join(METRICS_FILE))?;
        rows.push(RunRow::new(record.run_id, &config, &report));
    }
    rows.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    Ok(rows)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(headers: &[&str]) -> Self {
        Table {
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> Result<String, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Data(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("| {} |\n", self.headers.join(" | "));
        out.push_str(&format!("|{}\n", "---|".repeat(self.headers.len())));
        for row in &self.rows {
            out.push_str(&format!("| {} |\n", row.join(" | ")));
        }
        out
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }
}

fn fmt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:.6}"))
}

fn significance(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        "ns"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EtaEntry {
    pub metric: String,
    pub factor: String,
    pub eta_squared: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AggregateReport {
    pub runs: Table,
    pub factor_levels: Table,
    pub factor_tests: Table,
    pub eta_squared: Table,
    pub eta_summary: Table,
    pub model_summary: Table,
    pub crosstab: Table,
    pub interactions: Table,
    /// Per metric, factors ordered by descending η² (undefined last).
    pub eta_ranking: BTreeMap<String, Vec<EtaEntry>>,
}

fn metric_names(rows: &[RunRow]) -> Vec<String> {
    let mut names: Vec<String> = SCALAR_METRICS.iter().map(|s| s.to_string()).collect();
    if rows.iter().any(|r| r.metrics.contains_key("bert_accuracy")) {
        names.push("bert_accuracy".into());
    }
    names
}

/// Factor level → metric values of runs at that level, levels sorted.
fn grouped(rows: &[RunRow], factor: &str, metric: &str) -> BTreeMap<String, Vec<f64>> {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in rows {
        if let (Some(level), Some(v)) = (r.factors.get(factor), r.value(metric)) {
            groups.entry(level.clone()).or_default().push(v);
        }
    }
    groups
}

fn levels(rows: &[RunRow], factor: &str) -> Vec<String> {
    rows.iter()
        .filter_map(|r| r.factors.get(factor).cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Backend factor used for crosstabs.
pub const MODEL_FACTOR: &str = "backend_id";
/// Binary design factors whose pairs get interaction contrasts.
pub const INTERACTION_FACTORS: [&str; 4] = ["graph_type", "homophily", "survey_in_context", "news_agents"];

pub fn aggregate_rows(rows: &[RunRow]) -> Result<AggregateReport, HarnessError> {
    let metrics = metric_names(rows);
    let mut report = AggregateReport::default();

    let mut headers: Vec<&str> = vec!["run_id"];
    headers.extend(FACTORS);
    headers.extend(metrics.iter().map(String::as_str));
    report.runs = Table::new(&headers);
    for r in rows {
        let mut line = vec![r.run_id.clone()];
        line.extend(FACTORS.iter().map(|f| r.factors.get(*f).cloned().unwrap_or_default()));
        line.extend(metrics.iter().map(|m| fmt(r.value(m))));
        report.runs.rows.push(line);
    }

    report.factor_levels = Table::new(&["metric", "factor", "level", "n", "mean", "sd", "ci95_lo", "ci95_hi"]);
    report.factor_tests = Table::new(&[
        "metric", "factor", "level_a", "level_b", "n_a", "n_b", "mean_a", "mean_b", "t", "p", "sig", "cohens_d",
        "degenerate",
    ]);
    report.eta_squared = Table::new(&["metric", "factor", "eta_squared", "rank"]);
    report.eta_summary = Table::new(&["metric", "dominant", "dominant_eta_squared", "secondary", "secondary_eta_squared"]);

    for metric in &metrics {
        let mut ranking = Vec::new();
        for factor in FACTORS {
            let groups = grouped(rows, factor, metric);
            for (level, values) in &groups {
                let s = summarize(values).expect("group is nonempty");
                let ci = empirical_ci(values, 0.95);
                report.factor_levels.rows.push(vec![
                    metric.clone(),
                    factor.to_string(),
                    level.clone(),
                    s.n.to_string(),
                    fmt(Some(s.mean)),
                    fmt(s.sd),
                    fmt(ci.map(|c| c.0)),
                    fmt(ci.map(|c| c.1)),
                ]);
            }
            let entries: Vec<(&String, &Vec<f64>)> = groups.iter().collect();
            if entries.len() < 2 {
                let (level, values) = entries
                    .first()
                    .map_or((String::new(), 0), |(l, v)| ((*l).clone(), v.len()));
                report.factor_tests.rows.push(vec![
                    metric.clone(),
                    factor.to_string(),
                    level,
                    String::new(),
                    values.to_string(),
                    "0".into(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    "true".into(),
                ]);
            }
            for i in 0..entries.len() {
                for j in i + 1..entries.len() {
                    let (la, a) = entries[i];
                    let (lb, b) = entries[j];
                    let w = welch_t(a, b);
                    let degenerate = w.is_none_or(|w| w.degenerate);
                    report.factor_tests.rows.push(vec![
                        metric.clone(),
                        factor.to_string(),
                        la.clone(),
                        lb.clone(),
                        a.len().to_string(),
                        b.len().to_string(),
                        fmt(summarize(a).map(|s| s.mean)),
                        fmt(summarize(b).map(|s| s.mean)),
                        fmt(w.map(|w| w.t)),
                        fmt(w.map(|w| w.p)),
                        w.map_or_else(String::new, |w| significance(w.p).to_string()),
                        fmt(cohens_d(a, b)),
                        degenerate.to_string(),
                    ]);
                }
            }
            let values: Vec<Vec<f64>> = groups.into_values().collect();
            ranking.push(EtaEntry {
                metric: metric.clone(),
                factor: factor.to_string(),
                eta_squared: if values.len() < 2 { None } else { eta_squared(&values) },
            });
        }
        ranking.sort_by(|a, b| match (a.eta_squared, b.eta_squared) {
            (Some(x), Some(y)) => y.total_cmp(&x).then_with(|| a.factor.cmp(&b.factor)),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => a.factor.cmp(&b.factor),
        });
        for (rank, e) in ranking.iter().enumerate() {
            report.eta_squared.rows.push(vec![
                metric.clone(),
                e.factor.clone(),
                fmt(e.eta_squared),
                (rank + 1).to_string(),
            ]);
        }
        let top = |i: usize| ranking.get(i).filter(|e| e.eta_squared.is_some());
        report.eta_summary.rows.push(vec![
            metric.clone(),
            top(0).map_or_else(String::new, |e| e.factor.clone()),
            fmt(top(0).and_then(|e| e.eta_squared)),
            top(1).map_or_else(String::new, |e| e.factor.clone()),
            fmt(top(1).and_then(|e| e.eta_squared)),
        ]);
        report.eta_ranking.insert(metric.clone(), ranking);
    }

    report.model_summary = Table::new(&[
        MODEL_FACTOR,
        "n",
        "initial_consensus",
        "ncc_mean",
        "ncc_sd",
        "share_ncc_negative",
    ]);
    for model in levels(rows, MODEL_FACTOR) {
        let at: Vec<&RunRow> = rows
            .iter()
            .filter(|r| r.factors.get(MODEL_FACTOR) == Some(&model))
            .collect();
        let init: Vec<f64> = at.iter().filter_map(|r| r.value("initial_consensus")).collect();
        let ncc: Vec<f64> = at.iter().filter_map(|r| r.value("ncc")).collect();
        let s = summarize(&ncc);
        let negative = (!ncc.is_empty()).then(|| ncc.iter().filter(|v| **v < 0.0).count() as f64 / ncc.len() as f64);
        report.model_summary.rows.push(vec![
            model,
            at.len().to_string(),
            fmt(summarize(&init).map(|s| s.mean)),
            fmt(s.as_ref().map(|s| s.mean)),
            fmt(s.and_then(|s| s.sd)),
            fmt(negative),
        ]);
    }

    report.crosstab = Table::new(&[
        "metric", MODEL_FACTOR, "factor", "level_a", "mean_a", "n_a", "level_b", "mean_b", "n_b", "p", "sig",
    ]);
    for metric in &metrics {
        for model in levels(rows, MODEL_FACTOR) {
            let subset: Vec<RunRow> = rows
                .iter()
                .filter(|r| r.factors.get(MODEL_FACTOR) == Some(&model))
                .cloned()
                .collect();
            for factor in FACTORS.iter().filter(|f| **f != MODEL_FACTOR) {
                let groups = grouped(&subset, factor, metric);
                let entries: Vec<(&String, &Vec<f64>)> = groups.iter().collect();
                for i in 0..entries.len() {
                    for j in i + 1..entries.len() {
                        let (la, a) = entries[i];
                        let (lb, b) = entries[j];
                        let w = welch_t(a, b);
                        report.crosstab.rows.push(vec![
                            metric.clone(),
                            model.clone(),
                            factor.to_string(),
                            la.clone(),
                            fmt(summarize(a).map(|s| s.mean)),
                            a.len().to_string(),
                            lb.clone(),
                            fmt(summarize(b).map(|s| s.mean)),
                            b.len().to_string(),
                            fmt(w.map(|w| w.p)),
                            w.map_or_else(String::new, |w| significance(w.p).to_string()),
                        ]);
                    }
                }
            }
        }
    }

    report.interactions = Table::new(&[
        "metric", "factor_a", "factor_b", "a0", "a1", "b0", "b1", "mean_00", "mean_01", "mean_10", "mean_11", "ic",
        "se", "ic_over_se",
    ]);
    for metric in &metrics {
        for (i, fa) in INTERACTION_FACTORS.iter().enumerate() {
            for fb in &INTERACTION_FACTORS[i + 1..] {
                if let Some(row) = interaction_row(rows, metric, fa, fb) {
                    report.interactions.rows.push(row);
                }
            }
        }
    }
    Ok(report)
}

fn interaction_row(rows: &[RunRow], metric: &str, fa: &str, fb: &str) -> Option<Vec<String>> {
    let la = levels(rows, fa);
    let lb = levels(rows, fb);
    if la.len() != 2 || lb.len() != 2 {
        return None;
    }
    let mut cells: [[Vec<f64>; 2]; 2] = Default::default();
    for r in rows {
        let (Some(a), Some(b), Some(v)) = (r.factors.get(fa), r.factors.get(fb), r.value(metric)) else {
            continue;
        };
        let i = la.iter().position(|l| l == a)?;
        let j = lb.iter().position(|l| l == b)?;
        cells[i][j].push(v);
    }
    let mean = |c: &Vec<f64>| summarize(c).map(|s| s.mean);
    let means = [
        [mean(&cells[0][0]), mean(&cells[0][1])],
        [mean(&cells[1][0]), mean(&cells[1][1])],
    ];
    let ic = match means {
        [[Some(a), Some(b)], [Some(c), Some(d)]] => Some(interaction_contrast([[a, b], [c, d]])),
        _ => None,
    };
    let se = cells
        .iter()
        .flatten()
        .map(|c| summarize(c).and_then(|s| s.sd).map(|sd| sd * sd / c.len() as f64))
        .sum::<Option<f64>>()
        .map(f64::sqrt);
    let ratio = match (ic, se) {
        (Some(ic), Some(se)) if se > 0.0 => Some(ic / se),
        _ => None,
    };
    Some(vec![
        metric.to_string(),
        fa.to_string(),
        fb.to_string(),
        la[0].clone(),
        la[1].clone(),
        lb[0].clone(),
        lb[1].clone(),
        fmt(means[0][0]),
        fmt(means[0][1]),
        fmt(means[1][0]),
        fmt(means[1][1]),
        fmt(ic),
        fmt(se),
        fmt(ratio),
    ])
}

pub fn aggregate(run_dirs: &[PathBuf]) -> Result<AggregateReport, HarnessError> {
    aggregate_rows(&load_rows(run_dirs)?)
}

impl AggregateReport {
    fn tables(&self) -> [(&'static str, &Table); 8] {
        [
            ("runs", &self.runs),
            ("factor_levels", &self.factor_levels),
            ("factor_tests", &self.factor_tests),
            ("eta_squared", &self.eta_squared),
            ("eta_summary", &self.eta_summary),
            ("model_summary", &self.model_summary),
            ("crosstab", &self.crosstab),
            ("interactions", &self.interactions),
        ]
    }

    /// Writes `<name>.csv` and `<name>.md` for every table into `out`.
    pub fn write(&self, out: &Path) -> Result<(), HarnessError> {
        fs::create_dir_all(out)?;
        for (name, table) in self.tables() {
            fs::write(out.join(format!("{name}.csv")), table.to_csv()?)?;
            fs::write(out.join(format!("{name}.md")), table.to_markdown())?;
        }
        Ok(())
    }
}
