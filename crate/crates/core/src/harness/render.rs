//! Consensus-over-time plots as plain SVG. Output bytes depend only on the
//! input runs.

use std::fmt::Write;
use std::path::PathBuf;

use crate::metrics::consensus;

use super::run::load_snapshots;
use super::HarnessError;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// A run's consensus trajectory: (step, consensus) per snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub label: String,
    pub points: Vec<(u64, f64)>,
}

pub fn load_trajectory(dir: &std::path::Path) -> Result<Trajectory, HarnessError> {
    let points = load_snapshots(dir)?
        .iter()
        .filter_map(|s| consensus(s).map(|c| (s.step, c)))
        .collect();
    let label = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Trajectory { label, points })
}

/// Consensus in [0, 1] against step, one polyline per trajectory.
pub fn render_svg(trajectories: &[Trajectory]) -> String {
    let max_step = trajectories
        .iter()
        .flat_map(|t| t.points.iter().map(|p| p.0))
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let x = |step: u64| MARGIN + plot_w * step as f64 / max_step;
    let y = |c: f64| HEIGHT - MARGIN - plot_h * c;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<g stroke="black" stroke-width="1"><line x1="{MARGIN}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{b}"/></g>"#,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    for tick in 0..=4 {
        let c = tick as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{c:.2}</text>"#,
            MARGIN - 6.0,
            y(c) + 3.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">step (0 to {})</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0,
        max_step as u64
    );
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 15 {:.2})">consensus</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (i, t) in trajectories.iter().enumerate() {
        let points: Vec<String> = t
            .points
            .iter()
            .map(|&(s, c)| format!("{:.2},{:.2}", x(s), y(c)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#,
            PALETTE[i % PALETTE.len()],
            points.join(" "),
            escape(&t.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render_trajectories(run_dirs: &[PathBuf]) -> Result<String, HarnessError> {
    let mut dirs = run_dirs.to_vec();
    dirs.sort();
    let trajectories = dirs
        .iter()
        .map(|d| load_trajectory(d))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(render_svg(&trajectories))
}
