//! Analysis statistics: Welch's t with a normal-approximation p-value,
//! Cohen's d, one-way η², the 2×2 interaction contrast and percentile
//! intervals.

use serde::Serialize;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with the n−1 denominator.
fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WelchResult {
    pub t: f64,
    pub p: f64,
    /// Both samples have zero variance but different means.
    pub degenerate: bool,
}

/// Welch's t; the two-sided p uses the normal approximation
/// `2·(1 − Φ(|t|))`. `None` if either sample has fewer than two values.
pub fn welch_t(a: &[f64], b: &[f64]) -> Option<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let diff = mean(a) - mean(b);
    let se2 = variance(a) / a.len() as f64 + variance(b) / b.len() as f64;
    if se2 == 0.0 {
        return Some(if diff == 0.0 {
            WelchResult { t: 0.0, p: 1.0, degenerate: false }
        } else {
            WelchResult {
                t: diff.signum() * f64::INFINITY,
                p: 0.0,
                degenerate: true,
            }
        });
    }
    let t = diff / se2.sqrt();
    Some(WelchResult {
        t,
        p: libm::erfc(t.abs() / std::f64::consts::SQRT_2),
        degenerate: false,
    })
}

/// Cohen's d with the pooled standard deviation. `None` for samples under
/// two values or zero pooled variance.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = ((na - 1.0) * variance(a) + (nb - 1.0) * variance(b)) / (na + nb - 2.0);
    let diff = mean(a) - mean(b);
    if pooled == 0.0 {
        return (diff == 0.0).then_some(0.0);
    }
    Some(diff / pooled.sqrt())
}

/// One-way `SS_between / SS_total`; `None` when the total sum of squares is 0.
pub fn eta_squared<G: AsRef<[f64]>>(groups: &[G]) -> Option<f64> {
    let all: Vec<f64> = groups.iter().flat_map(|g| g.as_ref().iter().copied()).collect();
    if all.is_empty() {
        return None;
    }
    let grand = mean(&all);
    let ss_total: f64 = all.iter().map(|v| (v - grand) * (v - grand)).sum();
    if ss_total == 0.0 {
        return None;
    }
    let ss_between: f64 = groups
        .iter()
        .map(AsRef::as_ref)
        .filter(|g| !g.is_empty())
        .map(|g| g.len() as f64 * (mean(g) - grand).powi(2))
        .sum();
    Some((ss_between / ss_total).clamp(0.0, 1.0))
}

/// `(μ₁₁ − μ₁₀) − (μ₀₁ − μ₀₀)`, with `cells[i][j]` the mean at factor A = i,
/// factor B = j.
pub fn interaction_contrast(cells: [[f64; 2]; 2]) -> f64 {
    (cells[1][1] - cells[1][0]) - (cells[0][1] - cells[0][0])
}

/// Linear-interpolation percentile (`q` in [0, 1]) of an unsorted sample.
pub fn percentile(sample: &[f64], q: f64) -> Option<f64> {
    if sample.is_empty() {
        return None;
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Percentile interval at `(1−level)/2` and `1 − (1−level)/2`.
pub fn empirical_ci(sample: &[f64], level: f64) -> Option<(f64, f64)> {
    if sample.len() == 1 {
        log::warn!("confidence interval from a single observation");
    }
    let tail = (1.0 - level) / 2.0;
    Some((percentile(sample, tail)?, percentile(sample, 1.0 - tail)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: Option<f64>,
}

pub fn summarize(x: &[f64]) -> Option<Summary> {
    if x.is_empty() {
        return None;
    }
    Some(Summary {
        n: x.len(),
        mean: mean(x),
        sd: (x.len() >= 2).then(|| variance(x).sqrt()),
    })
}
