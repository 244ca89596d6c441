//! Population proportions: fitting a convex combination of model opinion
//! matrices to a human target, and apportioning agents to clusters.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::opinion::{OpinionMatrix, PopulationMix};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 50_000;

#[derive(Debug, Error, PartialEq)]
pub enum MixError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixVariant {
    /// Match the full human answer distribution.
    Distribution,
    /// Match only the modal human answer of every question.
    Average,
}

#[derive(Debug, Clone)]
pub struct MixProblem {
    pub target: OpinionMatrix,
    /// Labelled model matrices; labels become the mix labels.
    pub models: Vec<(String, OpinionMatrix)>,
    pub variant: MixVariant,
}

#[derive(Debug, Clone)]
pub struct MixSolution {
    pub mix: PopulationMix,
    /// Frobenius norm of the residual at the returned weights.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at the start and after every accepted iterate.
    pub history: Vec<f64>,
}

/// One-hot at each row's argmax, lowest column on ties.
pub fn average_target(target: &OpinionMatrix) -> OpinionMatrix {
    let k = target.num_options();
    let mut data = vec![0.0; target.as_slice().len()];
    for i in 0..target.num_questions() {
        let row = target.row_at(i);
        let mut best = 0;
        for j in 1..k {
            if row[j] > row[best] {
                best = j;
            }
        }
        if k > 0 {
            data[i * k + best] = 1.0;
        }
    }
    target.with_data(data)
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (i as f64 + 1.0);
        if u - t > 0.0 {
            theta = t;
        }
    }
    let mut w: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    // Clean up rounding so the result sits on the simplex to machine precision.
    let sum: f64 = w.iter().sum();
    if sum > 0.0 {
        w.iter_mut().for_each(|x| *x /= sum);
    }
    w
}

fn residual_norm(target: &[f64], models: &[&[f64]], w: &[f64], residual: &mut [f64]) -> f64 {
    residual.copy_from_slice(target);
    for (m, &wl) in models.iter().zip(w) {
        if wl != 0.0 {
            for (r, x) in residual.iter_mut().zip(m.iter()) {
                *r -= wl * x;
            }
        }
    }
    residual.iter().map(|r| r * r).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest eigenvalue of the Gram matrix by power iteration.
fn gram_spectral_radius(models: &[&[f64]]) -> f64 {
    let m = models.len();
    let gram: Vec<Vec<f64>> = models
        .iter()
        .map(|a| models.iter().map(|b| dot(a, b)).collect())
        .collect();
    let trace: f64 = (0..m).map(|i| gram[i][i]).sum();
    let mut v = vec![1.0 / (m as f64).sqrt(); m];
    let mut lambda = 0.0;
    for _ in 0..500 {
        let next: Vec<f64> = gram.iter().map(|row| dot(row, &v)).collect();
        let norm = dot(&next, &next).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let estimate = dot(&v, &next);
        v = next.into_iter().map(|x| x / norm).collect();
        if (estimate - lambda).abs() <= 1e-12 * estimate.abs() {
            lambda = estimate;
            break;
        }
        lambda = estimate;
    }
    // Power iteration approaches from below; the trace bounds from above.
    (lambda * 1.05).min(trace)
}

/// Frobenius objective of `weights` against the problem's target.
pub fn mix_objective(problem: &MixProblem, weights: &[f64]) -> f64 {
    let target = match problem.variant {
        MixVariant::Distribution => problem.target.clone(),
        MixVariant::Average => average_target(&problem.target),
    };
    let models: Vec<&[f64]> = problem.models.iter().map(|(_, m)| m.as_slice()).collect();
    let mut residual = vec![0.0; target.as_slice().len()];
    residual_norm(target.as_slice(), &models, weights, &mut residual)
}

/// Minimizes `‖T − Σ w_ℓ M_ℓ‖_F` over the simplex by projected gradient
/// descent with step `1/L`, starting from uniform weights. Stops when an
/// iteration improves the objective by less than `tol`.
pub fn solve_mix(problem: &MixProblem, tol: f64, max_iters: usize) -> Result<MixSolution, MixError> {
    if problem.models.is_empty() {
        return Err(MixError::InvalidInput("need at least one model".into()));
    }
    for (label, m) in &problem.models {
        if !m.same_shape(&problem.target) {
            return Err(MixError::InvalidInput(format!(
                "model {label} does not match the target's shape"
            )));
        }
    }
    let target = match problem.variant {
        MixVariant::Distribution => problem.target.clone(),
        MixVariant::Average => average_target(&problem.target),
    };
    let target = target.as_slice();
    let models: Vec<&[f64]> = problem.models.iter().map(|(_, m)| m.as_slice()).collect();
    let m = models.len();

    // Gradient of ‖r‖² is −2 Mᵀr, Lipschitz with constant 2·λmax(MᵀM).
    let lipschitz = 2.0 * gram_spectral_radius(&models);
    let step = if lipschitz > 0.0 { 1.0 / lipschitz } else { 0.0 };

    let mut w = vec![1.0 / m as f64; m];
    let mut residual = vec![0.0; target.len()];
    let mut objective = residual_norm(target, &models, &w, &mut residual);
    let mut history = vec![objective];
    let mut trial_residual = vec![0.0; target.len()];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iters {
        iterations += 1;
        let shifted: Vec<f64> = models
            .iter()
            .zip(&w)
            .map(|(ml, wl)| wl + step * 2.0 * dot(ml, &residual))
            .collect();
        let candidate = project_simplex(&shifted);
        let next = residual_norm(target, &models, &candidate, &mut trial_residual);
        if next > objective {
            // Only rounding can get here; the current iterate is as good as it gets.
            converged = true;
            break;
        }
        let improvement = objective - next;
        w = candidate;
        objective = next;
        std::mem::swap(&mut residual, &mut trial_residual);
        history.push(objective);
        if improvement < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("mix solver hit {max_iters} iterations without converging");
    }

    let labels = problem.models.iter().map(|(l, _)| l.clone()).collect();
    Ok(MixSolution {
        mix: PopulationMix {
            labels,
            weights: w,
        },
        objective,
        iterations,
        converged,
        history,
    })
}

/// Largest-remainder apportionment of `n` agents proportional to `weights`.
/// Leftover seats go to the largest fractional parts, lowest index first on
/// ties; zero-weight entries never receive agents.
pub fn allocate_population(weights: &[f64], n: usize) -> Result<Vec<usize>, MixError> {
    let total: f64 = weights.iter().sum();
    if weights.is_empty() || !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(MixError::InvalidInput(
            "weights must be nonnegative with a positive sum".into(),
        ));
    }
    let quotas: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut leftover = n.saturating_sub(assigned);
    for &i in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        counts[i] += 1;
        leftover -= 1;
    }
    Ok(counts)
}

/// [`allocate_population`] keyed by a mix's labels.
pub fn allocate_mix(mix: &PopulationMix, n: usize) -> Result<Vec<(String, usize)>, MixError> {
    let counts = allocate_population(&mix.weights, n)?;
    Ok(mix.labels.iter().cloned().zip(counts).collect())
}
