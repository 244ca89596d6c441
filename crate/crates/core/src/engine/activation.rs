use rand::seq::SliceRandom;
use rand::Rng;

use crate::rng::rng_from_seed;

use super::EngineError;

/// Zipfian per-agent action probabilities over a seeded rank permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSchedule {
    /// Agents in rank order (rank 1 first).
    pub ranked: Vec<usize>,
    /// Normalized weight of `ranked[i]`.
    pub weights: Vec<f64>,
    pub exponent: f64,
}

/// Weight of the rank-r agent is `r^(−s) / Σ_k k^(−s)`.
pub fn build_activation(agents: &[usize], exponent: f64, seed: u64) -> Result<ActivationSchedule, EngineError> {
    if agents.is_empty() {
        return Err(EngineError::InvalidConfig("activation needs at least one agent".into()));
    }
    if !(exponent > 0.0 && exponent.is_finite()) {
        return Err(EngineError::InvalidConfig(format!("zipf exponent {exponent} must be positive")));
    }
    let mut ranked = agents.to_vec();
    ranked.shuffle(&mut rng_from_seed(seed));
    let raw: Vec<f64> = (1..=ranked.len()).map(|r| (r as f64).powf(-exponent)).collect();
    let total: f64 = raw.iter().sum();
    Ok(ActivationSchedule {
        ranked,
        weights: raw.into_iter().map(|w| w / total).collect(),
        exponent,
    })
}

impl ActivationSchedule {
    pub fn weight_of(&self, agent: usize) -> Option<f64> {
        self.ranked.iter().position(|&a| a == agent).map(|i| self.weights[i])
    }

    /// `k` distinct agents by weighted sampling without replacement
    /// (exponential keys `ln(u)/w`, largest first). The returned order is the
    /// draw order.
    pub fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<usize> {
        let mut keyed: Vec<(f64, usize)> = self
            .ranked
            .iter()
            .zip(&self.weights)
            .map(|(&agent, &w)| {
                let u: f64 = rng.random::<f64>();
                (u.max(f64::MIN_POSITIVE).ln() / w, agent)
            })
            .collect();
        let k = k.min(keyed.len());
        keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        keyed.truncate(k);
        keyed.into_iter().map(|(_, a)| a).collect()
    }
}
