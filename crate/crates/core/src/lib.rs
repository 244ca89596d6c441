//! Engine, metrics and analysis toolkit for simulated social networks whose
//! members are language-model agents (or deterministic stand-ins).

pub mod agents;
pub mod engine;
pub mod harness;
pub mod metrics;
pub mod mixing;
pub mod netgen;
pub mod opinion;
pub mod rng;
pub mod stats;
pub mod surveys;
