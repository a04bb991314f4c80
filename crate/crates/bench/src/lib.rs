//! Benchmark corpus, reference posteriors and the run harness behind the
//! `adlmh` command line.

pub mod corpus;
pub mod harness;
pub mod reference;
pub mod tables;

use adlmh_core::diagnostics::MetricError;
use adlmh_core::equilibrium::EquilibriumError;
use adlmh_core::lmh::InferenceError;
use adlmh_core::Value;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use corpus::Corpus;
pub use harness::{run_benchmark, Algorithm, BenchConfig, RunReport};
pub use reference::{reference_posterior, ReferenceBudget, ReferenceSet};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

impl BenchError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            _ => 3,
        }
    }
}

/// Random stream of one restart: the seed picks the key, the restart index
/// the stream.
pub fn restart_rng(seed: u64, restart: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart);
    rng
}

/// Program output as numbers, with booleans as 0 and 1.
pub fn numeric_output(z: &[Value]) -> Result<Vec<f64>, BenchError> {
    z.iter()
        .map(|v| match v {
            Value::Num(x) => Ok(*x),
            Value::Bool(b) => Ok(f64::from(u8::from(*b))),
            other => Err(BenchError::Runtime(format!("non-numeric output {other}"))),
        })
        .collect()
}
