//! Few-shot text anomaly detection via meta-learning.
//!
//! The toolkit meta-trains a small hashed-n-gram MLP encoder over multiple
//! text domains using episodic training — Prototypical Networks and
//! first-order MAML — with a cross-domain episode sampling strategy that
//! mixes one domain's normals with another domain's anomalies. It ships
//! with non-meta baselines (a one-class kNN-distance detector and a
//! supervised fine-tuned classifier), ranking metrics, and seeded
//! experiment runners.
//!
//! Modules follow the pipeline: [`corpus`] loads and splits labeled text,
//! [`features`] hashes character n-grams into sparse vectors, [`encoder`]
//! holds the trainable network and optimizers, [`episodes`] samples
//! meta-training tasks, [`protonet`] and [`maml`] are the meta-learners,
//! [`baselines`] the reference methods, [`metrics`] the evaluation, and
//! [`run`] wires everything into CLI commands.

pub mod baselines;
pub mod checkpoint;
pub mod corpus;
pub mod encoder;
pub mod episodes;
pub mod features;
pub mod maml;
pub mod metrics;
pub mod protonet;
pub mod run;

use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    /// Usage or configuration problem; maps to exit code 2 in the CLI.
    #[error("{0}")]
    Config(String),
    /// Bad or insufficient data (missing class, empty dataset, bad row).
    #[error("{0}")]
    Data(String),
    /// Checkpoint container is malformed or has an unsupported version.
    #[error("checkpoint format error: {0}")]
    Format(String),
    /// Tensor or feature dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// A loss, gradient, or parameter became NaN/inf.
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv { path: path.into(), source }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Derives an independent sub-seed from a base seed and a salt
/// (splitmix64 finalizer), so that e.g. parameter init and episode
/// sampling consume unrelated random streams.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
