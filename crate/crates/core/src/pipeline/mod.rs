//! Sampling, enumeration, oracles, dataset assembly and the on-disk record
//! store.

mod dataset;
mod enumerate;
mod oracle;
mod sampling;
mod store;

pub use dataset::{build_dataset, split_by_class, BuiltDataset, ClassSplit, TEST_FRACTION};
pub use enumerate::{enumerate_classes, enumerate_space, ENUMERATION_MAX_VERTICES};
pub use oracle::{
    make_oracle, Budget, ExternalOracle, ExternalSettings, OracleSpec, PredictorOracle, SyntheticA,
    SyntheticB, DEFAULT_EXTERNAL_TIMEOUT,
};
pub use sampling::{draw_cell, draw_random, sample_random, EDGE_PROBABILITY, MAX_REDRAWS};
pub use store::{append_records, load_records, write_records};

use crate::graph::GraphError;
use crate::predictor::PredictorError;
use crate::search::OracleError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("found only {found} of {requested} distinct architectures")]
    SamplingExhausted { requested: usize, found: usize },
    #[error("space too large to enumerate: {0}")]
    SpaceTooLarge(String),
    #[error("store line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("train/test leak: class {0} on both sides")]
    Leak(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error("{0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
