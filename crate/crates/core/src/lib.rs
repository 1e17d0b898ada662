//! Dense-connectivity neural architecture search.
//!
//! Candidate CNNs are meta-graphs of per-stage DAGs ([`graph`]). Sampled
//! architecture/performance pairs are multiplied by isomorphic relabeling
//! ([`iso`]) to train an MLP surrogate ([`predictor`]), which then drives
//! Metropolis-Hastings evolutionary search ([`search`]). [`mcmc`] checks the
//! Metropolis chain against its exact stationary distribution on spaces
//! small enough to enumerate, and [`pipeline`] ties the pieces together for
//! the command-line tool.

pub mod graph;
pub mod iso;
pub mod mcmc;
pub mod pipeline;
pub mod predictor;
pub mod record;
pub mod rng;
pub mod search;

pub use graph::{
    arch_stats, encode, preset_space, validate, ArchStats, CellGraph, GraphError, MetaGraph,
    OperatorKind, StageConfig,
};
pub use iso::{canonical_form, canonical_key, is_isomorphic, CanonicalForm, VertexPermutation};
pub use predictor::{PredictorModel, TrainConfig};
pub use record::{ArchRecord, RecordSource};
pub use search::{run_search, SearchConfig, SearchTrace, Strategy};
