use crate::graph::MetaGraph;
use crate::iso::canonical_key;
use serde::{Deserialize, Serialize};

/// Where a performance value came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordSource {
    Measured,
    Augmented,
    Predicted,
}

/// A meta-graph with its performance value and provenance.
///
/// `canon` is the hex canonical key of the measured source; augmented
/// copies share it (and the performance) with the record they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct ArchRecord {
    pub meta: MetaGraph,
    pub perf: f64,
    pub source: RecordSource,
    pub canon: String,
    pub seed: u64,
}

impl ArchRecord {
    pub fn measured(meta: MetaGraph, perf: f64, seed: u64) -> Self {
        let canon = canonical_key(&meta);
        ArchRecord {
            meta,
            perf,
            source: RecordSource::Measured,
            canon,
            seed,
        }
    }
}
