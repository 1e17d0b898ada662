use super::{CellGraph, GraphError, MetaGraph, OperatorKind, StageConfig};
use serde::{Deserialize, Serialize};

pub const DOC_VERSION: u32 = 1;

/// Serialized form of a [`MetaGraph`]. Field order and sorted edges make
/// the compact rendering canonical.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaGraphDoc {
    pub version: u32,
    pub stages: Vec<StageDoc>,
    pub cells: Vec<CellDoc>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageDoc {
    pub base_channels: u64,
    pub repeats: u64,
    pub height: u64,
    pub width: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellDoc {
    pub num_vertices: usize,
    pub ops: Vec<OperatorKind>,
    pub edges: Vec<[usize; 2]>,
}

impl From<&MetaGraph> for MetaGraphDoc {
    fn from(meta: &MetaGraph) -> Self {
        MetaGraphDoc {
            version: DOC_VERSION,
            stages: meta
                .stages()
                .iter()
                .map(|s| StageDoc {
                    base_channels: s.base_channels,
                    repeats: s.repeats,
                    height: s.height,
                    width: s.width,
                })
                .collect(),
            cells: meta
                .cells()
                .iter()
                .map(|c| CellDoc {
                    num_vertices: c.num_vertices(),
                    ops: c.ops().to_vec(),
                    edges: c.edges().map(|(u, v)| [u, v]).collect(),
                })
                .collect(),
        }
    }
}

impl TryFrom<MetaGraphDoc> for MetaGraph {
    type Error = GraphError;

    fn try_from(doc: MetaGraphDoc) -> Result<Self, Self::Error> {
        if doc.version != DOC_VERSION {
            return Err(GraphError::DocVersion(doc.version));
        }
        let mut cells = Vec::with_capacity(doc.cells.len());
        for c in doc.cells {
            if c.num_vertices < 2 || c.ops.len() + 2 != c.num_vertices {
                return Err(GraphError::OpCount {
                    expected: c.num_vertices.saturating_sub(2),
                    got: c.ops.len(),
                });
            }
            cells.push(CellGraph::with_edges(
                c.ops,
                c.edges.into_iter().map(|[u, v]| (u, v)),
            )?);
        }
        let stages = doc
            .stages
            .into_iter()
            .map(|s| StageConfig::new(s.base_channels, s.repeats, s.height, s.width))
            .collect();
        MetaGraph::new(cells, stages)
    }
}
