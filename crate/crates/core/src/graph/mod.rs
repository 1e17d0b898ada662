//! The dense-connectivity design space.
//!
//! A [`MetaGraph`] is an ordered list of per-stage [`CellGraph`]s. Each cell is
//! a DAG over `N` vertices: vertex `0` receives the previous cell's output,
//! vertex `N-1` concatenates the cell's leaf outputs, and every intermediate
//! vertex carries a fixed [`OperatorKind`]. Only the edge set is searched.

mod active;
mod doc;
mod dot;
mod encode;
mod preset;
mod stats;

pub use active::{active_subgraph, ActiveSubgraph};
pub use doc::{CellDoc, MetaGraphDoc, StageDoc, DOC_VERSION};
pub use dot::export_dot;
pub use encode::{decode, encode, encoding_dim};
pub use preset::{cyclic_ops, preset_space, single_cell_template, Preset};
pub use stats::{
    arch_stats, infer_channels, operator_cost, scale_to_budget, ArchStats, ChannelPlan,
    ScaledMetaGraph, VertexWidth,
};

use serde::{Deserialize, Serialize};
use std::fmt;

/// Largest supported cell size; adjacency rows are stored as `u32` masks.
pub const MAX_VERTICES: usize = 32;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("cell must have between 2 and {MAX_VERTICES} vertices, got {0}")]
    VertexCount(usize),
    #[error("vertex {vertex} out of range for a {num_vertices}-vertex cell")]
    VertexOutOfRange { vertex: usize, num_vertices: usize },
    #[error("operator list has {got} entries, expected {expected}")]
    OpCount { expected: usize, got: usize },
    #[error("edge ({0}, {1}) is not upper-triangular")]
    NotUpperTriangular(usize, usize),
    #[error("no intermediate vertex is reachable from the input vertex")]
    EmptyDerivation,
    #[error("cell {stage} is invalid: {report}")]
    InvalidCell {
        stage: usize,
        report: ValidityReport,
    },
    #[error("meta-graph has {cells} cells but {stages} stages")]
    StageCount { cells: usize, stages: usize },
    #[error("meta-graph must contain at least one stage")]
    NoStages,
    #[error("invalid stage {stage}: {reason}")]
    InvalidStage { stage: usize, reason: &'static str },
    #[error("even the minimum-width network needs {min_macs} MACs, above the {target} target")]
    BudgetTooSmall { min_macs: u64, target: u64 },
    #[error("unknown preset space {0:?}")]
    UnknownPreset(String),
    #[error("encoding has {got} entries, template expects {expected}")]
    EncodingLength { expected: usize, got: usize },
    #[error("unsupported document version {0}")]
    DocVersion(u32),
    #[error("malformed meta-graph document: {0}")]
    Document(String),
}

/// Building operator assigned to an intermediate vertex. Every operator
/// implicitly includes batch-norm and ReLU.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OperatorKind {
    #[serde(rename = "conv1x1")]
    Conv1x1,
    #[serde(rename = "dw3")]
    DwConv3,
    #[serde(rename = "dw5")]
    DwConv5,
    #[serde(rename = "dw7")]
    DwConv7,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 4] = [
        OperatorKind::Conv1x1,
        OperatorKind::DwConv3,
        OperatorKind::DwConv5,
        OperatorKind::DwConv7,
    ];

    pub fn kernel_size(self) -> u64 {
        match self {
            OperatorKind::Conv1x1 => 1,
            OperatorKind::DwConv3 => 3,
            OperatorKind::DwConv5 => 5,
            OperatorKind::DwConv7 => 7,
        }
    }

    /// Only the 1x1 convolution changes the channel count.
    pub fn is_projecting(self) -> bool {
        matches!(self, OperatorKind::Conv1x1)
    }

    pub fn name(self) -> &'static str {
        match self {
            OperatorKind::Conv1x1 => "conv1x1",
            OperatorKind::DwConv3 => "dw3",
            OperatorKind::DwConv5 => "dw5",
            OperatorKind::DwConv7 => "dw7",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One stage's DAG.
///
/// Adjacency is stored as one successor bitmask per vertex, so any ordered
/// pair (including ones that violate the upper-triangular rule) can be
/// represented and reported by [`validate`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CellGraph {
    ops: Vec<OperatorKind>,
    succ: Vec<u32>,
}

impl CellGraph {
    /// An edgeless cell with the given intermediate operators.
    pub fn new(ops: Vec<OperatorKind>) -> Result<Self, GraphError> {
        let n = ops.len() + 2;
        if n > MAX_VERTICES {
            return Err(GraphError::VertexCount(n));
        }
        Ok(CellGraph {
            ops,
            succ: vec![0; n],
        })
    }

    /// Builds a cell from an arbitrary edge list. Only endpoint ranges are
    /// checked here; ordering rules are left to [`validate`].
    pub fn with_edges<I>(ops: Vec<OperatorKind>, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut cell = CellGraph::new(ops)?;
        for (u, v) in edges {
            cell.check_vertex(u)?;
            cell.check_vertex(v)?;
            cell.succ[u] |= 1 << v;
        }
        Ok(cell)
    }

    fn check_vertex(&self, v: usize) -> Result<(), GraphError> {
        if v >= self.num_vertices() {
            return Err(GraphError::VertexOutOfRange {
                vertex: v,
                num_vertices: self.num_vertices(),
            });
        }
        Ok(())
    }

    pub fn num_vertices(&self) -> usize {
        self.succ.len()
    }

    pub fn output_vertex(&self) -> usize {
        self.num_vertices() - 1
    }

    /// Operators of the intermediate vertices `1..N-1`, in vertex order.
    pub fn ops(&self) -> &[OperatorKind] {
        &self.ops
    }

    /// Operator of vertex `v`, `None` for the input and output vertices.
    pub fn op(&self, v: usize) -> Option<OperatorKind> {
        if v == 0 || v >= self.output_vertex() {
            None
        } else {
            Some(self.ops[v - 1])
        }
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.num_vertices() && v < self.num_vertices() && self.succ[u] & (1 << v) != 0
    }

    /// Inserts `(u, v)`; returns `false` if it was already present.
    pub fn insert_edge(&mut self, u: usize, v: usize) -> Result<bool, GraphError> {
        self.check_vertex(u)?;
        self.check_vertex(v)?;
        let fresh = self.succ[u] & (1 << v) == 0;
        self.succ[u] |= 1 << v;
        Ok(fresh)
    }

    /// Removes `(u, v)`; returns `false` if it was absent.
    pub fn remove_edge(&mut self, u: usize, v: usize) -> bool {
        if !self.has_edge(u, v) {
            return false;
        }
        self.succ[u] &= !(1 << v);
        true
    }

    pub fn clear_edges(&mut self) {
        self.succ.iter_mut().for_each(|row| *row = 0);
    }

    /// Edges in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.succ
            .iter()
            .enumerate()
            .flat_map(|(u, &row)| bits(row).map(move |v| (u, v)))
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().map(|r| r.count_ones() as usize).sum()
    }

    /// Successor mask of vertex `u`.
    pub fn successors(&self, u: usize) -> u32 {
        self.succ[u]
    }

    /// Predecessor mask of vertex `v`.
    pub fn predecessors(&self, v: usize) -> u32 {
        self.succ
            .iter()
            .enumerate()
            .filter(|(_, &row)| row & (1 << v) != 0)
            .fold(0, |acc, (u, _)| acc | (1 << u))
    }

    /// Number of upper-triangular edge slots, `N(N-1)/2`.
    pub fn slot_count(&self) -> usize {
        let n = self.num_vertices();
        n * (n - 1) / 2
    }

    /// Row-major index of slot `(u, v)` with `u < v`.
    pub fn slot_index(&self, u: usize, v: usize) -> usize {
        debug_assert!(u < v && v < self.num_vertices());
        let n = self.num_vertices();
        u * (2 * n - u - 1) / 2 + (v - u - 1)
    }

    /// Inverse of [`CellGraph::slot_index`].
    pub fn slot_pair(&self, mut index: usize) -> (usize, usize) {
        let n = self.num_vertices();
        for u in 0..n - 1 {
            let row = n - u - 1;
            if index < row {
                return (u, u + 1 + index);
            }
            index -= row;
        }
        panic!("slot index out of range");
    }

    /// True when every edge satisfies `u < v`.
    pub fn is_upper_triangular(&self) -> bool {
        self.succ
            .iter()
            .enumerate()
            .all(|(u, &row)| row & lower_mask(u + 1) == 0)
    }

    /// Same vertex count and operator assignment.
    pub fn same_template(&self, other: &CellGraph) -> bool {
        self.ops == other.ops
    }

    pub(crate) fn succ_rows(&self) -> &[u32] {
        &self.succ
    }

    pub(crate) fn from_rows(ops: Vec<OperatorKind>, succ: Vec<u32>) -> Self {
        debug_assert_eq!(ops.len() + 2, succ.len());
        CellGraph { ops, succ }
    }
}

/// Iterates the set bit positions of `mask` in increasing order.
pub(crate) fn bits(mut mask: u32) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if mask == 0 {
            None
        } else {
            let b = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            Some(b)
        }
    })
}

/// Mask with bits `0..n` set.
pub(crate) fn lower_mask(n: usize) -> u32 {
    if n >= 32 {
        u32::MAX
    } else {
        (1u32 << n) - 1
    }
}

/// A single broken validity rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    TooFewVertices(usize),
    NotUpperTriangular(usize, usize),
    InputHasIncoming(usize),
    OutputHasOutgoing(usize),
    NoActiveVertex,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewVertices(n) => write!(f, "cell needs at least 3 vertices, has {n}"),
            Violation::NotUpperTriangular(u, v) => write!(f, "edge ({u}, {v}) violates u < v"),
            Violation::InputHasIncoming(u) => write!(f, "input vertex has incoming edge from {u}"),
            Violation::OutputHasOutgoing(v) => write!(f, "output vertex has outgoing edge to {v}"),
            Violation::NoActiveVertex => write!(f, "no path from input to output"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidityReport {
    pub violations: Vec<Violation>,
}

impl ValidityReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every cell invariant and lists each violated rule.
pub fn validate(cell: &CellGraph) -> ValidityReport {
    let mut violations = Vec::new();
    let n = cell.num_vertices();
    if n < 3 {
        violations.push(Violation::TooFewVertices(n));
    }
    let out = n - 1;
    for (u, v) in cell.edges() {
        if u >= v {
            violations.push(Violation::NotUpperTriangular(u, v));
        }
        if v == 0 {
            violations.push(Violation::InputHasIncoming(u));
        }
        if u == out {
            violations.push(Violation::OutputHasOutgoing(v));
        }
    }
    if n >= 3 && violations.is_empty() && active::reachable_intermediates(cell) == 0 {
        violations.push(Violation::NoActiveVertex);
    }
    ValidityReport { violations }
}

/// Fast validity test used on hot paths (mutation, sampling, enumeration).
pub fn is_valid(cell: &CellGraph) -> bool {
    cell.num_vertices() >= 3
        && cell.is_upper_triangular()
        && active::reachable_intermediates(cell) != 0
}

/// Per-stage positional settings: `repeats` copies of the cell with
/// `base_channels` channels at `height x width` resolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StageConfig {
    pub base_channels: u64,
    pub repeats: u64,
    pub height: u64,
    pub width: u64,
}

impl StageConfig {
    pub fn new(base_channels: u64, repeats: u64, height: u64, width: u64) -> Self {
        StageConfig {
            base_channels,
            repeats,
            height,
            width,
        }
    }

    fn check(&self, stage: usize) -> Result<(), GraphError> {
        let reason = if self.base_channels == 0 {
            "base channels must be at least 1"
        } else if self.repeats == 0 {
            "repeats must be at least 1"
        } else if self.height == 0 || self.width == 0 {
            "spatial dimensions must be at least 1"
        } else {
            return Ok(());
        };
        Err(GraphError::InvalidStage { stage, reason })
    }
}

/// An ordered list of valid cells, one per stage.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MetaGraph {
    cells: Vec<CellGraph>,
    stages: Vec<StageConfig>,
}

impl MetaGraph {
    pub fn new(cells: Vec<CellGraph>, stages: Vec<StageConfig>) -> Result<Self, GraphError> {
        if cells.len() != stages.len() {
            return Err(GraphError::StageCount {
                cells: cells.len(),
                stages: stages.len(),
            });
        }
        if cells.is_empty() {
            return Err(GraphError::NoStages);
        }
        for (k, stage) in stages.iter().enumerate() {
            stage.check(k)?;
        }
        for (k, cell) in cells.iter().enumerate() {
            let report = validate(cell);
            if !report.is_ok() {
                return Err(GraphError::InvalidCell { stage: k, report });
            }
        }
        Ok(MetaGraph { cells, stages })
    }

    /// A meta-graph whose cells only need to share a template; edge sets
    /// may be empty. Used for design-space templates.
    pub(crate) fn template(cells: Vec<CellGraph>, stages: Vec<StageConfig>) -> Self {
        debug_assert_eq!(cells.len(), stages.len());
        MetaGraph { cells, stages }
    }

    pub fn cells(&self) -> &[CellGraph] {
        &self.cells
    }

    pub fn stages(&self) -> &[StageConfig] {
        &self.stages
    }

    pub fn num_stages(&self) -> usize {
        self.cells.len()
    }

    /// Returns a copy with cell `k` replaced, validating the new cell.
    pub fn with_cell(&self, k: usize, cell: CellGraph) -> Result<MetaGraph, GraphError> {
        if !self.cells[k].same_template(&cell) {
            return Err(GraphError::OpCount {
                expected: self.cells[k].ops().len(),
                got: cell.ops().len(),
            });
        }
        let report = validate(&cell);
        if !report.is_ok() {
            return Err(GraphError::InvalidCell { stage: k, report });
        }
        let mut next = self.clone();
        next.cells[k] = cell;
        Ok(next)
    }

    pub(crate) fn with_cell_unchecked(&self, k: usize, cell: CellGraph) -> MetaGraph {
        let mut next = self.clone();
        next.cells[k] = cell;
        next
    }

    /// Copy with new stage configurations (same count).
    pub fn with_stages(&self, stages: Vec<StageConfig>) -> Result<MetaGraph, GraphError> {
        MetaGraph::new(self.cells.clone(), stages)
    }

    /// Same stage count, per-cell vertex counts and operator assignment.
    pub fn same_shape(&self, other: &MetaGraph) -> bool {
        self.cells.len() == other.cells.len()
            && self
                .cells
                .iter()
                .zip(&other.cells)
                .all(|(a, b)| a.same_template(b))
    }

    /// Copy of this meta-graph with every edge removed.
    pub fn empty_template(&self) -> MetaGraph {
        let cells = self
            .cells
            .iter()
            .map(|c| {
                let mut c = c.clone();
                c.clear_edges();
                c
            })
            .collect();
        MetaGraph::template(cells, self.stages.clone())
    }

    /// Canonical JSON document (edges sorted, compact).
    pub fn to_json(&self) -> String {
        serde_json::to_string(&MetaGraphDoc::from(self)).expect("meta-graph document serializes")
    }

    pub fn from_json(text: &str) -> Result<MetaGraph, GraphError> {
        let doc: MetaGraphDoc =
            serde_json::from_str(text).map_err(|e| GraphError::Document(e.to_string()))?;
        MetaGraph::try_from(doc)
    }
}
