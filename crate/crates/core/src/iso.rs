//! Label-preserving vertex permutations, canonical forms and isomorphism
//! augmentation.
//!
//! A permutation is valid for a cell when it fixes the input and output
//! vertices, maps every intermediate vertex onto one with the same operator,
//! and keeps every edge pointing forward (`p(u) < p(v)`). Valid permutations
//! therefore correspond to operator-respecting topological relabelings, and
//! the set of cells reachable from one another is an isomorphism class whose
//! members all fit the upper-triangular encoding.

use crate::graph::{bits, encode, CellGraph, MetaGraph};
use crate::record::{ArchRecord, RecordSource};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use std::fmt;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum IsoError {
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("meta-graphs differ in stage count, vertex count or operator assignment")]
    ShapeMismatch,
}

/// A bijection on `0..N`, stored as `mapping[v] = p(v)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VertexPermutation {
    mapping: Vec<usize>,
}

impl VertexPermutation {
    pub fn identity(n: usize) -> Self {
        VertexPermutation {
            mapping: (0..n).collect(),
        }
    }

    pub fn new(mapping: Vec<usize>) -> Result<Self, IsoError> {
        let n = mapping.len();
        let mut seen = vec![false; n];
        for &target in &mapping {
            if target >= n || std::mem::replace(&mut seen[target], true) {
                return Err(IsoError::InvalidPermutation(
                    "mapping is not a bijection".into(),
                ));
            }
        }
        Ok(VertexPermutation { mapping })
    }

    /// Builds `p` from its inverse: `order[a]` is the vertex sent to `a`.
    pub(crate) fn from_order(order: &[usize]) -> Self {
        let mut mapping = vec![0; order.len()];
        for (a, &v) in order.iter().enumerate() {
            mapping[v] = a;
        }
        VertexPermutation { mapping }
    }

    pub fn apply(&self, v: usize) -> usize {
        self.mapping[v]
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.mapping
    }
}

/// Checks that `p` is a valid permutation for `cell`.
pub fn check_permutation(cell: &CellGraph, p: &VertexPermutation) -> Result<(), IsoError> {
    let n = cell.num_vertices();
    let bad = |msg: String| Err(IsoError::InvalidPermutation(msg));
    if p.len() != n {
        return bad(format!(
            "permutation has {} entries, cell has {n} vertices",
            p.len()
        ));
    }
    if p.apply(0) != 0 || p.apply(n - 1) != n - 1 {
        return bad("input and output vertices must stay fixed".into());
    }
    for v in 1..n - 1 {
        if cell.op(v) != cell.op(p.apply(v)) {
            return bad(format!(
                "vertex {v} and {} carry different operators",
                p.apply(v)
            ));
        }
    }
    for (u, v) in cell.edges() {
        if p.apply(u) >= p.apply(v) {
            return bad(format!("edge ({u}, {v}) would point backwards"));
        }
    }
    Ok(())
}

/// Relabels `cell` by `p`: edge `(u, v)` becomes `(p(u), p(v))`.
pub fn apply_permutation(cell: &CellGraph, p: &VertexPermutation) -> Result<CellGraph, IsoError> {
    check_permutation(cell, p)?;
    let edges = cell.edges().map(|(u, v)| (p.apply(u), p.apply(v)));
    Ok(
        CellGraph::with_edges(cell.ops().to_vec(), edges)
            .expect("permuted endpoints stay in range"),
    )
}

/// Packed adjacency bit string identifying an isomorphism class.
///
/// Bits are the row-major upper-triangular slots, most significant bit of
/// each byte first; a meta-graph's form concatenates its cells' forms.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalForm(Vec<u8>);

impl CanonicalForm {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    /// Lowercase hexadecimal rendering, used as a deduplication key.
    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Display for CanonicalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Up to 32 vertices gives at most 496 slots.
const WORDS: usize = 8;

/// Bit string with slot 0 in the most significant bit of word 0, so that
/// array comparison is lexicographic comparison of the bit string.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct SlotBits([u64; WORDS]);

impl SlotBits {
    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (63 - i % 64);
    }

    fn to_bytes(self, slots: usize) -> Vec<u8> {
        let mut out = vec![0u8; slots.div_ceil(8)];
        for (i, byte) in out.iter_mut().enumerate() {
            *byte = (self.0[i / 8] >> (56 - 8 * (i % 8))) as u8;
        }
        out
    }
}

/// Slot bits of `cell` relabeled so that position `a` holds `order[a]`.
fn relabeled_bits(adj: &[u32], order: &[usize]) -> SlotBits {
    let n = order.len();
    let mut out = SlotBits([0; WORDS]);
    let mut slot = 0;
    for i in 0..n {
        let row = adj[order[i]];
        for &target in &order[i + 1..] {
            if row & (1 << target) != 0 {
                out.set(slot);
            }
            slot += 1;
        }
    }
    out
}

/// Shared search context: which vertex may fill which position.
struct Orderings<'a> {
    cell: &'a CellGraph,
    n: usize,
    /// Intermediate predecessors that must be placed before each vertex.
    preds: Vec<u32>,
    /// Vertices of each position's operator group.
    group_of_position: Vec<u32>,
    /// Lowest-index twin of each vertex; twins are interchangeable.
    twin_rep: Vec<usize>,
}

impl<'a> Orderings<'a> {
    fn new(cell: &'a CellGraph) -> Self {
        let n = cell.num_vertices();
        let intermediates = crate::graph::lower_mask(n - 1) & !1;
        let preds: Vec<u32> = (0..n)
            .map(|v| cell.predecessors(v) & intermediates)
            .collect();
        let group_of_position = (0..n)
            .map(|a| match cell.op(a) {
                Some(op) => (1..n - 1)
                    .filter(|&v| cell.op(v) == Some(op))
                    .fold(0, |m, v| m | (1 << v)),
                None => 1 << a,
            })
            .collect();
        let all_preds: Vec<u32> = (0..n).map(|v| cell.predecessors(v)).collect();
        let twin_rep = (0..n)
            .map(|v| {
                (1..v)
                    .find(|&w| {
                        v < n - 1
                            && cell.op(w) == cell.op(v)
                            && all_preds[w] == all_preds[v]
                            && cell.successors(w) == cell.successors(v)
                    })
                    .unwrap_or(v)
            })
            .collect();
        Orderings {
            cell,
            n,
            preds,
            group_of_position,
            twin_rep,
        }
    }

    /// Vertices that may occupy position `a` given the `placed` set, with
    /// twins collapsed to one representative when `dedup_twins` is set.
    fn candidates(&self, a: usize, placed: u32, dedup_twins: bool) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for v in bits(self.group_of_position[a] & !placed) {
            if self.preds[v] & !placed != 0 {
                continue;
            }
            if dedup_twins && out.iter().any(|&w| self.twin_rep[w] == self.twin_rep[v]) {
                continue;
            }
            out.push(v);
        }
        out
    }
}

struct CanonSearch<'a> {
    ctx: Orderings<'a>,
    order: Vec<usize>,
    best: Option<SlotBits>,
    best_row0: u32,
    input_row: u32,
}

impl CanonSearch<'_> {
    /// Row-0 bits of the current prefix, packed so that position 1 is the
    /// most significant, compared against the incumbent's.
    fn row0_prefix(&self, upto: usize) -> u32 {
        (1..=upto).fold(0, |acc, a| {
            (acc << 1) | ((self.input_row >> self.order[a]) & 1)
        })
    }

    fn descend(&mut self, a: usize, placed: u32) {
        let n = self.ctx.n;
        if a == n - 1 {
            let bits = relabeled_bits(self.ctx.cell.succ_rows(), &self.order);
            if self.best.is_none_or(|b| bits < b) {
                self.best = Some(bits);
                self.best_row0 = self.row0_prefix(n - 2);
            }
            return;
        }
        for v in self.ctx.candidates(a, placed, true) {
            self.order[a] = v;
            if self.best.is_some() {
                let mine = self.row0_prefix(a);
                let theirs = self.best_row0 >> (n - 2 - a);
                if mine > theirs {
                    continue;
                }
            }
            self.descend(a + 1, placed | (1 << v));
        }
    }
}

/// Canonical bit string of one cell: the lexicographically smallest
/// row-major adjacency string over all valid permutations.
///
/// Positions are filled left to right with vertices whose predecessors are
/// already placed, interchangeable twins are tried once, and branches whose
/// input-row prefix already exceeds the incumbent are cut.
pub fn canonical_cell_form(cell: &CellGraph) -> CanonicalForm {
    CanonicalForm(canonical_bits(cell).to_bytes(cell.slot_count()))
}

fn canonical_bits(cell: &CellGraph) -> SlotBits {
    let n = cell.num_vertices();
    debug_assert!(cell.is_upper_triangular());
    let mut order = vec![0; n];
    order[n - 1] = n - 1;
    let mut search = CanonSearch {
        ctx: Orderings::new(cell),
        order,
        best: None,
        best_row0: 0,
        input_row: cell.successors(0),
    };
    search.descend(1, 1 | (1 << (n - 1)));
    search.best.expect("identity ordering is always valid")
}

/// Canonical form of a meta-graph: its cells' forms in stage order.
pub fn canonical_form(meta: &MetaGraph) -> CanonicalForm {
    let mut bytes = Vec::new();
    for cell in meta.cells() {
        bytes.extend(canonical_cell_form(cell).0);
    }
    CanonicalForm(bytes)
}

/// Hex key of [`canonical_form`].
pub fn canonical_key(meta: &MetaGraph) -> String {
    canonical_form(meta).to_hex()
}

/// True iff every pair of corresponding cells is isomorphic.
pub fn is_isomorphic(a: &MetaGraph, b: &MetaGraph) -> Result<bool, IsoError> {
    if !a.same_shape(b) {
        return Err(IsoError::ShapeMismatch);
    }
    Ok(a.cells()
        .iter()
        .zip(b.cells())
        .all(|(x, y)| x.edge_count() == y.edge_count() && canonical_bits(x) == canonical_bits(y)))
}

/// Node budget for one randomized ordering search.
const RANDOM_ORDER_BUDGET: usize = 4096;

/// Draws a random valid permutation for `cell` by building a random
/// operator-respecting topological order with backtracking. Falls back to
/// the identity if the node budget runs out.
pub fn random_permutation<R: Rng + ?Sized>(cell: &CellGraph, rng: &mut R) -> VertexPermutation {
    let n = cell.num_vertices();
    let ctx = Orderings::new(cell);
    let mut order = vec![0; n];
    order[n - 1] = n - 1;
    let mut budget = RANDOM_ORDER_BUDGET;
    if random_fill(&ctx, 1, 1 | (1 << (n - 1)), &mut order, rng, &mut budget) {
        VertexPermutation::from_order(&order)
    } else {
        VertexPermutation::identity(n)
    }
}

fn random_fill<R: Rng + ?Sized>(
    ctx: &Orderings<'_>,
    a: usize,
    placed: u32,
    order: &mut [usize],
    rng: &mut R,
    budget: &mut usize,
) -> bool {
    if a == ctx.n - 1 {
        return true;
    }
    if *budget == 0 {
        return false;
    }
    *budget -= 1;
    let mut cands = ctx.candidates(a, placed, false);
    cands.shuffle(rng);
    for v in cands {
        order[a] = v;
        if random_fill(ctx, a + 1, placed | (1 << v), order, rng, budget) {
            return true;
        }
    }
    false
}

/// Default number of isomorphic variants generated per measured sample.
pub const DEFAULT_AUGMENT_FACTOR: usize = 11;

/// Up to `k` distinct isomorphic variants of `meta`, each obtained by
/// permuting one randomly chosen cell. Variants are distinct from each
/// other and from `meta` under [`encode`]; fewer than `k` come back when
/// the orbit is small.
pub fn augment_meta(meta: &MetaGraph, k: usize, seed: u64) -> Vec<MetaGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashSet<Vec<u8>> = HashSet::new();
    seen.insert(encode(meta));
    let mut out = Vec::new();
    let attempts = 24 * k + 32;
    for _ in 0..attempts {
        if out.len() >= k {
            break;
        }
        let stage = rng.gen_range(0..meta.num_stages());
        let cell = &meta.cells()[stage];
        let p = random_permutation(cell, &mut rng);
        let permuted = apply_permutation(cell, &p).expect("random orderings are valid");
        let variant = meta.with_cell_unchecked(stage, permuted);
        if seen.insert(encode(&variant)) {
            out.push(variant);
        }
    }
    out
}

/// Isomorphic copies of a record, all carrying its performance value.
pub fn augment(record: &ArchRecord, k: usize, seed: u64) -> Vec<ArchRecord> {
    augment_meta(&record.meta, k, seed)
        .into_iter()
        .map(|meta| ArchRecord {
            meta,
            perf: record.perf,
            source: RecordSource::Augmented,
            canon: record.canon.clone(),
            seed: record.seed,
        })
        .collect()
}
