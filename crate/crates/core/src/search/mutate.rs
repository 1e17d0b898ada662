use crate::graph::{is_valid, CellGraph, MetaGraph};
use rand::Rng;

/// The three edge moves of the mutation space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MutationKind {
    /// Remove one present edge, then add one different absent edge.
    ResampleEdge,
    AddEdge,
    RemoveEdge,
}

impl MutationKind {
    pub const ALL: [MutationKind; 3] = [
        MutationKind::ResampleEdge,
        MutationKind::AddEdge,
        MutationKind::RemoveEdge,
    ];
}

/// Draws after the first failed attempt.
pub const MUTATION_RETRIES: usize = 16;

/// Outcome of one mutation: the child, and the move that produced it
/// (`None` when every attempt failed and the parent was copied).
#[derive(Clone, Debug, PartialEq)]
pub struct Mutation {
    pub meta: MetaGraph,
    pub applied: Option<(usize, MutationKind)>,
}

fn slots_where(cell: &CellGraph, present: bool) -> Vec<(usize, usize)> {
    let n = cell.num_vertices();
    let mut out = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if cell.has_edge(u, v) == present {
                out.push((u, v));
            }
        }
    }
    out
}

fn try_apply<R: Rng + ?Sized>(cell: &mut CellGraph, kind: MutationKind, rng: &mut R) -> bool {
    match kind {
        MutationKind::AddEdge => {
            let absent = slots_where(cell, false);
            if absent.is_empty() {
                return false;
            }
            let (u, v) = absent[rng.gen_range(0..absent.len())];
            cell.insert_edge(u, v).expect("slot in range");
        }
        MutationKind::RemoveEdge => {
            let present = slots_where(cell, true);
            if present.is_empty() {
                return false;
            }
            let (u, v) = present[rng.gen_range(0..present.len())];
            cell.remove_edge(u, v);
        }
        MutationKind::ResampleEdge => {
            let present = slots_where(cell, true);
            let absent = slots_where(cell, false);
            if present.is_empty() || absent.is_empty() {
                return false;
            }
            let (u, v) = present[rng.gen_range(0..present.len())];
            let (a, b) = absent[rng.gen_range(0..absent.len())];
            cell.remove_edge(u, v);
            cell.insert_edge(a, b).expect("slot in range");
        }
    }
    true
}

/// Applies one random edge move to one random cell. Moves that are
/// impossible (nothing to add or remove) or that leave the cell invalid are
/// redrawn up to [`MUTATION_RETRIES`] times before the parent is returned
/// unchanged.
pub fn mutate_detailed<R: Rng + ?Sized>(meta: &MetaGraph, rng: &mut R) -> Mutation {
    for _ in 0..=MUTATION_RETRIES {
        let k = rng.gen_range(0..meta.num_stages());
        let kind = MutationKind::ALL[rng.gen_range(0..3)];
        let mut cell = meta.cells()[k].clone();
        if try_apply(&mut cell, kind, rng) && is_valid(&cell) {
            return Mutation {
                meta: meta.with_cell_unchecked(k, cell),
                applied: Some((k, kind)),
            };
        }
    }
    Mutation {
        meta: meta.clone(),
        applied: None,
    }
}

pub fn mutate<R: Rng + ?Sized>(meta: &MetaGraph, rng: &mut R) -> MetaGraph {
    mutate_detailed(meta, rng).meta
}
