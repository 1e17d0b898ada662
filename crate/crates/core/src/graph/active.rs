use super::{bits, CellGraph, GraphError};

/// Intermediate vertices reachable from the input vertex, as a bitmask.
pub(crate) fn reachable_intermediates(cell: &CellGraph) -> u32 {
    let n = cell.num_vertices();
    if n < 3 {
        return 0;
    }
    let intermediates = super::lower_mask(n - 1) & !1;
    let rows = cell.succ_rows();
    let mut reached = rows[0] & intermediates;
    let mut frontier = reached;
    while frontier != 0 {
        let mut next = 0;
        for u in bits(frontier) {
            next |= rows[u];
        }
        next &= intermediates & !reached;
        reached |= next;
        frontier = next;
    }
    reached
}

/// The part of a cell that actually computes something.
///
/// `active` holds the intermediate vertices reachable from vertex 0.
/// `feeders` holds the active vertices whose output reaches the output
/// vertex: leaves (no edge into another active vertex) plus any active
/// vertex with an explicit edge to the output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActiveSubgraph {
    pub cell: CellGraph,
    pub active: u32,
    pub feeders: u32,
}

impl ActiveSubgraph {
    pub fn active_vertices(&self) -> impl Iterator<Item = usize> {
        bits(self.active)
    }

    pub fn feeder_vertices(&self) -> impl Iterator<Item = usize> {
        bits(self.feeders)
    }

    pub fn is_active(&self, v: usize) -> bool {
        self.active & (1 << v) != 0
    }

    pub fn active_count(&self) -> usize {
        self.active.count_ones() as usize
    }
}

/// Prunes intermediate vertices that the input never reaches and drops
/// every edge touching them.
pub fn active_subgraph(cell: &CellGraph) -> Result<ActiveSubgraph, GraphError> {
    if let Some((u, v)) = cell.edges().find(|&(u, v)| u >= v) {
        return Err(GraphError::NotUpperTriangular(u, v));
    }
    let active = reachable_intermediates(cell);
    if active == 0 {
        return Err(GraphError::EmptyDerivation);
    }
    let out = cell.output_vertex();
    let keep = active | 1 | (1 << out);
    let rows = cell
        .succ_rows()
        .iter()
        .enumerate()
        .map(|(u, &row)| if keep & (1 << u) != 0 { row & keep } else { 0 })
        .collect();
    let pruned = CellGraph::from_rows(cell.ops().to_vec(), rows);
    let feeders = bits(active)
        .filter(|&v| {
            let row = pruned.successors(v);
            row & active == 0 || row & (1 << out) != 0
        })
        .fold(0, |acc, v| acc | (1 << v));
    Ok(ActiveSubgraph {
        cell: pruned,
        active,
        feeders,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::OperatorKind::*;

    fn cell(n: usize, edges: &[(usize, usize)]) -> CellGraph {
        CellGraph::with_edges(vec![Conv1x1; n - 2], edges.iter().copied()).unwrap()
    }

    #[test]
    fn both_branches_active() {
        let sub = active_subgraph(&cell(4, &[(0, 1), (1, 3), (0, 2)])).unwrap();
        assert_eq!(sub.active_vertices().collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(sub.feeder_vertices().collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn unreachable_vertex_pruned() {
        let sub = active_subgraph(&cell(4, &[(0, 1), (2, 3)])).unwrap();
        assert_eq!(sub.active_vertices().collect::<Vec<_>>(), vec![1]);
        assert!(!sub.cell.has_edge(2, 3));
        assert_eq!(sub.cell.edge_count(), 1);
    }

    #[test]
    fn no_input_edge_is_empty_derivation() {
        assert_eq!(
            active_subgraph(&cell(3, &[(1, 2)])),
            Err(GraphError::EmptyDerivation)
        );
    }

    #[test]
    fn inner_vertex_is_not_a_leaf() {
        // 0 -> 1 -> 2, vertex 1 feeds 2 only, so only 2 reaches the output.
        let sub = active_subgraph(&cell(4, &[(0, 1), (1, 2)])).unwrap();
        assert_eq!(sub.feeder_vertices().collect::<Vec<_>>(), vec![2]);
    }

    #[test]
    fn edge_from_pruned_vertex_dropped() {
        // Vertex 1 is unreachable, so its edge into 2 is dropped.
        let sub = active_subgraph(&cell(5, &[(0, 2), (1, 2)])).unwrap();
        assert_eq!(sub.active_vertices().collect::<Vec<_>>(), vec![2]);
        assert!(!sub.cell.has_edge(1, 2));
        assert_eq!(sub.feeder_vertices().collect::<Vec<_>>(), vec![2]);
    }
}
