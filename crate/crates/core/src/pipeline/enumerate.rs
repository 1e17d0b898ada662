use super::PipelineError;
use crate::graph::{is_valid, CellGraph, MetaGraph};
use crate::iso::canonical_key;
use std::collections::HashSet;

/// Largest cell that [`enumerate_space`] accepts.
pub const ENUMERATION_MAX_VERTICES: usize = 6;
const MAX_STATES: usize = 1 << 22;

fn valid_cells(template: &CellGraph) -> Vec<CellGraph> {
    let n = template.num_vertices();
    let slots = template.slot_count();
    let mut out = Vec::new();
    for mask in 0u32..(1 << slots) {
        let mut cell = template.clone();
        cell.clear_edges();
        for s in 0..slots {
            if mask >> s & 1 == 1 {
                let (u, v) = cell.slot_pair(s);
                cell.insert_edge(u, v).expect("slot in range");
            }
        }
        if n >= 3 && is_valid(&cell) {
            out.push(cell);
        }
    }
    out
}

/// Every valid labeled meta-graph with the shape of `template`, ordered by
/// the slot bitmask of each cell (first stage varies slowest).
pub fn enumerate_space(template: &MetaGraph) -> Result<Vec<MetaGraph>, PipelineError> {
    if let Some(c) = template
        .cells()
        .iter()
        .find(|c| c.num_vertices() > ENUMERATION_MAX_VERTICES)
    {
        return Err(PipelineError::SpaceTooLarge(format!(
            "cells with {} vertices (limit {ENUMERATION_MAX_VERTICES})",
            c.num_vertices()
        )));
    }
    let per_stage: Vec<Vec<CellGraph>> = template.cells().iter().map(valid_cells).collect();
    let total = per_stage
        .iter()
        .try_fold(1usize, |acc, v| acc.checked_mul(v.len()))
        .filter(|&t| t <= MAX_STATES)
        .ok_or_else(|| PipelineError::SpaceTooLarge("too many stage combinations".into()))?;
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; per_stage.len()];
    if total == 0 {
        return Ok(out);
    }
    loop {
        let mut meta = template.clone();
        for (k, &i) in idx.iter().enumerate() {
            meta = meta.with_cell_unchecked(k, per_stage[k][i].clone());
        }
        out.push(meta);
        let mut k = idx.len();
        loop {
            if k == 0 {
                return Ok(out);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < per_stage[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// One representative per isomorphism class, in first-seen order.
pub fn enumerate_classes(template: &MetaGraph) -> Result<Vec<MetaGraph>, PipelineError> {
    let mut seen = HashSet::new();
    Ok(enumerate_space(template)?
        .into_iter()
        .filter(|m| seen.insert(canonical_key(m)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{single_cell_template, StageConfig};

    fn template(n: usize) -> MetaGraph {
        single_cell_template(n, StageConfig::new(8, 1, 4, 4)).unwrap()
    }

    #[test]
    fn tiny_spaces() {
        assert_eq!(enumerate_space(&template(3)).unwrap().len(), 4);
        assert_eq!(enumerate_space(&template(2)).unwrap().len(), 0);
    }

    #[test]
    fn too_large() {
        assert!(matches!(
            enumerate_space(&template(7)),
            Err(PipelineError::SpaceTooLarge(_))
        ));
    }

    #[test]
    fn valid_count_matches_brute_force() {
        // count graphs where some intermediate vertex is reachable from 0
        for n in 3..=5 {
            let slots = n * (n - 1) / 2;
            let mut expected = 0;
            for mask in 0u32..(1 << slots) {
                let mut adj = vec![vec![false; n]; n];
                let mut s = 0;
                for (u, row) in adj.iter_mut().enumerate() {
                    for cell in row.iter_mut().skip(u + 1) {
                        *cell = mask >> s & 1 == 1;
                        s += 1;
                    }
                }
                let mut reach = vec![false; n];
                reach[0] = true;
                for u in 0..n - 1 {
                    if reach[u] {
                        for v in u + 1..n - 1 {
                            if adj[u][v] {
                                reach[v] = true;
                            }
                        }
                    }
                }
                if reach[1..n - 1].iter().any(|&r| r) {
                    expected += 1;
                }
            }
            assert_eq!(
                enumerate_space(&template(n)).unwrap().len(),
                expected,
                "n = {n}"
            );
        }
    }

    #[test]
    fn distinct_operators_leave_no_symmetry() {
        let t = template(5);
        assert_eq!(
            enumerate_classes(&t).unwrap().len(),
            enumerate_space(&t).unwrap().len()
        );
    }

    #[test]
    fn classes_are_fewer_than_labeled() {
        let cell = CellGraph::new(vec![crate::graph::OperatorKind::Conv1x1; 3]).unwrap();
        let t = MetaGraph::template(vec![cell], vec![StageConfig::new(8, 1, 4, 4)]);
        let all = enumerate_space(&t).unwrap();
        let classes = enumerate_classes(&t).unwrap();
        assert!(classes.len() < all.len());
        assert!(!classes.is_empty());
    }
}
