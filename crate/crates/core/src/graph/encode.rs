use super::{CellGraph, GraphError, MetaGraph};

/// Length of [`encode`]'s output for this meta-graph's template.
pub fn encoding_dim(meta: &MetaGraph) -> usize {
    meta.cells().iter().map(CellGraph::slot_count).sum()
}

/// Row-major upper-triangular adjacency bits of every cell, stage by stage.
pub fn encode(meta: &MetaGraph) -> Vec<u8> {
    let mut out = Vec::with_capacity(encoding_dim(meta));
    for cell in meta.cells() {
        encode_cell_into(cell, &mut out);
    }
    out
}

pub(crate) fn encode_cell_into(cell: &CellGraph, out: &mut Vec<u8>) {
    let n = cell.num_vertices();
    for u in 0..n {
        let row = cell.successors(u);
        for v in u + 1..n {
            out.push(((row >> v) & 1) as u8);
        }
    }
}

/// Rebuilds a meta-graph from `template`'s stages and operators and an
/// encoded edge set. The result is validated.
pub fn decode(template: &MetaGraph, bits: &[u8]) -> Result<MetaGraph, GraphError> {
    let expected = encoding_dim(template);
    if bits.len() != expected {
        return Err(GraphError::EncodingLength {
            expected,
            got: bits.len(),
        });
    }
    let mut offset = 0;
    let mut cells = Vec::with_capacity(template.num_stages());
    for cell in template.cells() {
        let n = cell.num_vertices();
        let mut next = CellGraph::new(cell.ops().to_vec())?;
        for u in 0..n {
            for v in u + 1..n {
                if bits[offset] != 0 {
                    next.insert_edge(u, v)?;
                }
                offset += 1;
            }
        }
        cells.push(next);
    }
    MetaGraph::new(cells, template.stages().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::preset_space;
    use proptest::prelude::*;

    #[test]
    fn imagenet_dimension() {
        let meta = preset_space("imagenet").unwrap();
        assert_eq!(encoding_dim(&meta), 612);
        let bits = encode(&meta);
        assert_eq!(bits.len(), 612);
        assert!(bits.iter().all(|&b| b == 0));
    }

    #[test]
    fn first_slot_is_input_to_vertex_one() {
        let template = preset_space("cifar10").unwrap();
        let mut bits = vec![0u8; encoding_dim(&template)];
        bits[0] = 1;
        let offset = template.cells()[0].slot_count();
        bits[offset] = 1;
        bits[2 * offset] = 1;
        let meta = decode(&template, &bits).unwrap();
        assert!(meta.cells()[0].has_edge(0, 1));
        let enc = encode(&meta);
        assert_eq!(enc[..offset].iter().filter(|&&b| b == 1).count(), 1);
        assert_eq!(enc[0], 1);
    }

    #[test]
    fn wrong_length_rejected() {
        let template = preset_space("cifar10").unwrap();
        assert!(matches!(
            decode(&template, &[1, 0]),
            Err(GraphError::EncodingLength { .. })
        ));
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(raw in proptest::collection::vec(0u8..2, 3 * 153)) {
            let template = preset_space("cifar10").unwrap();
            if let Ok(meta) = decode(&template, &raw) {
                prop_assert_eq!(encode(&meta), raw);
            }
        }
    }
}
