use super::PipelineError;
use crate::graph::{is_valid, CellGraph, MetaGraph};
use crate::iso::canonical_key;
use crate::rng::stream;
use rand::Rng;
use std::collections::HashSet;

/// Independent inclusion probability of each upper-triangular slot.
pub const EDGE_PROBABILITY: f64 = 0.25;
/// Redraws of an invalid cell before it is repaired.
pub const MAX_REDRAWS: usize = 64;

/// Random valid cell on `template`'s vertices and operators. Each slot is
/// included with [`EDGE_PROBABILITY`]; a cell with no path from input to
/// output is redrawn. After [`MAX_REDRAWS`] failures the edge `(0, 1)` is
/// added to the last draw, which always makes it valid.
pub fn draw_cell<R: Rng + ?Sized>(template: &CellGraph, rng: &mut R) -> CellGraph {
    let n = template.num_vertices();
    let mut cell = template.clone();
    for _ in 0..MAX_REDRAWS {
        cell.clear_edges();
        for u in 0..n {
            for v in u + 1..n {
                if rng.gen_bool(EDGE_PROBABILITY) {
                    cell.insert_edge(u, v).expect("slot in range");
                }
            }
        }
        if is_valid(&cell) {
            return cell;
        }
    }
    if n >= 3 {
        cell.insert_edge(0, 1).expect("slot in range");
    }
    cell
}

/// Random valid meta-graph with the shape of `template`.
pub fn draw_random<R: Rng + ?Sized>(template: &MetaGraph, rng: &mut R) -> MetaGraph {
    let mut meta = template.clone();
    for k in 0..template.num_stages() {
        let cell = draw_cell(&template.cells()[k], rng);
        meta = meta.with_cell_unchecked(k, cell);
    }
    meta
}

const TAG_SAMPLE: u64 = 0x7361_6d70;

/// `n` random meta-graphs from distinct isomorphism classes.
pub fn sample_random(
    template: &MetaGraph,
    n: usize,
    seed: u64,
) -> Result<Vec<MetaGraph>, PipelineError> {
    if template.cells().iter().any(|c| c.num_vertices() < 3) {
        return Err(PipelineError::SamplingExhausted {
            requested: n,
            found: 0,
        });
    }
    let mut rng = stream(&[seed, TAG_SAMPLE]);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    let max_draws = 32 * n + 1024;
    for _ in 0..max_draws {
        if out.len() == n {
            break;
        }
        let meta = draw_random(template, &mut rng);
        if seen.insert(canonical_key(&meta)) {
            out.push(meta);
        }
    }
    if out.len() < n {
        return Err(PipelineError::SamplingExhausted {
            requested: n,
            found: out.len(),
        });
    }
    Ok(out)
}
