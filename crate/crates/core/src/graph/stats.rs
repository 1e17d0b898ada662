use super::{active_subgraph, GraphError, MetaGraph, StageConfig};
use super::{bits, CellGraph, OperatorKind};

/// Channel widths entering and leaving one vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VertexWidth {
    pub input: u64,
    pub output: u64,
}

/// Per-vertex widths of one cell. Entry `v` is `None` for pruned vertices
/// and for the output vertex, whose width is `output_width`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChannelPlan {
    pub widths: Vec<Option<VertexWidth>>,
    pub output_width: u64,
}

/// Propagates channel counts through the active subgraph.
///
/// Inputs are concatenated, so a vertex's input width is the sum of its
/// active predecessors' output widths. A 1x1 convolution projects to the
/// stage's base width; depthwise operators keep their input width.
pub fn infer_channels(
    cell: &CellGraph,
    stage: &StageConfig,
    input_width: u64,
) -> Result<ChannelPlan, GraphError> {
    let sub = active_subgraph(cell)?;
    let n = cell.num_vertices();
    let mut widths: Vec<Option<VertexWidth>> = vec![None; n];
    widths[0] = Some(VertexWidth {
        input: input_width,
        output: input_width,
    });
    for v in sub.active_vertices() {
        let preds = sub.cell.predecessors(v);
        let input: u64 = bits(preds)
            .map(|u| widths[u].expect("predecessor precedes vertex").output)
            .sum();
        let op = cell.op(v).expect("active vertex is intermediate");
        let output = if op.is_projecting() {
            stage.base_channels
        } else {
            input
        };
        widths[v] = Some(VertexWidth { input, output });
    }
    let output_width = sub
        .feeder_vertices()
        .map(|v| widths[v].expect("feeder is active").output)
        .sum();
    Ok(ChannelPlan {
        widths,
        output_width,
    })
}

/// Compute and parameter totals for the searched cells.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ArchStats {
    pub macs: u64,
    pub params: u64,
    pub active_vertices: Vec<usize>,
}

/// `(macs, params)` of one operator at `hw` output pixels. Batch-norm adds
/// two parameters per output channel; its MACs are ignored.
pub fn operator_cost(op: OperatorKind, width: VertexWidth, hw: u64) -> (u64, u64) {
    if op.is_projecting() {
        (
            hw * width.input * width.output,
            width.input * width.output + 2 * width.output,
        )
    } else {
        let k2 = op.kernel_size() * op.kernel_size();
        (hw * width.input * k2, width.input * k2 + 2 * width.input)
    }
}

/// MAC and parameter counts of every active operator, multiplied by the
/// stage repeat count. Each cell copy takes a `base_channels`-wide input;
/// stem, transition and head blocks are not counted.
pub fn arch_stats(meta: &MetaGraph) -> Result<ArchStats, GraphError> {
    let mut stats = ArchStats::default();
    for (cell, stage) in meta.cells().iter().zip(meta.stages()) {
        let plan = infer_channels(cell, stage, stage.base_channels)?;
        let hw = stage.height * stage.width;
        let (mut macs, mut params, mut active) = (0u64, 0u64, 0usize);
        for (v, width) in plan.widths.iter().enumerate().skip(1) {
            let Some(w) = width else { continue };
            let op = cell.op(v).expect("active vertex is intermediate");
            let (m, p) = operator_cost(op, *w, hw);
            macs += m;
            params += p;
            active += 1;
        }
        stats.macs += macs * stage.repeats;
        stats.params += params * stage.repeats;
        stats.active_vertices.push(active);
    }
    Ok(stats)
}

/// A width-scaled meta-graph and the multiplier that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledMetaGraph {
    pub multiplier: f64,
    pub meta: MetaGraph,
    pub stats: ArchStats,
}

/// Multipliers are searched on a grid of this many steps per unit.
const MULTIPLIER_STEPS: u64 = 256;

fn scaled_channels(base: u64, step: u64) -> u64 {
    // round(base * step / STEPS / 8) * 8, half rounding up, floored at 8
    let eighths = (base * step + 4 * MULTIPLIER_STEPS) / (8 * MULTIPLIER_STEPS);
    (eighths * 8).max(8)
}

fn scale_at(meta: &MetaGraph, step: u64) -> Result<(MetaGraph, ArchStats), GraphError> {
    let stages = meta
        .stages()
        .iter()
        .map(|s| StageConfig {
            base_channels: scaled_channels(s.base_channels, step),
            ..*s
        })
        .collect();
    let scaled = meta.with_stages(stages)?;
    let stats = arch_stats(&scaled)?;
    Ok((scaled, stats))
}

/// Largest uniform width multiplier (on a 1/256 grid) whose rounded stage
/// widths keep the searched cells within `target_macs`.
pub fn scale_to_budget(meta: &MetaGraph, target_macs: u64) -> Result<ScaledMetaGraph, GraphError> {
    let (mut best_meta, mut best_stats) = scale_at(meta, 1)?;
    if best_stats.macs > target_macs {
        return Err(GraphError::BudgetTooSmall {
            min_macs: best_stats.macs,
            target: target_macs,
        });
    }
    let mut lo = 1u64;
    let mut hi = 2u64;
    loop {
        let (m, s) = scale_at(meta, hi)?;
        if s.macs > target_macs {
            break;
        }
        lo = hi;
        best_meta = m;
        best_stats = s;
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let (m, s) = scale_at(meta, mid)?;
        if s.macs <= target_macs {
            lo = mid;
            best_meta = m;
            best_stats = s;
        } else {
            hi = mid;
        }
    }
    Ok(ScaledMetaGraph {
        multiplier: lo as f64 / MULTIPLIER_STEPS as f64,
        meta: best_meta,
        stats: best_stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::OperatorKind::{self, *};

    fn single(ops: Vec<OperatorKind>, edges: &[(usize, usize)], stage: StageConfig) -> MetaGraph {
        let cell = CellGraph::with_edges(ops, edges.iter().copied()).unwrap();
        MetaGraph::new(vec![cell], vec![stage]).unwrap()
    }

    #[test]
    fn chain_keeps_width() {
        let cell = CellGraph::with_edges(vec![Conv1x1], [(0, 1), (1, 2)]).unwrap();
        let plan = infer_channels(&cell, &StageConfig::new(16, 1, 8, 8), 16).unwrap();
        assert_eq!(
            plan.widths[1],
            Some(VertexWidth {
                input: 16,
                output: 16
            })
        );
        assert_eq!(plan.output_width, 16);
    }

    #[test]
    fn concat_of_projection_and_depthwise() {
        let cell = CellGraph::with_edges(vec![Conv1x1, DwConv3], [(0, 1), (0, 2), (1, 3), (2, 3)])
            .unwrap();
        let plan = infer_channels(&cell, &StageConfig::new(16, 1, 8, 8), 8).unwrap();
        assert_eq!(plan.widths[1].unwrap().output, 16);
        assert_eq!(plan.widths[2].unwrap().output, 8);
        assert_eq!(plan.output_width, 24);
    }

    #[test]
    fn inputs_are_summed() {
        // vertex 3 concatenates a 16-wide projection and a 24-wide depthwise
        let cell = CellGraph::with_edges(
            vec![Conv1x1, DwConv3, DwConv5],
            [(0, 1), (0, 2), (1, 3), (2, 3)],
        )
        .unwrap();
        let plan = infer_channels(&cell, &StageConfig::new(16, 1, 8, 8), 24).unwrap();
        assert_eq!(plan.widths[3].unwrap().input, 40);
    }

    #[test]
    fn conv_and_depthwise_counts() {
        let w = VertexWidth {
            input: 16,
            output: 32,
        };
        assert_eq!(operator_cost(Conv1x1, w, 64), (32768, 512 + 64));
        let w = VertexWidth {
            input: 16,
            output: 16,
        };
        assert_eq!(operator_cost(DwConv3, w, 64), (9216, 144 + 32));

        // with the stage input fixed to base width: Cin = Cout = 16
        let meta = single(vec![Conv1x1], &[(0, 1)], StageConfig::new(16, 1, 8, 8));
        let s = arch_stats(&meta).unwrap();
        assert_eq!(s.macs, 64 * 16 * 16);
        assert_eq!(s.params, 16 * 16 + 32);

        let meta = single(vec![DwConv3], &[(0, 1)], StageConfig::new(16, 1, 8, 8));
        let s = arch_stats(&meta).unwrap();
        assert_eq!(s.macs, 9216);
        assert_eq!(s.params, 144 + 32);
        assert_eq!(s.active_vertices, vec![1]);
    }

    #[test]
    fn repeats_multiply_totals() {
        let one = single(vec![DwConv5], &[(0, 1)], StageConfig::new(16, 1, 4, 4));
        let three = single(vec![DwConv5], &[(0, 1)], StageConfig::new(16, 3, 4, 4));
        let a = arch_stats(&one).unwrap();
        let b = arch_stats(&three).unwrap();
        assert_eq!(b.macs, 3 * a.macs);
        assert_eq!(b.params, 3 * a.params);
    }

    #[test]
    fn empty_derivation_propagates() {
        let cell = CellGraph::with_edges(vec![Conv1x1], [(1, 2)]).unwrap();
        assert_eq!(
            infer_channels(&cell, &StageConfig::new(8, 1, 1, 1), 8),
            Err(GraphError::EmptyDerivation)
        );
    }

    #[test]
    fn budget_fixed_point() {
        let meta = single(
            vec![Conv1x1, DwConv3],
            &[(0, 1), (1, 2)],
            StageConfig::new(32, 2, 8, 8),
        );
        let macs = arch_stats(&meta).unwrap().macs;
        let scaled = scale_to_budget(&meta, macs).unwrap();
        assert_eq!(scaled.meta.stages()[0].base_channels, 32);
        assert!((scaled.multiplier - 1.0).abs() <= 4.0 / 32.0);
    }

    #[test]
    fn next_grid_step_overshoots() {
        let meta = single(
            vec![Conv1x1, DwConv5, Conv1x1],
            &[(0, 1), (0, 2), (1, 3), (2, 3), (3, 4)],
            StageConfig::new(48, 2, 14, 14),
        );
        let base = arch_stats(&meta).unwrap().macs;
        for target in [base / 3, base, base * 2 + 12345, base * 7] {
            let scaled = scale_to_budget(&meta, target).unwrap();
            assert!(scaled.stats.macs <= target);
            let step = (scaled.multiplier * MULTIPLIER_STEPS as f64).round() as u64;
            assert!(scale_at(&meta, step + 1).unwrap().1.macs > target);
        }
    }

    #[test]
    fn budget_too_small() {
        let meta = single(vec![Conv1x1], &[(0, 1)], StageConfig::new(32, 1, 8, 8));
        assert!(matches!(
            scale_to_budget(&meta, 10),
            Err(GraphError::BudgetTooSmall { .. })
        ));
    }

    #[test]
    fn rounding_to_multiples_of_eight() {
        assert_eq!(scaled_channels(16, 256), 16);
        assert_eq!(scaled_channels(16, 1), 8);
        assert_eq!(scaled_channels(20, 256), 24); // 2.5 eighths rounds up
        assert_eq!(scaled_channels(64, 512), 128);
    }
}
