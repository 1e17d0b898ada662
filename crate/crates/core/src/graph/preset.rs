use super::{CellGraph, GraphError, MetaGraph, OperatorKind, StageConfig};
use std::str::FromStr;

/// The two instantiated design spaces. Both use 18-vertex cells whose 16
/// intermediate vertices cycle through the four operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    ImageNet,
    Cifar10,
}

impl FromStr for Preset {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "imagenet" => Ok(Preset::ImageNet),
            "cifar10" => Ok(Preset::Cifar10),
            other => Err(GraphError::UnknownPreset(other.to_string())),
        }
    }
}

pub const PRESET_VERTICES: usize = 18;

impl Preset {
    pub fn stages(self) -> Vec<StageConfig> {
        match self {
            // 224x224 input, down-sampled 4x, 8x, 16x, 32x
            Preset::ImageNet => [(16, 56), (32, 28), (64, 14), (128, 7)]
                .iter()
                .map(|&(c, hw)| StageConfig::new(c, 2, hw, hw))
                .collect(),
            // 32x32 input, three stages of three stacked cells
            Preset::Cifar10 => [(16, 32), (32, 16), (64, 8)]
                .iter()
                .map(|&(c, hw)| StageConfig::new(c, 3, hw, hw))
                .collect(),
        }
    }

    /// Edgeless template of this space.
    pub fn template(self) -> MetaGraph {
        let stages = self.stages();
        let cells = stages
            .iter()
            .map(|_| {
                CellGraph::new(cyclic_ops(PRESET_VERTICES - 2))
                    .expect("preset cell size is supported")
            })
            .collect();
        MetaGraph::template(cells, stages)
    }
}

/// Operators for `count` intermediate vertices: vertex `i` gets
/// conv1x1, dw3, dw5, dw7 by `(i - 1) mod 4`.
pub fn cyclic_ops(count: usize) -> Vec<OperatorKind> {
    (0..count).map(|i| OperatorKind::ALL[i % 4]).collect()
}

/// Edgeless template of a named preset space.
pub fn preset_space(name: &str) -> Result<MetaGraph, GraphError> {
    Ok(name.parse::<Preset>()?.template())
}

/// Edgeless single-cell template with `num_vertices` vertices and cyclic
/// operators, used for enumerable toy spaces.
pub fn single_cell_template(
    num_vertices: usize,
    stage: StageConfig,
) -> Result<MetaGraph, GraphError> {
    if !(2..=super::MAX_VERTICES).contains(&num_vertices) {
        return Err(GraphError::VertexCount(num_vertices));
    }
    let cell = CellGraph::new(cyclic_ops(num_vertices - 2))?;
    Ok(MetaGraph::template(vec![cell], vec![stage]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use OperatorKind::*;

    #[test]
    fn imagenet_layout() {
        let meta = preset_space("imagenet").unwrap();
        assert_eq!(meta.num_stages(), 4);
        for cell in meta.cells() {
            assert_eq!(cell.num_vertices(), 18);
            for v in [1, 5, 9, 13] {
                assert_eq!(cell.op(v), Some(Conv1x1));
            }
            for v in [2, 6, 10, 14] {
                assert_eq!(cell.op(v), Some(DwConv3));
            }
            for v in [3, 7, 11, 15] {
                assert_eq!(cell.op(v), Some(DwConv5));
            }
            for v in [4, 8, 12, 16] {
                assert_eq!(cell.op(v), Some(DwConv7));
            }
            assert_eq!(cell.op(0), None);
            assert_eq!(cell.op(17), None);
        }
        let channels: Vec<_> = meta.stages().iter().map(|s| s.base_channels).collect();
        assert_eq!(channels, vec![16, 32, 64, 128]);
    }

    #[test]
    fn cifar_layout() {
        let meta = preset_space("cifar10").unwrap();
        assert_eq!(meta.num_stages(), 3);
        let channels: Vec<_> = meta.stages().iter().map(|s| s.base_channels).collect();
        assert_eq!(channels, vec![16, 32, 64]);
        assert!(meta.stages().iter().all(|s| s.repeats == 3));
    }

    #[test]
    fn unknown_preset() {
        assert_eq!(
            preset_space("foo"),
            Err(GraphError::UnknownPreset("foo".into()))
        );
    }
}
