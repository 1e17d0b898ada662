//! MLP surrogate mapping encoded meta-graphs to predicted performance.

mod metrics;
mod mlp;

pub use metrics::{kendall_tau_b, mse, pearson, ranking_metrics_of, MetricsError, RankingMetrics};
pub use mlp::{Activation, Layer, PredictorModel};

use crate::graph::{encode, MetaGraph};
use mlp::{Gradients, Trace};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum PredictorError {
    #[error("training split is empty")]
    EmptyDataset,
    #[error("input has dimension {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("target {0} outside [0, 1]")]
    TargetRange(f64),
    #[error("invalid training configuration: {0}")]
    Config(&'static str),
    #[error("non-finite parameters after epoch {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
}

/// Encoded architectures with targets in `[0, 1]`, all of one dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub split: Split,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(split: Split, samples: Vec<Sample>) -> Result<Self, PredictorError> {
        if let Some(first) = samples.first() {
            let dim = first.x.len();
            for s in &samples {
                if s.x.len() != dim {
                    return Err(PredictorError::DimensionMismatch {
                        expected: dim,
                        got: s.x.len(),
                    });
                }
                if !(0.0..=1.0).contains(&s.y) {
                    return Err(PredictorError::TargetRange(s.y));
                }
            }
        }
        Ok(Dataset { split, samples })
    }

    pub fn from_metagraphs<'a, I>(split: Split, pairs: I) -> Result<Self, PredictorError>
    where
        I: IntoIterator<Item = (&'a MetaGraph, f64)>,
    {
        let samples = pairs
            .into_iter()
            .map(|(meta, y)| Sample {
                x: encode_f64(meta),
                y,
            })
            .collect();
        Dataset::new(split, samples)
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.samples.first().map(|s| s.x.len())
    }
}

/// Encoding as model input.
pub fn encode_f64(meta: &MetaGraph) -> Vec<f64> {
    encode(meta).into_iter().map(f64::from).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LrSchedule {
    Constant,
    /// `lr * (1 + cos(pi * epoch / epochs)) / 2`
    Cosine,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub schedule: LrSchedule,
    pub hidden: Vec<usize>,
    pub hidden_activation: Activation,
    pub head: Activation,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 128,
            learning_rate: 0.1,
            weight_decay: 1e-4,
            momentum: 0.9,
            schedule: LrSchedule::Cosine,
            hidden: vec![256, 256],
            hidden_activation: Activation::Relu,
            head: Activation::Sigmoid,
            seed: 0,
        }
    }
}

impl TrainConfig {
    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn check(&self) -> Result<(), PredictorError> {
        if self.epochs == 0 {
            return Err(PredictorError::Config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(PredictorError::Config("batch size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(PredictorError::Config("learning rate must be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(PredictorError::Config("weight decay must be non-negative"));
        }
        Ok(())
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine => {
                let t = epoch as f64 / self.epochs as f64;
                self.learning_rate * (1.0 + (std::f64::consts::PI * t).cos()) / 2.0
            }
        }
    }
}

/// Mean training loss per epoch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub epoch_loss: Vec<f64>,
}

/// Fits a fresh model by minibatch SGD with momentum on mean squared error.
/// L2 decay applies to weights, not biases. Shuffling and initialization
/// are driven by `cfg.seed` only.
pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<PredictorModel, PredictorError> {
    train_with_report(data, cfg).map(|(m, _)| m)
}

pub fn train_with_report(
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(PredictorModel, TrainReport), PredictorError> {
    cfg.check()?;
    let dim = data.dim().ok_or(PredictorError::EmptyDataset)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model =
        PredictorModel::new(dim, &cfg.hidden, cfg.hidden_activation, cfg.head, &mut rng);
    let mut grads = Gradients::zeros_like(&model);
    let mut velocity = Gradients::zeros_like(&model);
    let mut trace = Trace::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport::default();

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.clear();
            let scale = 2.0 / batch.len() as f64;
            for &i in batch {
                let s = &data.samples[i];
                model.forward_trace(&s.x, &mut trace);
                let residual = trace.a.last().expect("model has layers")[0] - s.y;
                total += residual * residual;
                model.backward(&s.x, &trace, scale * residual, &mut grads);
            }
            sgd_step(&mut model, &grads, &mut velocity, lr, cfg);
        }
        if !model.all_finite() {
            return Err(PredictorError::NonFinite(epoch));
        }
        report.epoch_loss.push(total / data.len() as f64);
    }
    Ok((model, report))
}

fn sgd_step(
    model: &mut PredictorModel,
    grads: &Gradients,
    velocity: &mut Gradients,
    lr: f64,
    cfg: &TrainConfig,
) {
    for (k, layer) in model.layers.iter_mut().enumerate() {
        for ((w, &g), v) in layer
            .weights
            .iter_mut()
            .zip(&grads.weights[k])
            .zip(velocity.weights[k].iter_mut())
        {
            *v = cfg.momentum * *v + g + cfg.weight_decay * *w;
            *w -= lr * *v;
        }
        for ((b, &g), v) in layer
            .bias
            .iter_mut()
            .zip(&grads.bias[k])
            .zip(velocity.bias[k].iter_mut())
        {
            *v = cfg.momentum * *v + g;
            *b -= lr * *v;
        }
    }
}

fn check_dim(model: &PredictorModel, got: usize) -> Result<(), PredictorError> {
    if got != model.input_dim() {
        return Err(PredictorError::DimensionMismatch {
            expected: model.input_dim(),
            got,
        });
    }
    Ok(())
}

/// Predicted score of a meta-graph.
pub fn predict(model: &PredictorModel, meta: &MetaGraph) -> Result<f64, PredictorError> {
    predict_vector(model, &encode_f64(meta))
}

pub fn predict_vector(model: &PredictorModel, x: &[f64]) -> Result<f64, PredictorError> {
    check_dim(model, x.len())?;
    Ok(model.forward(x))
}

pub fn predict_batch(model: &PredictorModel, xs: &[Vec<f64>]) -> Result<Vec<f64>, PredictorError> {
    xs.iter().map(|x| predict_vector(model, x)).collect()
}

/// Pearson's rho, Kendall's tau-b and MSE of the model on `test`.
pub fn ranking_metrics(
    model: &PredictorModel,
    test: &Dataset,
) -> Result<RankingMetrics, PredictorError> {
    let pred = test
        .samples()
        .iter()
        .map(|s| predict_vector(model, &s.x))
        .collect::<Result<Vec<_>, _>>()?;
    let truth: Vec<f64> = test.samples().iter().map(|s| s.y).collect();
    Ok(ranking_metrics_of(&pred, &truth)?)
}

/// Result of comparing backpropagated gradients to central differences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Parameters skipped because the probe crossed a ReLU kink.
    pub skipped: usize,
}

/// Step size relative to the parameter magnitude.
const FD_STEP: f64 = 1e-4;
/// Denominator floor so vanishing gradients do not inflate the ratio.
const FD_FLOOR: f64 = 1e-8;

/// Compares analytic gradients of the squared error on `(x, y)` with
/// central finite differences on every parameter.
pub fn gradient_check(
    model: &PredictorModel,
    x: &[f64],
    y: f64,
) -> Result<GradientCheck, PredictorError> {
    check_dim(model, x.len())?;
    let mut trace = Trace::default();
    model.forward_trace(x, &mut trace);
    let residual = trace.a.last().expect("model has layers")[0] - y;
    let mut grads = Gradients::zeros_like(model);
    model.backward(x, &trace, 2.0 * residual, &mut grads);
    let analytic = grads.flat();

    let base_pattern = model.relu_pattern(x);
    let loss = |m: &PredictorModel| (m.forward(x) - y).powi(2);
    let mut probe = model.clone();
    let mut result = GradientCheck {
        max_relative_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    for (i, &a) in analytic.iter().enumerate() {
        let theta = *probe.param_mut(i);
        let h = FD_STEP * theta.abs().max(1.0);
        *probe.param_mut(i) = theta + h;
        let (plus, plus_pattern) = (loss(&probe), probe.relu_pattern(x));
        *probe.param_mut(i) = theta - h;
        let (minus, minus_pattern) = (loss(&probe), probe.relu_pattern(x));
        *probe.param_mut(i) = theta;
        if plus_pattern != base_pattern || minus_pattern != base_pattern {
            result.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * h);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_FLOOR);
        result.max_relative_error = result.max_relative_error.max(rel);
        result.checked += 1;
    }
    Ok(result)
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    layers: Vec<Layer>,
}

impl PredictorModel {
    /// JSON checkpoint: layer shapes plus row-major weights and biases.
    /// Floats are written in shortest round-trip form, so reloading gives
    /// bit-identical parameters.
    pub fn to_checkpoint(&self) -> String {
        serde_json::to_string(&Checkpoint {
            version: CHECKPOINT_VERSION,
            layers: self.layers.clone(),
        })
        .expect("checkpoint serializes")
    }

    pub fn from_checkpoint(text: &str) -> Result<Self, PredictorError> {
        let ckpt: Checkpoint =
            serde_json::from_str(text).map_err(|e| PredictorError::Checkpoint(e.to_string()))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(PredictorError::Checkpoint(format!(
                "unsupported version {}",
                ckpt.version
            )));
        }
        if ckpt.layers.is_empty() {
            return Err(PredictorError::Checkpoint("no layers".into()));
        }
        let mut fan_in = ckpt.layers[0].inputs;
        for layer in &ckpt.layers {
            if layer.inputs != fan_in
                || layer.weights.len() != layer.inputs * layer.outputs
                || layer.bias.len() != layer.outputs
            {
                return Err(PredictorError::Checkpoint(
                    "inconsistent layer shapes".into(),
                ));
            }
            fan_in = layer.outputs;
        }
        if fan_in != 1 {
            return Err(PredictorError::Checkpoint(
                "model must end in one output".into(),
            ));
        }
        Ok(PredictorModel {
            layers: ckpt.layers,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), PredictorError> {
        std::fs::write(path, self.to_checkpoint())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PredictorError> {
        PredictorModel::from_checkpoint(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_cfg(seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: 200,
            batch_size: 16,
            learning_rate: 0.05,
            weight_decay: 0.0,
            hidden: vec![32, 32],
            seed,
            ..TrainConfig::default()
        }
    }

    fn linear_data(n: usize, dim: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let samples = (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..dim).map(|_| f64::from(rng.gen_range(0u8..2))).collect();
                let z: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / dim as f64;
                Sample {
                    x,
                    y: 0.5 + 0.4 * z,
                }
            })
            .collect();
        Dataset::new(Split::Train, samples).unwrap()
    }

    #[test]
    fn fits_linear_target() {
        let data = linear_data(200, 12, 4);
        let (model, report) = train_with_report(&data, &small_cfg(1)).unwrap();
        let final_mse = data
            .samples()
            .iter()
            .map(|s| (model.forward(&s.x) - s.y).powi(2))
            .sum::<f64>()
            / data.len() as f64;
        assert!(final_mse < 1e-3, "train mse {final_mse}");
        assert!(report.epoch_loss.last().unwrap() < &report.epoch_loss[0]);
    }

    #[test]
    fn converges_to_constant() {
        let samples: Vec<Sample> = (0..64)
            .map(|i| Sample {
                x: (0..8)
                    .map(|j| f64::from(((i >> (j % 6)) & 1) as u8))
                    .collect(),
                y: 0.7,
            })
            .collect();
        let data = Dataset::new(Split::Train, samples).unwrap();
        let model = train(&data, &small_cfg(2)).unwrap();
        let test_mse = data
            .samples()
            .iter()
            .map(|s| (model.forward(&s.x) - 0.7).powi(2))
            .sum::<f64>()
            / data.len() as f64;
        // weight decay keeps a small bias away from the exact constant
        assert!(test_mse < 1e-3, "mse {test_mse}");
    }

    #[test]
    fn empty_and_mismatched_data() {
        let empty = Dataset::new(Split::Train, vec![]).unwrap();
        assert!(matches!(
            train(&empty, &small_cfg(0)),
            Err(PredictorError::EmptyDataset)
        ));
        let bad = Dataset::new(
            Split::Train,
            vec![
                Sample {
                    x: vec![0.0; 3],
                    y: 0.1,
                },
                Sample {
                    x: vec![0.0; 4],
                    y: 0.1,
                },
            ],
        );
        assert!(matches!(bad, Err(PredictorError::DimensionMismatch { .. })));
        let out_of_range = Dataset::new(
            Split::Train,
            vec![Sample {
                x: vec![1.0],
                y: 1.5,
            }],
        );
        assert!(matches!(out_of_range, Err(PredictorError::TargetRange(_))));
    }

    #[test]
    fn bad_config_rejected() {
        let data = linear_data(4, 3, 0);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..small_cfg(0)
        };
        assert!(matches!(train(&data, &cfg), Err(PredictorError::Config(_))));
    }

    #[test]
    fn training_is_deterministic() {
        let data = linear_data(40, 6, 8);
        let cfg = TrainConfig {
            epochs: 5,
            ..small_cfg(11)
        };
        let a = train(&data, &cfg).unwrap();
        let b = train(&data, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let data = linear_data(40, 6, 8);
        let cfg = TrainConfig {
            epochs: 3,
            ..small_cfg(5)
        };
        let model = train(&data, &cfg).unwrap();
        let back = PredictorModel::from_checkpoint(&model.to_checkpoint()).unwrap();
        for s in data.samples() {
            assert_eq!(model.forward(&s.x).to_bits(), back.forward(&s.x).to_bits());
        }
        assert!(PredictorModel::from_checkpoint("{\"version\":1,\"layers\":[]}").is_err());
        assert!(PredictorModel::from_checkpoint("{\"version\":2,\"layers\":[]}").is_err());
    }

    #[test]
    fn gradient_check_small_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let model =
            PredictorModel::new(6, &[5, 4], Activation::Relu, Activation::Sigmoid, &mut rng);
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let check = gradient_check(&model, &x, 0.3).unwrap();
        assert!(check.max_relative_error < 1e-4, "{check:?}");
        assert_eq!(check.checked + check.skipped, model.param_count());
    }

    #[test]
    fn gradient_check_linear_model_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = PredictorModel::new(
            4,
            &[3],
            Activation::Identity,
            Activation::Identity,
            &mut rng,
        );
        let x = [0.5, -1.0, 2.0, 0.25];
        let check = gradient_check(&model, &x, 0.1).unwrap();
        assert_eq!(check.skipped, 0);
        assert!(check.max_relative_error < 1e-9, "{check:?}");
    }

    #[test]
    fn predict_checks_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = PredictorModel::new(4, &[3], Activation::Relu, Activation::Sigmoid, &mut rng);
        assert!(matches!(
            predict_vector(&model, &[1.0, 0.0]),
            Err(PredictorError::DimensionMismatch {
                expected: 4,
                got: 2
            })
        ));
        let a = predict_vector(&model, &[1.0, 0.0, 1.0, 1.0]).unwrap();
        let b = predict_vector(&model, &[1.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
