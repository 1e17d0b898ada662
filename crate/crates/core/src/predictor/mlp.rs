use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
    Sigmoid,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

/// Fully connected layer. `weights[i * outputs + j]` connects input `i` to
/// output `j`, so a single input's fan-out is contiguous.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    /// He-style uniform initialization: `U(-sqrt(6/fan_in), sqrt(6/fan_in))`,
    /// zero biases.
    pub fn init<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let bound = (6.0 / inputs.max(1) as f64).sqrt();
        Layer {
            inputs,
            outputs,
            activation,
            weights: (0..inputs * outputs)
                .map(|_| rng.gen_range(-bound..bound))
                .collect(),
            bias: vec![0.0; outputs],
        }
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Layer {
            inputs,
            outputs,
            activation,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn forward_into(&self, x: &[f64], z: &mut Vec<f64>, a: &mut Vec<f64>) {
        z.clear();
        z.extend_from_slice(&self.bias);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.weights[i * self.outputs..(i + 1) * self.outputs];
            for (zj, &w) in z.iter_mut().zip(row) {
                *zj += xi * w;
            }
        }
        a.clear();
        a.extend(z.iter().map(|&v| self.activation.apply(v)));
    }
}

/// Multi-layer perceptron mapping an encoded meta-graph to a score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorModel {
    pub layers: Vec<Layer>,
}

/// Per-layer pre-activations and outputs from one forward pass.
#[derive(Clone, Debug, Default)]
pub(crate) struct Trace {
    pub z: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
}

/// Gradient buffers shaped like a model.
#[derive(Clone, Debug)]
pub(crate) struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &PredictorModel) -> Self {
        Gradients {
            weights: model
                .layers
                .iter()
                .map(|l| vec![0.0; l.weights.len()])
                .collect(),
            bias: model
                .layers
                .iter()
                .map(|l| vec![0.0; l.bias.len()])
                .collect(),
        }
    }

    pub fn clear(&mut self) {
        for g in self.weights.iter_mut().chain(self.bias.iter_mut()) {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

impl PredictorModel {
    /// Randomly initialized network `input -> hidden... -> 1`.
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        hidden_activation: Activation,
        head: Activation,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input_dim;
        for &width in hidden {
            layers.push(Layer::init(fan_in, width, hidden_activation, rng));
            fan_in = width;
        }
        layers.push(Layer::init(fan_in, 1, head, rng));
        PredictorModel { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Scalar output for one input vector. Panics on a dimension mismatch;
    /// use the checked entry points in the parent module.
    pub fn forward(&self, x: &[f64]) -> f64 {
        let mut trace = Trace::default();
        self.forward_trace(x, &mut trace);
        trace.a.last().expect("model has layers")[0]
    }

    pub(crate) fn forward_trace(&self, x: &[f64], trace: &mut Trace) {
        assert_eq!(x.len(), self.input_dim(), "input dimension mismatch");
        trace.z.resize_with(self.layers.len(), Vec::new);
        trace.a.resize_with(self.layers.len(), Vec::new);
        for (k, layer) in self.layers.iter().enumerate() {
            let (prev, rest) = trace.a.split_at_mut(k);
            let input = if k == 0 { x } else { &prev[k - 1] };
            layer.forward_into(input, &mut trace.z[k], &mut rest[0]);
        }
    }

    /// Adds `scale * d(output)/d(params)` to `grads` using a trace of the
    /// forward pass on `x`.
    pub(crate) fn backward(&self, x: &[f64], trace: &Trace, scale: f64, grads: &mut Gradients) {
        let last = self.layers.len() - 1;
        let mut delta: Vec<f64> = {
            let layer = &self.layers[last];
            (0..layer.outputs)
                .map(|j| {
                    scale
                        * layer
                            .activation
                            .derivative(trace.z[last][j], trace.a[last][j])
                })
                .collect()
        };
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let input: &[f64] = if k == 0 { x } else { &trace.a[k - 1] };
            let gw = &mut grads.weights[k];
            for (i, &xi) in input.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let row = &mut gw[i * layer.outputs..(i + 1) * layer.outputs];
                for (g, &d) in row.iter_mut().zip(&delta) {
                    *g += xi * d;
                }
            }
            for (g, &d) in grads.bias[k].iter_mut().zip(&delta) {
                *g += d;
            }
            if k == 0 {
                break;
            }
            let below = &self.layers[k - 1];
            delta = (0..layer.inputs)
                .map(|i| {
                    let row = &layer.weights[i * layer.outputs..(i + 1) * layer.outputs];
                    let back: f64 = row.iter().zip(&delta).map(|(w, d)| w * d).sum();
                    back * below
                        .activation
                        .derivative(trace.z[k - 1][i], trace.a[k - 1][i])
                })
                .collect();
        }
    }

    /// Sign pattern of every ReLU pre-activation, used to detect kinks.
    pub(crate) fn relu_pattern(&self, x: &[f64]) -> Vec<bool> {
        let mut trace = Trace::default();
        self.forward_trace(x, &mut trace);
        self.layers
            .iter()
            .zip(&trace.z)
            .filter(|(l, _)| l.activation == Activation::Relu)
            .flat_map(|(_, z)| z.iter().map(|&v| v > 0.0))
            .collect()
    }

    pub(crate) fn param_mut(&mut self, index: usize) -> &mut f64 {
        let mut i = index;
        for layer in &mut self.layers {
            if i < layer.weights.len() {
                return &mut layer.weights[i];
            }
            i -= layer.weights.len();
            if i < layer.bias.len() {
                return &mut layer.bias[i];
            }
            i -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }
}

impl Gradients {
    pub(crate) fn flat(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fresh_model_output_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = PredictorModel::new(
            20,
            &[16, 16],
            Activation::Relu,
            Activation::Sigmoid,
            &mut rng,
        );
        for _ in 0..20 {
            let x: Vec<f64> = (0..20).map(|_| f64::from(rng.gen_range(0u8..2))).collect();
            let y = model.forward(&x);
            assert!(y.is_finite() && (0.0..=1.0).contains(&y));
        }
        assert_eq!(model.param_count(), 20 * 16 + 16 + 16 * 16 + 16 + 16 + 1);
    }

    #[test]
    fn dead_relu_units_have_zero_gradient() {
        let mut model = PredictorModel {
            layers: vec![
                Layer::zeros(3, 2, Activation::Relu),
                Layer::zeros(2, 1, Activation::Sigmoid),
            ],
        };
        model.layers[0].bias = vec![-1.0, -1.0];
        let x = [1.0, 0.0, 1.0];
        let mut trace = Trace::default();
        model.forward_trace(&x, &mut trace);
        let mut g = Gradients::zeros_like(&model);
        model.backward(&x, &trace, 1.0, &mut g);
        assert!(g.weights[0].iter().all(|&v| v == 0.0));
        assert!(g.weights[1].iter().all(|&v| v == 0.0));
    }
}
