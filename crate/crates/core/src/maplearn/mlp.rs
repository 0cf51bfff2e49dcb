//! Small tanh multilayer perceptron trained with Adam and an L1 weight
//! penalty, with an analytic input Jacobian.

use log::warn;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub learning_rate: f64,
    /// Weight of the L1 penalty on weight matrices (biases are not penalized).
    pub l1: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Required datapoints per trainable parameter.
    pub data_ratio: usize,
    /// Train even when the data requirement is not met.
    pub allow_insufficient_data: bool,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_layers: 4,
            hidden_units: 4,
            learning_rate: 1.5e-3,
            l1: 0.01,
            steps: 10_000,
            batch_size: 64,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            data_ratio: 1000,
            allow_insufficient_data: false,
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers == 0 || self.hidden_units == 0 {
            return Err(Error::InvalidParameter("MLP needs at least one hidden unit and layer".into()));
        }
        if self.steps == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter("MLP steps and batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.l1 >= 0.0) {
            return Err(Error::InvalidParameter("learning rate must be positive and l1 non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter("invalid Adam moment parameters".into()));
        }
        Ok(())
    }

    /// Trainable parameters of a network with these hidden sizes.
    pub fn parameter_count(&self, input_dim: usize, output_dim: usize) -> usize {
        layer_sizes(input_dim, output_dim, self)
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

fn layer_sizes(input_dim: usize, output_dim: usize, config: &MlpConfig) -> Vec<usize> {
    let mut sizes = vec![input_dim];
    sizes.extend(std::iter::repeat_n(config.hidden_units, config.hidden_layers));
    sizes.push(output_dim);
    sizes
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            *slot = self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }
}

/// Network with tanh hidden layers and a linear output layer, wrapped in
/// input and output standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub output_mean: Vec<f64>,
    pub output_scale: Vec<f64>,
    pub layers: Vec<Layer>,
}

impl Mlp {
    pub fn input_dim(&self) -> usize {
        self.input_mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.output_mean.len()
    }

    /// Forward pass on standardized input; returns every layer's activation.
    fn activations(&self, z: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![z.to_vec()];
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; layer.outputs];
            layer.apply(acts.last().expect("input activation"), &mut out);
            if l < last {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
        }
        acts
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.input_mean)
            .zip(&self.input_scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let acts = self.activations(&self.standardize(x));
        acts.last()
            .expect("output activation")
            .iter()
            .zip(&self.output_mean)
            .zip(&self.output_scale)
            .map(|((v, m), s)| v * s + m)
            .collect()
    }

    /// `∂ output / ∂ input` by the chain rule through every layer.
    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let acts = self.activations(&self.standardize(x));
        // running product d(activation) / d(standardized input)
        let mut jac = DMatrix::<f64>::identity(self.input_dim(), self.input_dim());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let w = DMatrix::from_row_slice(layer.outputs, layer.inputs, &layer.weights);
            jac = w * jac;
            if l < last {
                for (r, a) in acts[l + 1].iter().enumerate() {
                    let d = 1.0 - a * a;
                    jac.row_mut(r).iter_mut().for_each(|v| *v *= d);
                }
            }
        }
        for r in 0..self.output_dim() {
            for c in 0..self.input_dim() {
                jac[(r, c)] *= self.output_scale[r] / self.input_scale[c];
            }
        }
        jac
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }
}

fn column_stats(data: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let rows = (data.len() / dim) as f64;
    let mut mean = vec![0.0; dim];
    for row in data.chunks_exact(dim) {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= rows);
    let mut var = vec![0.0; dim];
    for row in data.chunks_exact(dim) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale = var
        .iter()
        .map(|s| {
            let sd = (s / rows).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

/// Trains an MLP on row-major `inputs` / `targets`.
pub fn mlp_fit(inputs: &[f64], input_dim: usize, targets: &[f64], output_dim: usize, config: &MlpConfig) -> Result<Mlp> {
    config.validate()?;
    if input_dim == 0 || output_dim == 0 {
        return Err(Error::InvalidDimension("MLP dimensions must be positive".into()));
    }
    let rows = inputs.len() / input_dim;
    if inputs.len() != rows * input_dim || targets.len() != rows * output_dim || rows == 0 {
        return Err(Error::DimensionMismatch {
            expected: rows * output_dim,
            found: targets.len(),
        });
    }
    if inputs.iter().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("MLP training data".into()));
    }
    let parameters = config.parameter_count(input_dim, output_dim);
    let required = parameters * config.data_ratio;
    if rows < required {
        if config.allow_insufficient_data {
            warn!("training MLP on {rows} datapoints, below the {required} required for {parameters} parameters");
        } else {
            return Err(Error::InsufficientData {
                available: rows,
                required,
                parameters,
                ratio: config.data_ratio,
            });
        }
    }

    let (input_mean, input_scale) = column_stats(inputs, input_dim);
    let (output_mean, output_scale) = column_stats(targets, output_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sizes = layer_sizes(input_dim, output_dim, config);
    let layers = sizes
        .windows(2)
        .map(|w| {
            let bound = 1.0 / (w[0] as f64).sqrt();
            Layer {
                inputs: w[0],
                outputs: w[1],
                weights: (0..w[0] * w[1]).map(|_| rng.random_range(-bound..bound)).collect(),
                bias: (0..w[1]).map(|_| rng.random_range(-bound..bound)).collect(),
            }
        })
        .collect();
    let mut net = Mlp {
        input_mean,
        input_scale,
        output_mean,
        output_scale,
        layers,
    };

    let z_in: Vec<f64> = inputs.chunks_exact(input_dim).flat_map(|r| net.standardize(r)).collect();
    let z_out: Vec<f64> = targets
        .chunks_exact(output_dim)
        .flat_map(|r| {
            r.iter()
                .zip(&net.output_mean)
                .zip(&net.output_scale)
                .map(|((v, m), s)| (v - m) / s)
                .collect::<Vec<_>>()
        })
        .collect();

    let mut adam = Adam::new(&net, config);
    let mut order: Vec<usize> = (0..rows).collect();
    let mut cursor = rows;
    let batch = config.batch_size.min(rows);
    let mut grads = zero_like(&net);
    let mut indices = Vec::with_capacity(batch);
    for _ in 0..config.steps {
        indices.clear();
        while indices.len() < batch {
            if cursor == rows {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            indices.push(order[cursor]);
            cursor += 1;
        }
        batch_gradient(&net, &z_in, &z_out, &indices, config.l1, &mut grads);
        adam.step(&mut net, &grads);
    }
    if net.layers.iter().any(|l| l.weights.iter().chain(&l.bias).any(|v| !v.is_finite())) {
        return Err(Error::NonFinite("MLP weights after training".into()));
    }
    Ok(net)
}

fn zero_like(net: &Mlp) -> Vec<Layer> {
    net.layers
        .iter()
        .map(|l| Layer {
            inputs: l.inputs,
            outputs: l.outputs,
            weights: vec![0.0; l.weights.len()],
            bias: vec![0.0; l.bias.len()],
        })
        .collect()
}

/// Gradient of `mean((f(x) - y)²) + l1 Σ|W|` over the batch, in standardized
/// units.
fn batch_gradient(net: &Mlp, z_in: &[f64], z_out: &[f64], batch: &[usize], l1: f64, grads: &mut [Layer]) {
    for g in grads.iter_mut() {
        g.weights.iter_mut().for_each(|v| *v = 0.0);
        g.bias.iter_mut().for_each(|v| *v = 0.0);
    }
    let din = net.input_dim();
    let dout = net.output_dim();
    let norm = 2.0 / (batch.len() * dout) as f64;
    let last = net.layers.len() - 1;
    for &i in batch {
        let acts = net.activations(&z_in[i * din..(i + 1) * din]);
        let target = &z_out[i * dout..(i + 1) * dout];
        let mut delta: Vec<f64> = acts[last + 1].iter().zip(target).map(|(a, t)| norm * (a - t)).collect();
        for l in (0..=last).rev() {
            let layer = &net.layers[l];
            let input = &acts[l];
            let g = &mut grads[l];
            for (o, d) in delta.iter().enumerate() {
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                row.iter_mut().zip(input).for_each(|(w, a)| *w += d * a);
            }
            if l > 0 {
                delta = (0..layer.inputs)
                    .map(|c| {
                        let back: f64 = delta
                            .iter()
                            .enumerate()
                            .map(|(o, d)| d * layer.weights[o * layer.inputs + c])
                            .sum();
                        back * (1.0 - input[c] * input[c])
                    })
                    .collect();
            }
        }
    }
    if l1 > 0.0 {
        for (g, layer) in grads.iter_mut().zip(&net.layers) {
            for (gw, w) in g.weights.iter_mut().zip(&layer.weights) {
                if *w != 0.0 {
                    *gw += l1 * w.signum();
                }
            }
        }
    }
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    t: i32,
    m: Vec<Layer>,
    v: Vec<Layer>,
}

impl Adam {
    fn new(net: &Mlp, config: &MlpConfig) -> Self {
        Self {
            lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            t: 0,
            m: zero_like(net),
            v: zero_like(net),
        }
    }

    fn step(&mut self, net: &mut Mlp, grads: &[Layer]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.epsilon);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        };
        for (l, layer) in net.layers.iter_mut().enumerate() {
            update(&mut layer.weights, &grads[l].weights, &mut self.m[l].weights, &mut self.v[l].weights);
            update(&mut layer.bias, &grads[l].bias, &mut self.m[l].bias, &mut self.v[l].bias);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_data(rows: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..rows * 2).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn quick_config() -> MlpConfig {
        MlpConfig {
            allow_insufficient_data: true,
            steps: 300,
            ..MlpConfig::default()
        }
    }

    #[test]
    fn parameter_count_of_default_shape() {
        // 2*4+4 + 3*(16+4) + 4*2+2
        assert_eq!(MlpConfig::default().parameter_count(2, 2), 82);
    }

    #[test]
    fn insufficient_data_is_an_error_unless_overridden() {
        let x = identity_data(100, 1);
        let err = mlp_fit(&x, 2, &x, 2, &MlpConfig::default()).unwrap_err();
        match err {
            Error::InsufficientData {
                available, required, ..
            } => {
                assert_eq!(available, 100);
                assert_eq!(required, 82_000);
            }
            other => panic!("{other:?}"),
        }
        assert!(mlp_fit(&x, 2, &x, 2, &quick_config()).is_ok());
    }

    #[test]
    fn training_is_deterministic() {
        let x = identity_data(500, 2);
        let a = mlp_fit(&x, 2, &x, 2, &quick_config()).unwrap();
        let b = mlp_fit(&x, 2, &x, 2, &quick_config()).unwrap();
        assert_eq!(a, b);
        let c = mlp_fit(&x, 2, &x, 2, &MlpConfig { seed: 1, ..quick_config() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let x = identity_data(20, 3);
        let y: Vec<f64> = x.iter().map(|v| v.sin()).collect();
        let net = mlp_fit(&x, 2, &y, 2, &MlpConfig { steps: 5, ..quick_config() }).unwrap();
        let z_in: Vec<f64> = x.chunks(2).flat_map(|r| net.standardize(r)).collect();
        let batch: Vec<usize> = (0..20).collect();
        let mut grads = zero_like(&net);
        batch_gradient(&net, &z_in, &y, &batch, 0.0, &mut grads);
        let loss = |n: &Mlp| {
            batch
                .iter()
                .map(|&i| {
                    let a = n.activations(&z_in[i * 2..i * 2 + 2]);
                    a.last().unwrap().iter().zip(&y[i * 2..i * 2 + 2]).map(|(p, t)| (p - t).powi(2)).sum::<f64>()
                })
                .sum::<f64>()
                / 40.0
        };
        for l in 0..net.layers.len() {
            for k in 0..net.layers[l].weights.len() {
                let mut plus = net.clone();
                let mut minus = net.clone();
                plus.layers[l].weights[k] += 1e-6;
                minus.layers[l].weights[k] -= 1e-6;
                let fd = (loss(&plus) - loss(&minus)) / 2e-6;
                assert!((fd - grads[l].weights[k]).abs() < 1e-7, "layer {l} weight {k}");
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let x = identity_data(50, 4);
        let y: Vec<f64> = x.chunks(2).flat_map(|r| [r[0] * r[1] * 3.0, r[0].cos()]).collect();
        let net = mlp_fit(&x, 2, &y, 2, &quick_config()).unwrap();
        let point = [0.3, -0.7];
        let jac = net.jacobian(&point);
        let h = 1e-5;
        for c in 0..2 {
            let mut up = point;
            let mut down = point;
            up[c] += h;
            down[c] -= h;
            let (fu, fd) = (net.predict(&up), net.predict(&down));
            for r in 0..2 {
                let fdiff = (fu[r] - fd[r]) / (2.0 * h);
                assert!((fdiff - jac[(r, c)]).abs() <= 1e-6 * jac[(r, c)].abs().max(1.0));
            }
        }
    }
}
