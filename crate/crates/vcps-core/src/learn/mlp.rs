//! Small fully-connected networks with analytic forward/backward passes and
//! an adaptive moment estimation optimizer. Hidden layers are rectified;
//! the output activation is configurable.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("input length {got} does not match layer 0 width {expected}")]
    ShapeMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    /// Identity output (critic value head).
    Linear,
    /// Unit-interval squashing (policy head).
    Sigmoid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpNetwork {
    pub layers: Vec<Layer>,
    pub output_activation: Activation,
}

/// Per-layer parameter gradients, same shapes as the network.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros(net: &MlpNetwork) -> Self {
        Gradients {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, f: f64) {
        for a in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            for x in a.iter_mut() {
                *x *= f;
            }
        }
    }
}

/// Activations recorded during a forward pass, consumed by `backward`.
pub struct ForwardCache {
    /// `acts[0]` is the input; `acts[i + 1]` is layer i's post-activation.
    acts: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("non-empty cache")
    }
}

impl MlpNetwork {
    /// Scaled uniform fan-in init; the final layer starts near zero
    /// (+-3e-3) so initial policy outputs sit close to the middle of the
    /// sigmoid range.
    pub fn new(sizes: &[usize], output_activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (inputs, outputs) = (w[0], w[1]);
                let limit = if i == last {
                    3e-3
                } else {
                    1.0 / (inputs as f64).sqrt()
                };
                Layer {
                    inputs,
                    outputs,
                    weights: (0..inputs * outputs)
                        .map(|_| rng.random_range(-limit..limit))
                        .collect(),
                    biases: (0..outputs).map(|_| rng.random_range(-limit..limit)).collect(),
                }
            })
            .collect();
        MlpNetwork {
            layers,
            output_activation,
        }
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().expect("non-empty").outputs
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, MlpError> {
        let mut cache = self.forward_cached(input)?;
        Ok(cache.acts.pop().expect("non-empty"))
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache, MlpError> {
        if input.len() != self.input_len() {
            return Err(MlpError::ShapeMismatch {
                expected: self.input_len(),
                got: input.len(),
            });
        }
        let n_layers = self.layers.len();
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(input.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let x = &acts[i];
            let mut z = vec![0.0; layer.outputs];
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                let mut acc = layer.biases[o];
                for (w, xi) in row.iter().zip(x) {
                    acc += w * xi;
                }
                *zo = acc;
            }
            let a = if i + 1 == n_layers {
                match self.output_activation {
                    Activation::Linear => z,
                    Activation::Sigmoid => z.iter().map(|&v| sigmoid(v)).collect(),
                }
            } else {
                z.iter().map(|&v| v.max(0.0)).collect()
            };
            acts.push(a);
        }
        Ok(ForwardCache { acts })
    }

    /// Backpropagates `upstream` = dL/d(output) through the cached pass.
    /// Returns parameter gradients and dL/d(input).
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> (Gradients, Vec<f64>) {
        let mut grads = Gradients::zeros(self);
        let n_layers = self.layers.len();
        let mut delta: Vec<f64> = {
            let out = cache.output();
            match self.output_activation {
                Activation::Linear => upstream.to_vec(),
                // d sigmoid(z) = y (1 - y)
                Activation::Sigmoid => upstream
                    .iter()
                    .zip(out)
                    .map(|(&g, &y)| g * y * (1.0 - y))
                    .collect(),
            }
        };
        for i in (0..n_layers).rev() {
            let layer = &self.layers[i];
            let x = &cache.acts[i];
            let dw = &mut grads.weights[i];
            for (o, &d) in delta.iter().enumerate() {
                grads.biases[i][o] += d;
                let row = &mut dw[o * layer.inputs..(o + 1) * layer.inputs];
                for (w, &xi) in row.iter_mut().zip(x) {
                    *w += d * xi;
                }
            }
            let mut prev = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, &w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            if i > 0 {
                // rectifier gate of the previous layer's activation
                for (p, &a) in prev.iter_mut().zip(&cache.acts[i]) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        (grads, delta)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// theta' <- n * theta + (1 - n) * theta', elementwise.
    pub fn soft_update_from(&mut self, source: &MlpNetwork, rate: f64) {
        for (t, s) in self.layers.iter_mut().zip(&source.layers) {
            for (tv, sv) in t.weights.iter_mut().zip(&s.weights) {
                *tv = rate * sv + (1.0 - rate) * *tv;
            }
            for (tv, sv) in t.biases.iter_mut().zip(&s.biases) {
                *tv = rate * sv + (1.0 - rate) * *tv;
            }
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Adaptive moment estimation over a network's parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m_w: Vec<Vec<f64>>,
    v_w: Vec<Vec<f64>>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(net: &MlpNetwork, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m_w: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            v_w: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            m_b: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
            v_b: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    /// Descends along `grads` (pass the negated gradient for ascent).
    pub fn apply(&mut self, net: &mut MlpNetwork, grads: &Gradients) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, layer) in net.layers.iter_mut().enumerate() {
            step_slice(
                &mut layer.weights,
                &grads.weights[i],
                &mut self.m_w[i],
                &mut self.v_w[i],
                self.lr,
                self.beta1,
                self.beta2,
                self.eps,
                bc1,
                bc2,
            );
            step_slice(
                &mut layer.biases,
                &grads.biases[i],
                &mut self.m_b[i],
                &mut self.v_b[i],
                self.lr,
                self.beta1,
                self.beta2,
                self.eps,
                bc1,
                bc2,
            );
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn step_slice(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Central finite-difference gradient of `loss` w.r.t. every parameter;
/// test-side oracle for `backward`.
pub fn finite_difference_grads(
    net: &MlpNetwork,
    step: f64,
    mut loss: impl FnMut(&MlpNetwork) -> f64,
) -> Gradients {
    let mut grads = Gradients::zeros(net);
    let mut probe = net.clone();
    for li in 0..net.layers.len() {
        for wi in 0..net.layers[li].weights.len() {
            let orig = probe.layers[li].weights[wi];
            probe.layers[li].weights[wi] = orig + step;
            let hi = loss(&probe);
            probe.layers[li].weights[wi] = orig - step;
            let lo = loss(&probe);
            probe.layers[li].weights[wi] = orig;
            grads.weights[li][wi] = (hi - lo) / (2.0 * step);
        }
        for bi in 0..net.layers[li].biases.len() {
            let orig = probe.layers[li].biases[bi];
            probe.layers[li].biases[bi] = orig + step;
            let hi = loss(&probe);
            probe.layers[li].biases[bi] = orig - step;
            let lo = loss(&probe);
            probe.layers[li].biases[bi] = orig;
            grads.biases[li][bi] = (hi - lo) / (2.0 * step);
        }
    }
    grads
}

/// Max relative error between analytic and finite-difference gradients of a
/// squared-output loss, over one random input. Shared by unit and
/// acceptance gradient checks.
pub fn gradient_check(net: &MlpNetwork, rng: &mut ChaCha8Rng) -> f64 {
    let input: Vec<f64> = (0..net.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    // L = 0.5 * sum(y^2), dL/dy = y
    let cache = net.forward_cached(&input).expect("shape ok");
    let upstream: Vec<f64> = cache.output().to_vec();
    let (analytic, _) = net.backward(&cache, &upstream);
    let numeric = finite_difference_grads(net, 1e-5, |probe| {
        let y = probe.forward(&input).expect("shape ok");
        0.5 * y.iter().map(|v| v * v).sum::<f64>()
    });
    let mut max_rel: f64 = 0.0;
    let compare = |a: &[Vec<f64>], n: &[Vec<f64>], max_rel: &mut f64| {
        for (la, ln) in a.iter().zip(n) {
            for (&ga, &gn) in la.iter().zip(ln) {
                let denom = ga.abs().max(gn.abs()).max(1e-6);
                *max_rel = max_rel.max((ga - gn).abs() / denom);
            }
        }
    };
    compare(&analytic.weights, &numeric.weights, &mut max_rel);
    compare(&analytic.biases, &numeric.biases, &mut max_rel);
    max_rel
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    #[test]
    fn zero_weights_linear_output_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = MlpNetwork::new(&[3, 1], Activation::Linear, &mut rng);
        for l in &mut net.layers {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
            l.biases.iter_mut().for_each(|b| *b = 0.0);
        }
        let y = net.forward(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(y, vec![0.0]);
        // dL/d bias of the last layer is the upstream itself
        let cache = net.forward_cached(&[1.0, 2.0, 3.0]).unwrap();
        let (grads, _) = net.backward(&cache, &[1.0]);
        assert_eq!(grads.biases[0], vec![1.0]);
    }

    #[test]
    fn identity_single_layer_reproduces_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = MlpNetwork::new(&[2, 2], Activation::Linear, &mut rng);
        net.layers[0].weights = vec![1.0, 0.0, 0.0, 1.0];
        net.layers[0].biases = vec![0.0, 0.0];
        assert_eq!(net.forward(&[0.3, -0.7]).unwrap(), vec![0.3, -0.7]);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = MlpNetwork::new(&[4, 2], Activation::Linear, &mut rng);
        assert!(net.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for sizes in [
            vec![5, 16, 16, 16, 3],
            vec![8, 16, 16, 16, 1],
            vec![4, 8, 2],
        ] {
            for act in [Activation::Linear, Activation::Sigmoid] {
                let net = MlpNetwork::new(&sizes, act, &mut rng);
                let err = gradient_check(&net, &mut rng);
                assert!(err < 1e-4, "sizes {sizes:?} act {act:?}: rel err {err}");
            }
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = MlpNetwork::new(&[4, 8, 8, 2], Activation::Linear, &mut rng);
        let input: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cache = net.forward_cached(&input).unwrap();
        let upstream: Vec<f64> = cache.output().to_vec();
        let (_, dx) = net.backward(&cache, &upstream);
        let step = 1e-5;
        for i in 0..input.len() {
            let mut hi = input.clone();
            hi[i] += step;
            let mut lo = input.clone();
            lo[i] -= step;
            let f = |x: &[f64]| {
                let y = net.forward(x).unwrap();
                0.5 * y.iter().map(|v| v * v).sum::<f64>()
            };
            let numeric = (f(&hi) - f(&lo)) / (2.0 * step);
            let denom = dx[i].abs().max(numeric.abs()).max(1e-6);
            assert!((dx[i] - numeric).abs() / denom < 1e-4);
        }
    }

    #[test]
    fn soft_update_endpoints_and_midpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let local = MlpNetwork::new(&[2, 4, 1], Activation::Linear, &mut rng);
        let target0 = MlpNetwork::new(&[2, 4, 1], Activation::Linear, &mut rng);

        let mut t = target0.clone();
        t.soft_update_from(&local, 1.0);
        assert_eq!(t.layers[0].weights, local.layers[0].weights);

        let mut t = target0.clone();
        t.soft_update_from(&local, 0.0);
        assert_eq!(t.layers[0].weights, target0.layers[0].weights);

        let mut t = target0.clone();
        t.soft_update_from(&local, 0.5);
        for ((tv, lv), ov) in t.layers[0]
            .weights
            .iter()
            .zip(&local.layers[0].weights)
            .zip(&target0.layers[0].weights)
        {
            assert_relative_eq!(*tv, 0.5 * lv + 0.5 * ov, max_relative = 1e-12);
        }
    }

    #[test]
    fn soft_update_contracts_toward_locals() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let local = MlpNetwork::new(&[2, 4, 1], Activation::Linear, &mut rng);
        let mut target = MlpNetwork::new(&[2, 4, 1], Activation::Linear, &mut rng);
        let rate = 0.01;
        let before: Vec<f64> = target.layers[0]
            .weights
            .iter()
            .zip(&local.layers[0].weights)
            .map(|(t, l)| (t - l).abs())
            .collect();
        target.soft_update_from(&local, rate);
        for (i, (t, l)) in target.layers[0]
            .weights
            .iter()
            .zip(&local.layers[0].weights)
            .enumerate()
        {
            assert_relative_eq!((t - l).abs(), (1.0 - rate) * before[i], max_relative = 1e-9);
        }
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut net = MlpNetwork::new(&[1, 1], Activation::Linear, &mut rng);
        let mut opt = Adam::new(&net, 0.05);
        // minimize (f(1) - 3)^2
        for _ in 0..500 {
            let cache = net.forward_cached(&[1.0]).unwrap();
            let y = cache.output()[0];
            let (grads, _) = net.backward(&cache, &[2.0 * (y - 3.0)]);
            opt.apply(&mut net, &grads);
        }
        let y = net.forward(&[1.0]).unwrap()[0];
        assert!((y - 3.0).abs() < 1e-3, "converged to {y}");
    }
}
