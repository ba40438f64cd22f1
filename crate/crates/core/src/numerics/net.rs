//! Fixed-topology feed-forward networks with explicit reverse-mode gradients.
//!
//! Parameters live in one flat vector. Layer `k` stores its weight matrix
//! (`out_k x in_k`, row-major) followed by its bias vector. The output layer
//! is always linear.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_finite, check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation and the activation value.
    #[inline]
    pub fn derivative(self, pre: f64, post: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - post * post,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Parse(format!("unknown activation `{other}`"))),
        }
    }
}

/// Layer sizes plus the hidden nonlinearity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    sizes: Vec<usize>,
    hidden: Activation,
}

/// Offsets of one layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy)]
pub struct LayerSpan {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: usize,
    pub bias: usize,
}

impl Topology {
    pub fn new(sizes: Vec<usize>, hidden: Activation) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::InvalidArgument(
                "a network needs at least an input and an output layer".into(),
            ));
        }
        // Zero-width input is allowed (e.g. a bias-only model); hidden and
        // output layers must be non-empty.
        if sizes[1..].iter().any(|&s| s == 0) {
            return Err(Error::InvalidArgument(format!(
                "layer sizes must be positive: {sizes:?}"
            )));
        }
        Ok(Self { sizes, hidden })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn hidden(&self) -> Activation {
        self.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn spans(&self) -> Vec<LayerSpan> {
        let mut offset = 0;
        self.sizes
            .windows(2)
            .map(|w| {
                let span = LayerSpan {
                    inputs: w[0],
                    outputs: w[1],
                    weights: offset,
                    bias: offset + w[0] * w[1],
                };
                offset += w[0] * w[1] + w[1];
                span
            })
            .collect()
    }

    /// Activation applied after layer `k` (none on the last layer).
    pub fn activation_after(&self, k: usize) -> Option<Activation> {
        if k + 1 < self.n_layers() {
            Some(self.hidden)
        } else {
            None
        }
    }

    /// Scaled-normal initialization: weights ~ N(0, gain^2 / fan_in), biases 0.
    /// The output layer gets `output_gain` instead.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R, output_gain: f64) -> Vec<f64> {
        let mut params = vec![0.0; self.param_count()];
        let n = self.n_layers();
        for (k, span) in self.spans().into_iter().enumerate() {
            let gain = if k + 1 == n { output_gain } else { 1.0 };
            let scale = gain / (span.inputs.max(1) as f64).sqrt();
            for w in &mut params[span.weights..span.bias] {
                let z: f64 = rng.sample(StandardNormal);
                *w = scale * z;
            }
        }
        params
    }
}

/// Per-layer values kept by [`forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[k]` is the input of layer `k`.
    pub inputs: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

pub fn forward(topology: &Topology, params: &[f64], input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
    check_len("network parameters", topology.param_count(), params.len())?;
    check_len("network input", topology.input_dim(), input.len())?;
    let mut cache = ForwardCache {
        inputs: Vec::with_capacity(topology.n_layers()),
        pre: Vec::with_capacity(topology.n_layers()),
        post: Vec::with_capacity(topology.n_layers()),
    };
    let mut x = input.to_vec();
    for (k, span) in topology.spans().into_iter().enumerate() {
        let w = &params[span.weights..span.bias];
        let b = &params[span.bias..span.bias + span.outputs];
        let pre: Vec<f64> = (0..span.outputs)
            .map(|j| {
                let row = &w[j * span.inputs..(j + 1) * span.inputs];
                b[j] + row.iter().zip(&x).map(|(a, c)| a * c).sum::<f64>()
            })
            .collect();
        let post = match topology.activation_after(k) {
            Some(act) => pre.iter().map(|&p| act.apply(p)).collect(),
            None => pre.clone(),
        };
        cache.inputs.push(std::mem::replace(&mut x, post.clone()));
        cache.pre.push(pre);
        cache.post.push(post);
    }
    Ok((x, cache))
}

pub fn backward(
    topology: &Topology,
    params: &[f64],
    cache: &ForwardCache,
    output_grad: &[f64],
) -> Result<Gradients> {
    check_len("network parameters", topology.param_count(), params.len())?;
    check_len("forward cache", topology.n_layers(), cache.pre.len())?;
    check_len("output gradient", topology.output_dim(), output_grad.len())?;
    let mut grads = vec![0.0; params.len()];
    let spans = topology.spans();
    // Gradient w.r.t. the post-activation of the current layer.
    let mut delta = output_grad.to_vec();
    for k in (0..spans.len()).rev() {
        let span = spans[k];
        if let Some(act) = topology.activation_after(k) {
            for (j, d) in delta.iter_mut().enumerate() {
                *d *= act.derivative(cache.pre[k][j], cache.post[k][j]);
            }
        }
        let x = &cache.inputs[k];
        let w = &params[span.weights..span.bias];
        let mut input_grad = vec![0.0; span.inputs];
        for j in 0..span.outputs {
            let dj = delta[j];
            grads[span.bias + j] += dj;
            if dj == 0.0 {
                continue;
            }
            let base = span.weights + j * span.inputs;
            for i in 0..span.inputs {
                grads[base + i] += dj * x[i];
                input_grad[i] += dj * w[j * span.inputs + i];
            }
        }
        delta = input_grad;
    }
    Ok(Gradients {
        params: grads,
        input: delta,
    })
}

/// A network together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    pub topology: Topology,
    pub params: Vec<f64>,
}

impl DenseNet {
    pub fn new(topology: Topology, params: Vec<f64>) -> Result<Self> {
        check_len("network parameters", topology.param_count(), params.len())?;
        Ok(Self { topology, params })
    }

    pub fn zeros(topology: Topology) -> Self {
        let params = vec![0.0; topology.param_count()];
        Self { topology, params }
    }

    pub fn random<R: Rng + ?Sized>(topology: Topology, rng: &mut R, output_gain: f64) -> Self {
        let params = topology.init_params(rng, output_gain);
        Self { topology, params }
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        forward(&self.topology, &self.params, input)
    }

    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        let (out, _) = self.forward(input)?;
        check_finite("network output", &out)?;
        Ok(out)
    }

    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64]) -> Result<Gradients> {
        backward(&self.topology, &self.params, cache, output_grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff_grad;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear(inputs: usize, outputs: usize) -> Topology {
        Topology::new(vec![inputs, outputs], Activation::Relu).unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = DenseNet::new(linear(2, 2), vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(net.predict(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn zero_net_outputs_zero() {
        let topo = Topology::new(vec![3, 5, 2], Activation::Tanh).unwrap();
        let net = DenseNet::zeros(topo);
        assert_eq!(net.predict(&[0.3, -1.0, 7.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn relu_hidden_versus_linear_output() {
        // 2 -> 1 as the output layer: no nonlinearity.
        let out_layer = DenseNet::new(linear(2, 1), vec![1.0, -1.0, 0.0]).unwrap();
        assert_eq!(out_layer.predict(&[3.0, 5.0]).unwrap(), vec![-2.0]);

        // Same weights as a hidden relu layer feeding an identity output.
        let topo = Topology::new(vec![2, 1, 1], Activation::Relu).unwrap();
        let net = DenseNet::new(topo, vec![1.0, -1.0, 0.0, 1.0, 0.0]).unwrap();
        let (out, cache) = net.forward(&[3.0, 5.0]).unwrap();
        assert_eq!(cache.pre[0], vec![-2.0]);
        assert_eq!(cache.post[0], vec![0.0]);
        assert_eq!(out, vec![0.0]);
    }

    #[test]
    fn rejects_wrong_input_length() {
        let net = DenseNet::zeros(linear(2, 2));
        assert!(matches!(net.forward(&[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = DenseNet::random(Topology::new(vec![3, 4, 2], Activation::Tanh).unwrap(), &mut rng, 1.0);
        let (_, cache) = net.forward(&[0.1, 0.2, 0.3]).unwrap();
        let g = net.backward(&cache, &[0.0, 0.0]).unwrap();
        assert!(g.params.iter().chain(&g.input).all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_weight_gradient_is_outer_product() {
        let net = DenseNet::new(linear(3, 2), vec![0.5, -1.0, 2.0, 0.1, 0.2, 0.3, 0.0, 0.0]).unwrap();
        let x = [1.5, -2.0, 0.25];
        let g = [3.0, -0.5];
        let (_, cache) = net.forward(&x).unwrap();
        let grads = net.backward(&cache, &g).unwrap();
        for j in 0..2 {
            for i in 0..3 {
                assert_eq!(grads.params[j * 3 + i], g[j] * x[i]);
            }
            assert_eq!(grads.params[6 + j], g[j]);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for act in [Activation::Tanh, Activation::Relu] {
            let topo = Topology::new(vec![3, 4, 2], act).unwrap();
            let net = DenseNet::random(topo.clone(), &mut rng, 1.0);
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let proj = [0.7, -1.3];
            let f = |p: &[f64]| {
                let (out, _) = forward(&topo, p, &x).unwrap();
                out.iter().zip(&proj).map(|(o, w)| o * w).sum::<f64>()
            };
            let fd = finite_diff_grad(f, &net.params, 1e-5).unwrap();
            let (_, cache) = net.forward(&x).unwrap();
            let g = net.backward(&cache, &proj).unwrap();
            for (a, b) in g.params.iter().zip(&fd) {
                let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
                assert!(rel < 1e-5, "analytic {a} vs fd {b}");
            }
        }
    }

    #[test]
    fn forward_is_bitwise_repeatable() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = DenseNet::random(Topology::new(vec![4, 8, 3], Activation::Tanh).unwrap(), &mut rng, 1.0);
        let x = [0.3, -0.7, 1.1, 0.0];
        let a = net.predict(&x).unwrap();
        let b = net.predict(&x).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}
