//! Minimal dense feed-forward approximators.
//!
//! A [`DenseNet`] is a chain of affine layers `a_{l+1} = act(a_l W_l^T + b_l)`.
//! Batched evaluation keeps every post-activation so that [`DenseNet::backward`]
//! can run reverse-mode differentiation without storing pre-activations: the
//! derivative of each supported activation is recoverable from its output.
//!
//! Weights are row-major with shape `(outputs, inputs)`.

mod adam;
mod checkpoint;
mod matrix;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_net, read_net, save_net, write_net, CHECKPOINT_MAGIC};
pub use matrix::Matrix;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// One affine layer followed by an element-wise activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    inputs: usize,
    outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(
        inputs: usize,
        outputs: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::ArchitectureMismatch(
                "layer sizes must be positive".into(),
            ));
        }
        if weights.len() != inputs * outputs {
            return Err(Error::DimensionMismatch {
                context: "layer weights",
                expected: inputs * outputs,
                got: weights.len(),
            });
        }
        if biases.len() != outputs {
            return Err(Error::DimensionMismatch {
                context: "layer biases",
                expected: outputs,
                got: biases.len(),
            });
        }
        Ok(Self {
            inputs,
            outputs,
            weights,
            biases,
            activation,
        })
    }

    /// Uniform fan-in initialisation, `U(-1/sqrt(in), 1/sqrt(in))` for weights and biases.
    pub fn uniform<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let bound = 1.0 / (inputs.max(1) as f64).sqrt();
        Self::uniform_range(inputs, outputs, activation, bound, rng)
    }

    pub fn uniform_range<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        bound: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        let biases = (0..outputs)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Self::new(inputs, outputs, weights, biases, activation)
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    fn forward_batch(&self, x: &Matrix) -> Matrix {
        let rows = x.rows();
        let mut out = Matrix::zeros(rows, self.outputs);
        // out (rows x outputs) = x (rows x inputs) * W^T (inputs x outputs)
        matrix::gemm(
            rows,
            self.inputs,
            self.outputs,
            x.data(),
            (self.inputs, 1),
            &self.weights,
            (1, self.inputs),
            0.0,
            out.data_mut(),
            (self.outputs, 1),
        );
        let act = self.activation;
        for row in out.data_mut().chunks_exact_mut(self.outputs) {
            for (z, b) in row.iter_mut().zip(&self.biases) {
                *z = act.apply(*z + b);
            }
        }
        out
    }
}

/// Parameter-shaped container used for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerParams>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerParams {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0_f64, |m, g| m.max(g.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|g| g.is_finite())
    }

    fn matches(&self, net: &DenseNet) -> bool {
        self.layers.len() == net.layers.len()
            && self.layers.iter().zip(&net.layers).all(|(g, l)| {
                g.weights.len() == l.weights.len() && g.biases.len() == l.biases.len()
            })
    }
}

/// Post-activations of every layer for one batch, input included.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("cache holds the input")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<Layer>,
}

impl DenseNet {
    /// Builds a net with `hidden` activations on every layer but the last.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::ArchitectureMismatch(
                "a network needs at least an input and an output size".into(),
            ));
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last { output } else { hidden };
                Layer::uniform(w[0], w[1], act, rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers)
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::ArchitectureMismatch("no layers".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::ArchitectureMismatch(format!(
                    "layer output {} feeds layer input {}",
                    pair[0].outputs, pair[1].inputs
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    pub fn same_architecture(&self, other: &DenseNet) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.inputs == b.inputs && a.outputs == b.outputs && a.activation == b.activation
            })
    }

    /// Re-draws the output layer uniformly in `[-bound, bound]`.
    pub fn reinit_output<R: Rng + ?Sized>(&mut self, bound: f64, rng: &mut R) {
        let last = self.layers.last_mut().expect("non-empty");
        for w in last.weights.iter_mut().chain(last.biases.iter_mut()) {
            *w = rng.random_range(-bound..=bound);
        }
    }

    pub fn params_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|p| p.is_finite()))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let input = Matrix::from_rows(1, x.len(), x.to_vec())?;
        Ok(self.forward_batch(&input)?.into_data())
    }

    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut a = self.layers[0].forward_batch(x);
        check_finite(&a, 0)?;
        for (i, layer) in self.layers.iter().enumerate().skip(1) {
            a = layer.forward_batch(&a);
            check_finite(&a, i)?;
        }
        Ok(a)
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<ForwardCache> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let a = layer.forward_batch(activations.last().expect("non-empty"));
            check_finite(&a, i)?;
            activations.push(a);
        }
        Ok(ForwardCache { activations })
    }

    /// Reverse-mode pass. `grad_out` is d(loss)/d(output) for every batch row.
    ///
    /// Returns the parameter gradients and d(loss)/d(input).
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Matrix) -> Result<(Gradients, Matrix)> {
        let out = cache.output();
        if grad_out.rows() != out.rows() || grad_out.cols() != out.cols() {
            return Err(Error::DimensionMismatch {
                context: "output gradient",
                expected: out.rows() * out.cols(),
                got: grad_out.rows() * grad_out.cols(),
            });
        }
        let rows = out.rows();
        let mut grads = Gradients::zeros_like(self);
        let mut delta = grad_out.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let a_out = &cache.activations[i + 1];
            let a_in = &cache.activations[i];
            let act = layer.activation;
            for (d, a) in delta.data_mut().iter_mut().zip(a_out.data()) {
                *d *= act.derivative_from_output(*a);
            }
            let g = &mut grads.layers[i];
            // dW (outputs x inputs) = delta^T (outputs x rows) * a_in (rows x inputs)
            matrix::gemm(
                layer.outputs,
                rows,
                layer.inputs,
                delta.data(),
                (1, layer.outputs),
                a_in.data(),
                (layer.inputs, 1),
                0.0,
                &mut g.weights,
                (layer.inputs, 1),
            );
            for row in delta.data().chunks_exact(layer.outputs) {
                for (gb, d) in g.biases.iter_mut().zip(row) {
                    *gb += d;
                }
            }
            // d(loss)/d(a_in) (rows x inputs) = delta (rows x outputs) * W (outputs x inputs)
            let mut prev = Matrix::zeros(rows, layer.inputs);
            matrix::gemm(
                rows,
                layer.outputs,
                layer.inputs,
                delta.data(),
                (layer.outputs, 1),
                &layer.weights,
                (layer.inputs, 1),
                0.0,
                prev.data_mut(),
                (layer.inputs, 1),
            );
            if !prev.data().iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { layer: i });
            }
            delta = prev;
        }
        if !grads.is_finite() {
            let layer = grads
                .layers
                .iter()
                .position(|l| !l.weights.iter().chain(&l.biases).all(|g| g.is_finite()))
                .unwrap_or(0);
            return Err(Error::NonFinite { layer });
        }
        Ok((grads, delta))
    }

    /// Gradient of a scalar loss of the batch outputs.
    ///
    /// `loss` returns the loss value together with its derivative with respect
    /// to every output entry.
    pub fn grad<F>(&self, x: &Matrix, loss: F) -> Result<(f64, Gradients)>
    where
        F: FnOnce(&Matrix) -> (f64, Matrix),
    {
        let cache = self.forward_cached(x)?;
        let (value, grad_out) = loss(cache.output());
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss(format!("{value}")));
        }
        let (grads, _) = self.backward(&cache, &grad_out)?;
        Ok((value, grads))
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.input_dim(),
                got: x.cols(),
            });
        }
        Ok(())
    }
}

fn check_finite(a: &Matrix, layer: usize) -> Result<()> {
    if a.data().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { layer })
    }
}

/// Polyak update `target <- tau * main + (1 - tau) * target`.
///
/// `tau = 1` is the hard copy used by periodic DQN target refreshes.
pub fn sync_target(main: &DenseNet, target: &mut DenseNet, tau: f64) -> Result<()> {
    if !main.same_architecture(target) {
        return Err(Error::ArchitectureMismatch(format!(
            "main {:?} vs target {:?}",
            main.layer_sizes(),
            target.layer_sizes()
        )));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidConfig(format!("tau must be in (0, 1], got {tau}")));
    }
    for (t, m) in target.layers.iter_mut().zip(&main.layers) {
        if tau == 1.0 {
            t.weights.copy_from_slice(&m.weights);
            t.biases.copy_from_slice(&m.biases);
            continue;
        }
        for (tw, mw) in t
            .weights
            .iter_mut()
            .chain(t.biases.iter_mut())
            .zip(m.weights.iter().chain(&m.biases))
        {
            *tw = tau * mw + (1.0 - tau) * *tw;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_linear(w: f64) -> DenseNet {
        DenseNet::from_layers(vec![Layer::new(1, 1, vec![w], vec![0.0], Activation::Identity).unwrap()])
            .unwrap()
    }

    #[test]
    fn zero_weights_return_biases() {
        let layer = Layer::new(3, 2, vec![0.0; 6], vec![0.5, -1.5], Activation::Identity).unwrap();
        let net = DenseNet::from_layers(vec![layer]).unwrap();
        assert_eq!(net.forward(&[3.0, -2.0, 7.0]).unwrap(), vec![0.5, -1.5]);
    }

    #[test]
    fn single_linear_layer_is_matrix_vector_product() {
        let w = vec![1.0, 2.0, 3.0, -1.0, 0.5, 4.0];
        let layer = Layer::new(3, 2, w, vec![0.0, 0.0], Activation::Identity).unwrap();
        let net = DenseNet::from_layers(vec![layer]).unwrap();
        let y = net.forward(&[1.0, 1.0, 2.0]).unwrap();
        assert_eq!(y, vec![9.0, 7.5]);
    }

    #[test]
    fn input_dimension_is_checked() {
        let net = scalar_linear(1.0);
        assert!(matches!(
            net.forward(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 1, got: 2, .. })
        ));
    }

    #[test]
    fn linear_derivative() {
        let net = scalar_linear(0.7);
        let x = Matrix::from_rows(1, 1, vec![2.0]).unwrap();
        let (value, g) = net
            .grad(&x, |out| (out.get(0, 0), Matrix::filled(1, 1, 1.0)))
            .unwrap();
        assert!((value - 1.4).abs() < 1e-15);
        assert_eq!(g.layers[0].weights, vec![2.0]);
        assert_eq!(g.layers[0].biases, vec![1.0]);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = DenseNet::new(&[4, 8, 3], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        let x = Matrix::from_rows(2, 4, (0..8).map(|i| i as f64 * 0.1).collect()).unwrap();
        let (_, g) = net.grad(&x, |out| (5.0, Matrix::zeros(out.rows(), out.cols()))).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn non_finite_activation_reports_layer() {
        let l0 = Layer::new(1, 1, vec![1.0], vec![0.0], Activation::Identity).unwrap();
        let l1 = Layer::new(1, 1, vec![f64::INFINITY], vec![0.0], Activation::Identity).unwrap();
        let net = DenseNet::from_layers(vec![l0, l1]).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::NonFinite { layer: 1 })));
    }

    #[test]
    fn sync_hard_copy_and_midpoint() {
        let main = scalar_linear(2.0);
        let mut target = scalar_linear(0.0);
        sync_target(&main, &mut target, 0.5).unwrap();
        assert_eq!(target.layers()[0].weights, vec![1.0]);
        sync_target(&main, &mut target, 1.0).unwrap();
        assert_eq!(target, main);
        sync_target(&main, &mut target, 1.0).unwrap();
        assert_eq!(target, main);
    }

    #[test]
    fn sync_fixed_point_when_equal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let main = DenseNet::new(&[3, 5, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let mut target = main.clone();
        sync_target(&main, &mut target, 0.005).unwrap();
        for (a, b) in target.layers().iter().zip(main.layers()) {
            for (x, y) in a.weights.iter().zip(&b.weights) {
                assert!((x - y).abs() <= 1e-15 * y.abs().max(1.0));
            }
        }
    }

    #[test]
    fn sync_rejects_mismatched_architectures() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = DenseNet::new(&[3, 5, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let mut b = DenseNet::new(&[3, 4, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        assert!(matches!(sync_target(&a, &mut b, 1.0), Err(Error::ArchitectureMismatch(_))));
    }
}
