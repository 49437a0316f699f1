use serde::{Deserialize, Serialize};

use super::{DenseNet, Gradients};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer state for one network.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Gradients,
    second: Gradients,
}

impl Adam {
    pub fn new(net: &DenseNet, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Gradients::zeros_like(net),
            second: Gradients::zeros_like(net),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected Adam update to `net`.
    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients) -> Result<()> {
        if !grads.matches(net) || !self.first.matches(net) {
            return Err(Error::ArchitectureMismatch(
                "gradient/optimizer shapes do not match the network".into(),
            ));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((layer, g), m), v) in net
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.first.layers)
            .zip(&mut self.second.layers)
        {
            let params = layer.weights.iter_mut().chain(layer.biases.iter_mut());
            let gs = g.weights.iter().chain(&g.biases);
            let ms = m.weights.iter_mut().chain(m.biases.iter_mut());
            let vs = v.weights.iter_mut().chain(v.biases.iter_mut());
            for (((p, g), m), v) in params.zip(gs).zip(ms).zip(vs) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Layer, Matrix};

    fn scalar(w: f64, b: f64) -> DenseNet {
        DenseNet::from_layers(vec![Layer::new(1, 1, vec![w], vec![b], Activation::Identity).unwrap()])
            .unwrap()
    }

    #[test]
    fn zero_gradient_from_fresh_state_is_a_fixed_point() {
        let mut net = scalar(0.3, -0.2);
        let before = net.clone();
        let mut opt = Adam::new(&net, AdamConfig::default());
        let zeros = Gradients::zeros_like(&net);
        for _ in 0..5 {
            opt.step(&mut net, &zeros).unwrap();
        }
        assert_eq!(net, before);
        assert_eq!(opt.steps(), 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate_times_sign() {
        let mut net = scalar(1.0, 1.0);
        let mut opt = Adam::new(&net, AdamConfig::with_lr(0.01));
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].weights[0] = 3.7;
        g.layers[0].biases[0] = -0.02;
        opt.step(&mut net, &g).unwrap();
        // closed form: lr * g / (|g| + eps)
        let dw = 0.01 * 3.7 / (3.7 + 1e-8);
        let db = 0.01 * -0.02 / (0.02 + 1e-8);
        assert!((net.layers()[0].weights[0] - (1.0 - dw)).abs() < 1e-15);
        assert!((net.layers()[0].biases[0] - (1.0 - db)).abs() < 1e-15);
    }

    #[test]
    fn quadratic_descent_is_monotone_after_burn_in() {
        // minimise x^2 where x is the single bias of a zero-input layer
        let mut net = scalar(0.0, 2.0);
        let mut opt = Adam::new(&net, AdamConfig::with_lr(0.01));
        let x = Matrix::from_rows(1, 1, vec![0.0]).unwrap();
        let mut trace = Vec::new();
        for _ in 0..150 {
            let (_, g) = net
                .grad(&x, |out| {
                    let y = out.get(0, 0);
                    (y * y, Matrix::filled(1, 1, 2.0 * y))
                })
                .unwrap();
            opt.step(&mut net, &g).unwrap();
            trace.push(net.layers()[0].biases[0].abs());
        }
        // burn-in: the first 10 steps
        for w in trace[10..].windows(2) {
            assert!(w[1] < w[0], "|x| did not decrease: {} -> {}", w[0], w[1]);
        }
        assert!(*trace.last().unwrap() < 1.0);
    }
}
