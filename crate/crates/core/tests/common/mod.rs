//! Measurements shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use ber_core::env::GoalEnv;
use ber_core::nn::{Activation, DenseNet, Matrix};
use ber_core::rng::{stream, Stream};
use ber_core::snake::{PhysicalParams, SnakeBody, SnakeConfig, SnakeEnv, Vec2, WaveAction};
use rand::Rng;

pub const SEGMENTS: usize = 4;

pub fn snake_env(physics: PhysicalParams) -> SnakeEnv {
    SnakeEnv::new(SnakeConfig {
        physics,
        ..SnakeConfig::default()
    })
    .unwrap()
}

pub fn rotate(phi: f64, p: Vec2) -> Vec2 {
    let (s, c) = phi.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

pub fn arc_length(points: &[Vec2]) -> f64 {
    points
        .windows(2)
        .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
        .sum()
}

fn param(net: &mut DenseNet, layer: usize, weights: bool, i: usize) -> &mut f64 {
    let l = &mut net.layers_mut()[layer];
    if weights {
        &mut l.weights[i]
    } else {
        &mut l.biases[i]
    }
}

/// Largest relative error between analytic and central-difference gradients
/// of a random net under a random loss.
pub fn gradient_probe(seed: u64) -> f64 {
    let mut rng = stream(seed, Stream::Init);
    let depth = rng.random_range(1..=3);
    let mut sizes = vec![rng.random_range(1..=5)];
    for _ in 0..depth {
        sizes.push(rng.random_range(1..=6));
    }
    let acts = [Activation::Tanh, Activation::Relu, Activation::Identity];
    let hidden = acts[rng.random_range(0..3)];
    let output = acts[rng.random_range(0..3)];
    let mut net = DenseNet::new(&sizes, hidden, output, &mut rng).unwrap();
    let batch = rng.random_range(1..=4);
    let x = Matrix::from_rows(batch, sizes[0], (0..batch * sizes[0]).map(|_| rng.random_range(-2.0..2.0)).collect())
        .unwrap();
    let out_dim = *sizes.last().unwrap();
    let targets: Vec<f64> = (0..batch * out_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let weights: Vec<f64> = (0..batch * out_dim).map(|_| rng.random_range(0.1..2.0)).collect();
    // weighted squared error plus a cubic term, so second derivatives are not constant
    let loss = |y: &Matrix| -> (f64, Matrix) {
        let mut g = Matrix::zeros(y.rows(), y.cols());
        let mut value = 0.0;
        for (i, ((v, t), w)) in y.data().iter().zip(&targets).zip(&weights).enumerate() {
            let e = v - t;
            value += w * e * e + 0.1 * v * v * v;
            g.data_mut()[i] = 2.0 * w * e + 0.3 * v * v;
        }
        (value, g)
    };
    let (_, grads) = net.grad(&x, loss).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for l in 0..net.layers().len() {
        for w in [true, false] {
            let count = if w { net.layers()[l].weights.len() } else { net.layers()[l].biases.len() };
            for i in 0..count {
                let orig = *param(&mut net, l, w, i);
                *param(&mut net, l, w, i) = orig + h;
                let plus = loss(&net.forward_batch(&x).unwrap()).0;
                *param(&mut net, l, w, i) = orig - h;
                let minus = loss(&net.forward_batch(&x).unwrap()).0;
                *param(&mut net, l, w, i) = orig;
                let numeric = (plus - minus) / (2.0 * h);
                let g = &grads.layers[l];
                let analytic = if w { g.weights[i] } else { g.biases[i] };
                let scale = analytic.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max((analytic - numeric).abs() / scale);
            }
        }
    }
    worst
}

/// Measured deceleration of a straight body sliding forward from `v0`, and the
/// Coulomb rate `g mu_f` it should match.
pub fn straight_slide(v0: f64) -> (f64, f64) {
    let params = PhysicalParams::default();
    let env = snake_env(params.clone());
    let body = SnakeBody {
        com_vel: [v0, 0.0],
        ..SnakeBody::at_rest([0.0, 0.0], 0.0, vec![0.0; SEGMENTS])
    };
    let rate = params.gravity_m_per_s2 * params.mu_forward;
    // stop well before the regularisation band around zero speed
    let t = 0.8 * v0 / rate;
    let (end, _) = env
        .simulator()
        .integrate(
            &body,
            t,
            |_, k, r| {
                k.fill(0.0);
                r.fill(0.0);
            },
            false,
        )
        .unwrap();
    ((v0 - end.com_vel[0]) / t, rate)
}

fn one_period_displacement(physics: PhysicalParams) -> Vec2 {
    let env = snake_env(physics);
    let start = env.reset(&[0.0, 0.0]);
    let end = env.step(&start, &WaveAction::new(0.0, 0.0, 1).unwrap()).unwrap();
    end.body.com
}

fn relative_change(a: Vec2, b: Vec2) -> f64 {
    let diff = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    diff / (b[0] * b[0] + b[1] * b[1]).sqrt()
}

/// Relative change of the one-period COM displacement when halving the grid
/// (401 to 201 samples) and when doubling the substep (1 ms to 2 ms).
pub fn convergence_changes() -> (f64, f64) {
    let base = PhysicalParams::default();
    let fine = one_period_displacement(base.clone());
    let coarse_grid = one_period_displacement(PhysicalParams { samples: 201, ..base.clone() });
    let coarse_dt = one_period_displacement(PhysicalParams { dt_s: 2e-3, ..base });
    (relative_change(coarse_grid, fine), relative_change(coarse_dt, fine))
}

/// COM path of a constant action program at the given fidelity.
pub fn constant_program_path(physics: PhysicalParams, action: WaveAction, periods: usize) -> (Vec<Vec2>, f64) {
    let env = snake_env(physics);
    let start = env.reset(&[0.0, 0.0]);
    let (_, samples) = env.rollout(&start, &vec![action; periods]).unwrap();
    (samples.iter().map(|s| s.com).collect(), start.body.heading)
}
