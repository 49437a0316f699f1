//! Deep Q-learning over a discrete action set.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{replace_network, Agent, Normalizer, UpdateStats};
use crate::nn::{sync_target, Activation, Adam, AdamConfig, DenseNet, Matrix};
use crate::replay::Transition;
use crate::rng::SimRng;
use crate::{Error, Result};

/// Linear decay from `start` to `end` over the first `fraction` of training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub fraction: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.05,
            fraction: 0.3,
        }
    }
}

impl EpsilonSchedule {
    pub fn constant(eps: f64) -> Self {
        Self {
            start: eps,
            end: eps,
            fraction: 0.0,
        }
    }

    pub fn value(&self, epoch: usize, epochs: usize) -> f64 {
        let span = self.fraction * epochs as f64;
        if span <= 0.0 || epoch as f64 >= span {
            return self.end;
        }
        self.start + (self.end - self.start) * epoch as f64 / span
    }

    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if !(unit.contains(&self.start) && unit.contains(&self.end) && unit.contains(&self.fraction)) {
            return Err(Error::InvalidConfig(format!("epsilon schedule out of range: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DqnConfig {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub lr: f64,
    /// Polyak rate of the per-update target refresh; `1` is a hard copy.
    pub target_tau: f64,
    /// Refresh the target every this many updates.
    pub target_every: usize,
    #[serde(default)]
    pub epsilon: EpsilonSchedule,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256],
            gamma: 0.98,
            lr: 1e-3,
            target_tau: 0.005,
            target_every: 1,
            epsilon: EpsilonSchedule::default(),
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) && self.gamma != 0.0 {
            return Err(Error::InvalidConfig(format!("gamma must be in [0, 1), got {}", self.gamma)));
        }
        if !(self.lr >= 0.0 && self.target_tau > 0.0 && self.target_tau <= 1.0 && self.target_every > 0) {
            return Err(Error::InvalidConfig("need lr >= 0, tau in (0, 1] and target_every > 0".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidConfig("hidden layer sizes must be positive".into()));
        }
        self.epsilon.validate()
    }
}

#[derive(Debug, Clone)]
pub struct DqnAgent {
    q: DenseNet,
    target: DenseNet,
    opt: Adam,
    config: DqnConfig,
    norm: Normalizer,
    epsilon: f64,
    updates: u64,
}

impl DqnAgent {
    pub fn new(obs_scale: &[f64], actions: usize, config: DqnConfig, rng: &mut SimRng) -> Result<Self> {
        config.validate()?;
        let norm = Normalizer::new(obs_scale)?;
        let mut sizes = vec![norm.dim()];
        sizes.extend(&config.hidden);
        sizes.push(actions);
        let q = DenseNet::new(&sizes, Activation::Relu, Activation::Identity, rng)?;
        let target = q.clone();
        let opt = Adam::new(&q, AdamConfig::with_lr(config.lr));
        Ok(Self {
            q,
            target,
            opt,
            epsilon: config.epsilon.start,
            config,
            norm,
            updates: 0,
        })
    }

    pub fn q_net(&self) -> &DenseNet {
        &self.q
    }

    pub fn q_net_mut(&mut self) -> &mut DenseNet {
        &mut self.q
    }

    pub fn target_net(&self) -> &DenseNet {
        &self.target
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn set_epsilon(&mut self, eps: f64) {
        self.epsilon = eps.clamp(0.0, 1.0);
    }

    pub fn actions(&self) -> usize {
        self.q.output_dim()
    }

    pub fn q_values(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.q.forward(&self.norm.apply(obs)?)
    }

    /// ε-greedy choice of a zero-based action index; ties go to the lowest index.
    pub fn select(&self, obs: &[f64], rng: &mut SimRng, explore: bool) -> Result<usize> {
        if explore && rng.random_bool(self.epsilon) {
            return Ok(rng.random_range(0..self.actions()));
        }
        Ok(argmax(&self.q_values(obs)?))
    }

    /// `y = r` for terminal transitions, `r + γ max_a Q_targ(s', a)` otherwise.
    pub fn targets(&self, batch: &[&Transition]) -> Result<Vec<f64>> {
        let next = self.norm.batch(batch.iter().map(|t| t.next_obs.as_slice()))?;
        let q_next = self.target.forward_batch(&next)?;
        Ok(batch
            .iter()
            .zip(q_next.row_iter())
            .map(|(t, q)| {
                if t.terminal {
                    t.reward
                } else {
                    t.reward + self.config.gamma * q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                }
            })
            .collect())
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn action_index(t: &Transition, actions: usize) -> Result<usize> {
    let a = t.action.first().copied().unwrap_or(-1.0);
    if !(a >= 0.0 && a < actions as f64 && a.fract() == 0.0) {
        return Err(Error::InvalidAction(format!("stored action {a} is not an index below {actions}")));
    }
    Ok(a as usize)
}

impl Agent for DqnAgent {
    fn act(&mut self, obs: &[f64], rng: &mut SimRng, explore: bool) -> Result<Vec<f64>> {
        Ok(vec![self.select(obs, rng, explore)? as f64])
    }

    fn begin_epoch(&mut self, epoch: usize, epochs: usize) {
        self.epsilon = self.config.epsilon.value(epoch, epochs);
    }

    fn update(&mut self, batch: &[&Transition]) -> Result<UpdateStats> {
        if batch.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let n = self.actions();
        let y = self.targets(batch)?;
        let idx = batch.iter().map(|t| action_index(t, n)).collect::<Result<Vec<_>>>()?;
        let x = self.norm.batch(batch.iter().map(|t| t.obs.as_slice()))?;
        let b = batch.len() as f64;
        let (loss, grads) = self.q.grad(&x, |out| {
            let mut g = Matrix::zeros(out.rows(), out.cols());
            let mut loss = 0.0;
            for (r, (a, target)) in idx.iter().zip(&y).enumerate() {
                let err = out.get(r, *a) - target;
                loss += err * err / b;
                g.set(r, *a, 2.0 * err / b);
            }
            (loss, g)
        })?;
        self.opt.step(&mut self.q, &grads)?;
        if !self.q.params_finite() {
            return Err(Error::NonFiniteLoss("Q-network parameters after update".into()));
        }
        self.updates += 1;
        if self.updates.is_multiple_of(self.config.target_every as u64) {
            sync_target(&self.q, &mut self.target, self.config.target_tau)?;
        }
        Ok(UpdateStats {
            critic_loss: loss,
            actor_objective: None,
        })
    }

    fn networks(&self) -> Vec<(&'static str, &DenseNet)> {
        vec![("q", &self.q)]
    }

    fn set_network(&mut self, name: &str, net: DenseNet) -> Result<()> {
        match name {
            "q" => {
                replace_network(&mut self.q, net, name)?;
                self.target = self.q.clone();
                Ok(())
            }
            other => Err(Error::Checkpoint(format!("DQN has no network named {other}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Layer;
    use crate::replay::Origin;
    use crate::rng::{stream, Stream};

    fn agent(actions: usize) -> DqnAgent {
        DqnAgent::new(&[1.0; 4], actions, DqnConfig::default(), &mut stream(0, Stream::Init)).unwrap()
    }

    fn set_q_table(a: &mut DqnAgent, q: &[f64]) {
        // single linear layer with zero weights: outputs are the biases
        let layer = Layer::new(4, q.len(), vec![0.0; 4 * q.len()], q.to_vec(), Activation::Identity).unwrap();
        a.q = DenseNet::from_layers(vec![layer]).unwrap();
    }

    #[test]
    fn greedy_returns_argmax_with_lowest_tie() {
        let mut a = agent(4);
        set_q_table(&mut a, &[0.1, 0.7, 0.7, -1.0]);
        let mut rng = stream(1, Stream::Explore);
        assert_eq!(a.select(&[0.0; 4], &mut rng, false).unwrap(), 1);
        set_q_table(&mut a, &[100.1, 100.7, 100.7, 99.0]);
        assert_eq!(a.select(&[0.0; 4], &mut rng, false).unwrap(), 1);
        set_q_table(&mut a, &[3.0 * 0.1 + 2.0, 3.0 * 0.7 + 2.0, 3.0 * 0.7 + 2.0, -1.0]);
        assert_eq!(a.select(&[0.0; 4], &mut rng, false).unwrap(), 1);
    }

    #[test]
    fn full_exploration_is_uniform() {
        // chi-square, 4 actions, 3 dof, critical value 11.345 at 0.01
        let mut a = agent(4);
        a.set_epsilon(1.0);
        let mut rng = stream(2, Stream::Explore);
        let mut counts = [0usize; 4];
        let draws = 100_000;
        for _ in 0..draws {
            counts[a.select(&[0.0; 4], &mut rng, true).unwrap()] += 1;
        }
        let e = draws as f64 / 4.0;
        let chi2: f64 = counts.iter().map(|c| (*c as f64 - e).powi(2) / e).sum();
        assert!(chi2 < 11.345, "{chi2}");
    }

    #[test]
    fn terminal_and_zero_discount_targets() {
        let mut a = agent(2);
        let t = Transition::new(vec![1.0; 4], vec![0.0], 0.0, vec![0.5; 4], true, Origin::ForwardStandard).unwrap();
        assert_eq!(a.targets(&[&t]).unwrap(), vec![0.0]);
        a.config.gamma = 0.0;
        let t2 = Transition::new(vec![1.0; 4], vec![1.0], -1.0, vec![0.5; 4], false, Origin::ForwardStandard).unwrap();
        assert_eq!(a.targets(&[&t2]).unwrap(), vec![-1.0]);
    }

    #[test]
    fn epsilon_schedule() {
        let s = EpsilonSchedule::default();
        assert_eq!(s.value(0, 100), 1.0);
        assert!((s.value(15, 100) - 0.525).abs() < 1e-12);
        assert_eq!(s.value(30, 100), 0.05);
        assert_eq!(s.value(99, 100), 0.05);
        assert_eq!(EpsilonSchedule::constant(0.2).value(0, 10), 0.2);
    }

    #[test]
    fn rejects_bad_stored_action() {
        let mut a = agent(2);
        let t = Transition::new(vec![1.0; 4], vec![2.0], 0.0, vec![0.5; 4], false, Origin::ForwardStandard).unwrap();
        assert!(matches!(a.update(&[&t]), Err(Error::InvalidAction(_))));
    }
}
