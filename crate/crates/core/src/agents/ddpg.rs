//! Deterministic policy gradient with target networks and Gaussian exploration.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{replace_network, Agent, Normalizer, UpdateStats};
use crate::nn::{sync_target, Activation, Adam, AdamConfig, DenseNet, Matrix};
use crate::replay::Transition;
use crate::rng::SimRng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DdpgConfig {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub tau: f64,
    /// Exploration noise standard deviation per action component, as a
    /// fraction of that component's scale.
    pub noise_std: Vec<f64>,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            actor_hidden: vec![256, 256],
            critic_hidden: vec![256, 256],
            gamma: 0.99,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            tau: 0.005,
            noise_std: vec![0.1, 0.1, 0.3],
        }
    }
}

impl DdpgConfig {
    pub fn validate(&self, action_dim: usize) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!("gamma must be in [0, 1), got {}", self.gamma)));
        }
        if !(self.actor_lr >= 0.0 && self.critic_lr >= 0.0 && self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::InvalidConfig("need non-negative learning rates and tau in (0, 1]".into()));
        }
        if self.actor_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return Err(Error::InvalidConfig("hidden layer sizes must be positive".into()));
        }
        if self.noise_std.len() != action_dim || self.noise_std.iter().any(|s| s.is_nan() || *s < 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise_std needs {action_dim} non-negative entries, got {:?}",
                self.noise_std
            )));
        }
        Ok(())
    }
}

/// Actor and critic work in normalised units: observations are divided by
/// `obs_scale` and actions live in `[-1, 1]`, multiplied by `action_scale`
/// only when handed to the environment.
#[derive(Debug, Clone)]
pub struct DdpgAgent {
    actor: DenseNet,
    critic: DenseNet,
    actor_target: DenseNet,
    critic_target: DenseNet,
    actor_opt: Adam,
    critic_opt: Adam,
    config: DdpgConfig,
    norm: Normalizer,
    action_scale: Vec<f64>,
    noise: Vec<Normal<f64>>,
}

impl DdpgAgent {
    pub fn new(obs_scale: &[f64], action_scale: &[f64], config: DdpgConfig, rng: &mut SimRng) -> Result<Self> {
        let na = action_scale.len();
        config.validate(na)?;
        if action_scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidConfig(format!("action scales must be positive, got {action_scale:?}")));
        }
        let norm = Normalizer::new(obs_scale)?;
        let no = norm.dim();

        let mut sizes = vec![no];
        sizes.extend(&config.actor_hidden);
        sizes.push(na);
        let mut actor = DenseNet::new(&sizes, Activation::Relu, Activation::Tanh, rng)?;
        actor.reinit_output(3e-3, rng);

        let mut sizes = vec![no + na];
        sizes.extend(&config.critic_hidden);
        sizes.push(1);
        let mut critic = DenseNet::new(&sizes, Activation::Relu, Activation::Identity, rng)?;
        critic.reinit_output(3e-3, rng);

        let noise = config
            .noise_std
            .iter()
            .map(|s| Normal::new(0.0, *s).map_err(|e| Error::InvalidConfig(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor_opt: Adam::new(&actor, AdamConfig::with_lr(config.actor_lr)),
            critic_opt: Adam::new(&critic, AdamConfig::with_lr(config.critic_lr)),
            actor,
            critic,
            config,
            norm,
            action_scale: action_scale.to_vec(),
            noise,
        })
    }

    pub fn actor(&self) -> &DenseNet {
        &self.actor
    }

    pub fn critic(&self) -> &DenseNet {
        &self.critic
    }

    pub fn actor_mut(&mut self) -> &mut DenseNet {
        &mut self.actor
    }

    pub fn critic_mut(&mut self) -> &mut DenseNet {
        &mut self.critic
    }

    pub fn actor_target(&self) -> &DenseNet {
        &self.actor_target
    }

    pub fn critic_target(&self) -> &DenseNet {
        &self.critic_target
    }

    pub fn action_scale(&self) -> &[f64] {
        &self.action_scale
    }

    /// Noise-free action in environment units.
    pub fn deterministic(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let a = self.actor.forward(&self.norm.apply(obs)?)?;
        Ok(a.iter().zip(&self.action_scale).map(|(a, s)| a * s).collect())
    }

    /// Critic value of an (observation, environment-unit action) pair.
    pub fn q_value(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        let mut x = self.norm.apply(obs)?;
        x.extend(self.normalize_action(action)?);
        Ok(self.critic.forward(&x)?[0])
    }

    fn normalize_action(&self, action: &[f64]) -> Result<Vec<f64>> {
        if action.len() != self.action_scale.len() {
            return Err(Error::DimensionMismatch {
                context: "stored action",
                expected: self.action_scale.len(),
                got: action.len(),
            });
        }
        Ok(action.iter().zip(&self.action_scale).map(|(a, s)| a / s).collect())
    }

    fn critic_targets(&self, batch: &[&Transition]) -> Result<Vec<f64>> {
        let next = self.norm.batch(batch.iter().map(|t| t.next_obs.as_slice()))?;
        let a_next = self.actor_target.forward_batch(&next)?;
        let q_next = self.critic_target.forward_batch(&next.hstack(&a_next)?)?;
        Ok(batch
            .iter()
            .zip(q_next.data())
            .map(|(t, q)| if t.terminal { t.reward } else { t.reward + self.config.gamma * q })
            .collect())
    }

    fn critic_step(&mut self, obs: &Matrix, batch: &[&Transition]) -> Result<f64> {
        let y = self.critic_targets(batch)?;
        let mut actions = Vec::with_capacity(batch.len() * self.action_scale.len());
        for t in batch {
            actions.extend(self.normalize_action(&t.action)?);
        }
        let a = Matrix::from_rows(batch.len(), self.action_scale.len(), actions)?;
        let x = obs.hstack(&a)?;
        let b = batch.len() as f64;
        let (loss, grads) = self.critic.grad(&x, |q| {
            let mut g = Matrix::zeros(q.rows(), 1);
            let mut loss = 0.0;
            for (r, target) in y.iter().enumerate() {
                let err = q.get(r, 0) - target;
                loss += err * err / b;
                g.set(r, 0, 2.0 * err / b);
            }
            (loss, g)
        })?;
        self.critic_opt.step(&mut self.critic, &grads)?;
        if !self.critic.params_finite() {
            return Err(Error::NonFiniteLoss("critic parameters after update".into()));
        }
        Ok(loss)
    }

    /// Ascends the critic's mean value of the actor's actions.
    fn actor_step(&mut self, obs: &Matrix) -> Result<f64> {
        let no = obs.cols();
        let b = obs.rows() as f64;
        let actor_cache = self.actor.forward_cached(obs)?;
        let x = obs.hstack(actor_cache.output())?;
        let critic_cache = self.critic.forward_cached(&x)?;
        let objective = critic_cache.output().data().iter().sum::<f64>() / b;
        let grad_q = Matrix::filled(obs.rows(), 1, -1.0 / b);
        let (_, dx) = self.critic.backward(&critic_cache, &grad_q)?;
        let da = dx.columns(no, dx.cols());
        let (grads, _) = self.actor.backward(&actor_cache, &da)?;
        self.actor_opt.step(&mut self.actor, &grads)?;
        if !self.actor.params_finite() {
            return Err(Error::NonFiniteLoss("actor parameters after update".into()));
        }
        Ok(objective)
    }
}

impl Agent for DdpgAgent {
    fn act(&mut self, obs: &[f64], rng: &mut SimRng, explore: bool) -> Result<Vec<f64>> {
        let mut a = self.actor.forward(&self.norm.apply(obs)?)?;
        if explore {
            for (v, n) in a.iter_mut().zip(&self.noise) {
                *v = (*v + n.sample(rng)).clamp(-1.0, 1.0);
            }
        }
        Ok(a.iter().zip(&self.action_scale).map(|(a, s)| a * s).collect())
    }

    fn update(&mut self, batch: &[&Transition]) -> Result<UpdateStats> {
        if batch.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let obs = self.norm.batch(batch.iter().map(|t| t.obs.as_slice()))?;
        let critic_loss = self.critic_step(&obs, batch)?;
        let objective = self.actor_step(&obs)?;
        sync_target(&self.actor, &mut self.actor_target, self.config.tau)?;
        sync_target(&self.critic, &mut self.critic_target, self.config.tau)?;
        Ok(UpdateStats {
            critic_loss,
            actor_objective: Some(objective),
        })
    }

    fn networks(&self) -> Vec<(&'static str, &DenseNet)> {
        vec![("actor", &self.actor), ("critic", &self.critic)]
    }

    fn set_network(&mut self, name: &str, net: DenseNet) -> Result<()> {
        match name {
            "actor" => {
                replace_network(&mut self.actor, net, name)?;
                self.actor_target = self.actor.clone();
            }
            "critic" => {
                replace_network(&mut self.critic, net, name)?;
                self.critic_target = self.critic.clone();
            }
            other => return Err(Error::Checkpoint(format!("DDPG has no network named {other}"))),
        }
        Ok(())
    }
}
