//! Off-policy learners consuming replay minibatches.

pub mod ddpg;
pub mod dqn;

pub use ddpg::{DdpgAgent, DdpgConfig};
pub use dqn::{DqnAgent, DqnConfig, EpsilonSchedule};

use crate::nn::{DenseNet, Matrix};
use crate::replay::Transition;
use crate::rng::SimRng;
use crate::{Error, Result};

/// Losses reported by one optimisation step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    /// Mean squared TD error of the value network.
    pub critic_loss: f64,
    /// Mean critic value of the policy's actions, when there is a policy network.
    pub actor_objective: Option<f64>,
}

pub trait Agent {
    /// Encoded action for a goal-conditioned observation.
    fn act(&mut self, obs: &[f64], rng: &mut SimRng, explore: bool) -> Result<Vec<f64>>;

    /// Called before every training epoch; drives exploration schedules.
    fn begin_epoch(&mut self, _epoch: usize, _epochs: usize) {}

    fn update(&mut self, batch: &[&Transition]) -> Result<UpdateStats>;

    /// Named networks that define the policy, for checkpointing.
    fn networks(&self) -> Vec<(&'static str, &DenseNet)>;

    /// Replaces a named network, e.g. after loading a checkpoint.
    fn set_network(&mut self, name: &str, net: DenseNet) -> Result<()>;
}

/// Divides every observation by a fixed per-component scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    inv: Vec<f64>,
}

impl Normalizer {
    pub fn new(scale: &[f64]) -> Result<Self> {
        if scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidConfig(format!("observation scales must be positive, got {scale:?}")));
        }
        Ok(Self {
            inv: scale.iter().map(|s| 1.0 / s).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.inv.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inv.len() {
            return Err(Error::DimensionMismatch {
                context: "observation",
                expected: self.inv.len(),
                got: x.len(),
            });
        }
        Ok(x.iter().zip(&self.inv).map(|(v, s)| v * s).collect())
    }

    pub fn batch<'a, I: IntoIterator<Item = &'a [f64]>>(&self, rows: I) -> Result<Matrix> {
        let mut data = Vec::new();
        let mut n = 0;
        for r in rows {
            data.extend(self.apply(r)?);
            n += 1;
        }
        Matrix::from_rows(n, self.inv.len(), data)
    }
}

pub(crate) fn replace_network(slot: &mut DenseNet, net: DenseNet, name: &str) -> Result<()> {
    if !slot.same_architecture(&net) {
        return Err(Error::ArchitectureMismatch(format!(
            "{name}: expected layers {:?}, checkpoint has {:?}",
            slot.layer_sizes(),
            net.layer_sizes()
        )));
    }
    *slot = net;
    Ok(())
}
