//! Goal-conditioned environment contract and the reversibility diagnostic.

pub mod bitflip;

use rand::Rng;
use serde::Serialize;

use crate::Result;

/// Reward for one transition and whether the goal was reached on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReward {
    pub reward: f64,
    pub success: bool,
}

/// Per-step diagnostics feeding the training metrics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Progress {
    /// Remaining distance relative to the initial distance to the goal.
    pub distance_ratio: f64,
    /// Folded bearing error in radians; zero for environments without headings.
    pub deflection: f64,
}

/// A deterministic goal-conditioned environment usable by the BER trainer.
///
/// Goals double as start specifications: a backward trial swaps the start and
/// the goal, so [`GoalEnv::reset`] must be able to place the agent at any goal.
pub trait GoalEnv {
    type State: Clone + std::fmt::Debug;
    type Goal: Clone + std::fmt::Debug + PartialEq;
    type Action: Clone + std::fmt::Debug;

    /// Length of [`GoalEnv::observe`] vectors.
    fn obs_dim(&self) -> usize;
    /// Length of [`GoalEnv::encode_action`] vectors.
    fn action_dim(&self) -> usize;
    /// Step cap of one trial.
    fn max_steps(&self) -> usize;

    /// Draws `(goal, start)` for the given training epoch.
    fn sample_task<R: Rng + ?Sized>(&self, rng: &mut R, epoch: usize, epochs: usize) -> (Self::Goal, Self::Goal);

    fn reset(&self, start: &Self::Goal) -> Self::State;

    fn step(&self, state: &Self::State, action: &Self::Action) -> Result<Self::State>;

    /// `r(s, a, s', g)`. `origin` is the first state of the (possibly reversed)
    /// trajectory the transition belongs to; distance-normalised rewards use it.
    fn reward(
        &self,
        origin: &Self::State,
        state: &Self::State,
        action: &Self::Action,
        next: &Self::State,
        goal: &Self::Goal,
    ) -> StepReward;

    fn is_success(&self, state: &Self::State, goal: &Self::Goal) -> bool;

    /// The reversal function `ã = f(s, a, s')`.
    fn reverse_action(&self, state: &Self::State, action: &Self::Action, next: &Self::State) -> Self::Action;

    /// The composition `s ⊙ g` fed to the networks.
    fn observe(&self, state: &Self::State, goal: &Self::Goal) -> Vec<f64>;

    /// The goal that `state` satisfies; used as the virtual goal of reversed trajectories.
    fn achieved_goal(&self, state: &Self::State) -> Self::Goal;

    /// Physical sub-state over which reversibility is measured.
    fn physical_state(&self, state: &Self::State) -> Vec<f64>;

    /// Uniformly random action, for exploration-free diagnostics.
    fn random_action<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Action;

    fn encode_action(&self, action: &Self::Action) -> Vec<f64>;

    fn decode_action(&self, encoded: &[f64]) -> Result<Self::Action>;

    fn progress(&self, origin: &Self::State, state: &Self::State, goal: &Self::Goal) -> Progress;

    /// Typical magnitude of each observation component, used to normalise network inputs.
    fn observation_scale(&self) -> Vec<f64> {
        vec![1.0; self.obs_dim()]
    }

    /// Bounds `|a_k| <= scale_k` of continuous encoded actions.
    fn action_scale(&self) -> Vec<f64> {
        vec![1.0; self.action_dim()]
    }

    /// States `s_T, ..., s_0` of a reversed trajectory.
    ///
    /// `reversed_actions[k]` is the action taken out of reversed state `k`.
    /// Environments whose states carry action histories rebuild them here.
    fn reversed_states(&self, states: &[Self::State], reversed_actions: &[Self::Action]) -> Vec<Self::State> {
        let _ = reversed_actions;
        states.iter().rev().cloned().collect()
    }
}

/// Displacements at or below this norm are skipped by the reversibility check.
pub const MIN_DISPLACEMENT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Defect {
    /// `‖s_b − s‖ / ‖s' − s‖`.
    Ratio(f64),
    /// `‖s' − s‖ <= MIN_DISPLACEMENT`.
    Skipped,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Replays `f(s, a, s')` from `s'` and measures how close it lands to `s`.
pub fn reversibility_defect<E: GoalEnv>(
    env: &E,
    state: &E::State,
    action: &E::Action,
    next: &E::State,
) -> Result<Defect> {
    let s = env.physical_state(state);
    let s_next = env.physical_state(next);
    let outbound = distance(&s_next, &s);
    if outbound <= MIN_DISPLACEMENT {
        return Ok(Defect::Skipped);
    }
    let reversed = env.reverse_action(state, action, next);
    let back = env.step(next, &reversed)?;
    Ok(Defect::Ratio(distance(&env.physical_state(&back), &s) / outbound))
}

/// Defects of `samples` random transitions. Each starts from a task start
/// advanced by up to `warmup` random actions, so that states other than the
/// rest pose are covered.
pub fn sample_reversibility<E: GoalEnv, R: Rng + ?Sized>(
    env: &E,
    samples: usize,
    warmup: usize,
    rng: &mut R,
) -> Result<ReversibilityReport> {
    let mut defects = Vec::with_capacity(samples);
    for _ in 0..samples {
        let (_, start) = env.sample_task(rng, 0, 1);
        let mut s = env.reset(&start);
        for _ in 0..rng.random_range(0..=warmup) {
            s = env.step(&s, &env.random_action(rng))?;
        }
        let a = env.random_action(rng);
        let next = env.step(&s, &a)?;
        defects.push(reversibility_defect(env, &s, &a, &next)?);
    }
    Ok(ReversibilityReport::from_defects(defects))
}

/// Distribution of reversibility defects over a set of transitions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReversibilityReport {
    pub ratios: Vec<f64>,
    pub skipped: usize,
    pub max: f64,
    pub median: f64,
    pub p90: f64,
    pub p95: f64,
    pub fraction_below_one: f64,
}

impl ReversibilityReport {
    pub fn from_defects<I: IntoIterator<Item = Defect>>(defects: I) -> Self {
        let mut ratios = Vec::new();
        let mut skipped = 0;
        for d in defects {
            match d {
                Defect::Ratio(k) => ratios.push(k),
                Defect::Skipped => skipped += 1,
            }
        }
        let mut sorted = ratios.clone();
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| -> f64 {
            if sorted.is_empty() {
                return 0.0;
            }
            let idx = ((sorted.len() - 1) as f64 * p).round() as usize;
            sorted[idx]
        };
        let below = ratios.iter().filter(|k| **k < 1.0).count();
        Self {
            max: sorted.last().copied().unwrap_or(0.0),
            median: q(0.5),
            p90: q(0.9),
            p95: q(0.95),
            fraction_below_one: if ratios.is_empty() {
                0.0
            } else {
                below as f64 / ratios.len() as f64
            },
            ratios,
            skipped,
        }
    }
}
