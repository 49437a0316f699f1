//! Training loop: forward trials, back-stepping construction, backward trials
//! and mixed-buffer optimisation.

pub mod metrics;
pub mod targets;

pub use metrics::{EpochMetrics, WindowedSeries};

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::Agent;
use crate::env::{GoalEnv, Progress, StepReward};
use crate::replay::{sample_minibatch, Origin, ReplayBuffer, ReplaySchedule, Transition};
use crate::rng::{stream, SimRng, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    pub epochs: usize,
    /// Optimisation steps per epoch.
    pub opt_steps: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Build back-stepping transitions and run backward trials.
    pub ber: bool,
    pub replay: ReplaySchedule,
    pub window: usize,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            epochs: 10_000,
            opt_steps: 40,
            batch_size: 128,
            buffer_capacity: 1_000_000,
            ber: true,
            replay: ReplaySchedule::off(),
            window: 50,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.opt_steps == 0 || self.batch_size == 0 || self.buffer_capacity == 0 || self.window == 0 {
            return Err(Error::InvalidConfig(
                "epochs, opt_steps, batch_size, buffer_capacity and window must be positive".into(),
            ));
        }
        self.replay.validate()
    }
}

/// States, actions and rewards of one rolled-out trial.
#[derive(Debug, Clone)]
pub struct Trajectory<E: GoalEnv> {
    pub goal: E::Goal,
    /// `s_0 ..= s_T`.
    pub states: Vec<E::State>,
    pub actions: Vec<E::Action>,
    pub rewards: Vec<StepReward>,
    /// Progress after each step.
    pub progress: Vec<Progress>,
    /// The start already satisfied the goal.
    pub started_at_goal: bool,
}

impl<E: GoalEnv> Trajectory<E> {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn success(&self) -> bool {
        self.started_at_goal || self.rewards.last().is_some_and(|r| r.success)
    }

    pub fn episode_return(&self) -> f64 {
        self.rewards.iter().map(|r| r.reward).sum()
    }

    pub fn avg_distance(&self) -> f64 {
        mean(self.progress.iter().map(|p| p.distance_ratio))
    }

    pub fn avg_deflection(&self) -> f64 {
        mean(self.progress.iter().map(|p| p.deflection))
    }

    /// Standard transitions `(s_t ⊙ g, a_t, r_t, s_{t+1} ⊙ g)`.
    pub fn transitions(&self, env: &E, origin: Origin) -> Result<Vec<Transition>> {
        (0..self.len())
            .map(|t| {
                Transition::new(
                    env.observe(&self.states[t], &self.goal),
                    env.encode_action(&self.actions[t]),
                    self.rewards[t].reward,
                    env.observe(&self.states[t + 1], &self.goal),
                    self.rewards[t].success,
                    origin,
                )
            })
            .collect()
    }
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    if n == 0 {
        0.0
    } else {
        values.sum::<f64>() / n as f64
    }
}

/// Rolls the agent from `start` towards `goal` until success or the step cap.
pub fn run_trial<E: GoalEnv, A: Agent>(
    env: &E,
    agent: &mut A,
    goal: &E::Goal,
    start: &E::Goal,
    rng: &mut SimRng,
    explore: bool,
) -> Result<Trajectory<E>> {
    let s0 = env.reset(start);
    let mut traj = Trajectory {
        goal: goal.clone(),
        started_at_goal: env.is_success(&s0, goal),
        states: vec![s0],
        actions: Vec::new(),
        rewards: Vec::new(),
        progress: Vec::new(),
    };
    if traj.started_at_goal {
        return Ok(traj);
    }
    for _ in 0..env.max_steps() {
        let s = traj.states.last().expect("trajectory holds s0");
        let encoded = agent.act(&env.observe(s, goal), rng, explore)?;
        let a = env.decode_action(&encoded)?;
        let next = env.step(s, &a)?;
        let r = env.reward(&traj.states[0], s, &a, &next, goal);
        traj.progress.push(env.progress(&traj.states[0], &next, goal));
        traj.states.push(next);
        traj.actions.push(a);
        traj.rewards.push(r);
        if r.success {
            break;
        }
    }
    Ok(traj)
}

/// Back-stepping transitions `(s_{t+1} ⊙ s_0, ã_t, r_b, s_t ⊙ s_0)` of a trajectory,
/// ordered along the reversed path from `s_T` back to `s_0`.
///
/// As in a forward trial, the first transition that reaches the virtual goal
/// `s_0` is terminal and ends the sequence. For a path that never revisits
/// the neighbourhood of `s_0` this is one transition per forward step.
pub fn construct_backstep<E: GoalEnv>(env: &E, traj: &Trajectory<E>) -> Result<Vec<Transition>> {
    let t_len = traj.len();
    if t_len == 0 {
        return Ok(Vec::new());
    }
    let reversed_actions: Vec<E::Action> = (0..t_len)
        .rev()
        .map(|t| env.reverse_action(&traj.states[t], &traj.actions[t], &traj.states[t + 1]))
        .collect();
    let rev = env.reversed_states(&traj.states, &reversed_actions);
    let virtual_goal = env.achieved_goal(&traj.states[0]);
    if env.is_success(&rev[0], &virtual_goal) {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(t_len);
    for k in 0..t_len {
        let r = env.reward(&rev[0], &rev[k], &reversed_actions[k], &rev[k + 1], &virtual_goal);
        // the reversed path ends on s_0 exactly, so the last step always succeeds
        let terminal = r.success || k + 1 == t_len;
        out.push(Transition::new(
            env.observe(&rev[k], &virtual_goal),
            env.encode_action(&reversed_actions[k]),
            r.reward,
            env.observe(&rev[k + 1], &virtual_goal),
            terminal,
            Origin::BackStepping,
        )?);
        if terminal {
            break;
        }
    }
    Ok(out)
}

struct Streams {
    task: SimRng,
    explore: SimRng,
    replay: SimRng,
    backward: SimRng,
}

/// One training run. Randomness comes from independent seeded streams, so the
/// run is reproducible and switching replay features off does not perturb
/// the draws of the remaining components.
pub struct Trainer<E: GoalEnv, A: Agent> {
    env: E,
    agent: A,
    config: TrainerConfig,
    rf: ReplayBuffer,
    rb: ReplayBuffer,
    rng: Streams,
    epoch: usize,
    history: Vec<EpochMetrics>,
    last_forward: Option<Trajectory<E>>,
}

impl<E: GoalEnv, A: Agent> Trainer<E, A> {
    pub fn new(env: E, agent: A, config: TrainerConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        Ok(Self {
            env,
            agent,
            rf: ReplayBuffer::new(config.buffer_capacity),
            rb: ReplayBuffer::new(config.buffer_capacity),
            rng: Streams {
                task: stream(seed, Stream::Task),
                explore: stream(seed, Stream::Explore),
                replay: stream(seed, Stream::Replay),
                backward: stream(seed, Stream::Backward),
            },
            config,
            epoch: 0,
            history: Vec::new(),
            last_forward: None,
        })
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    pub fn agent(&self) -> &A {
        &self.agent
    }

    pub fn agent_mut(&mut self) -> &mut A {
        &mut self.agent
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    /// Buffer of standard (forward and backward-trial) transitions.
    pub fn forward_buffer(&self) -> &ReplayBuffer {
        &self.rf
    }

    /// Buffer of back-stepping transitions.
    pub fn backstep_buffer(&self) -> &ReplayBuffer {
        &self.rb
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn history(&self) -> &[EpochMetrics] {
        &self.history
    }

    /// Forward trial of the most recent epoch.
    pub fn last_forward(&self) -> Option<&Trajectory<E>> {
        self.last_forward.as_ref()
    }

    pub fn windowed(&self) -> WindowedSeries {
        WindowedSeries::new(&self.history, self.config.window)
    }

    fn store(&mut self, traj: &Trajectory<E>, origin: Origin) -> Result<()> {
        for t in traj.transitions(&self.env, origin)? {
            self.rf.push(t);
        }
        if self.config.ber {
            for t in construct_backstep(&self.env, traj)? {
                self.rb.push(t);
            }
        }
        Ok(())
    }

    /// Runs the next epoch and records its metrics.
    pub fn run_epoch(&mut self) -> Result<EpochMetrics> {
        let epoch = self.epoch;
        self.step_epoch(epoch).map_err(|e| Error::Epoch {
            epoch,
            source: Box::new(e),
        })
    }

    fn step_epoch(&mut self, epoch: usize) -> Result<EpochMetrics> {
        let started = Instant::now();
        let epochs = self.config.epochs;
        self.agent.begin_epoch(epoch, epochs);

        let (goal, start) = self.env.sample_task(&mut self.rng.task, epoch, epochs);
        let forward = run_trial(&self.env, &mut self.agent, &goal, &start, &mut self.rng.explore, true)?;
        self.store(&forward, Origin::ForwardStandard)?;

        let mut backward_trial = false;
        if self.config.ber {
            let p_b = self.config.replay.p_backward_trial(epoch);
            if self.rng.backward.random_bool(p_b) {
                backward_trial = true;
                let backward = run_trial(&self.env, &mut self.agent, &start, &goal, &mut self.rng.explore, true)?;
                self.store(&backward, Origin::BackwardStandard)?;
            }
        }

        let mut loss = 0.0;
        if !self.rf.is_empty() {
            for _ in 0..self.config.opt_steps {
                let batch = sample_minibatch(
                    &self.rf,
                    &self.rb,
                    &self.config.replay,
                    epoch,
                    self.config.batch_size,
                    &mut self.rng.replay,
                )?;
                loss += self.agent.update(&batch)?.critic_loss;
            }
            loss /= self.config.opt_steps as f64;
        }

        let m = EpochMetrics {
            epoch,
            episode_return: forward.episode_return(),
            success: forward.success(),
            avg_distance: forward.avg_distance(),
            avg_deflection: forward.avg_deflection(),
            steps: forward.len(),
            backward_trial,
            loss,
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        self.history.push(m);
        self.last_forward = Some(forward);
        self.epoch += 1;
        Ok(m)
    }

    /// Runs the remaining epochs, handing each epoch's metrics to `on_epoch`.
    /// Returning `Ok(false)` from the callback stops early.
    pub fn train<F>(&mut self, mut on_epoch: F) -> Result<&[EpochMetrics]>
    where
        F: FnMut(&Self, &EpochMetrics) -> Result<bool>,
    {
        while self.epoch < self.config.epochs {
            let m = self.run_epoch()?;
            if !on_epoch(self, &m)? {
                break;
            }
        }
        Ok(&self.history)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{DqnAgent, DqnConfig};
    use crate::env::bitflip::{BitFlipEnv, BitState};

    fn trainer(ber: bool, schedule: ReplaySchedule) -> Trainer<BitFlipEnv, DqnAgent> {
        let env = BitFlipEnv::new(4).unwrap();
        let agent = DqnAgent::new(
            &env.observation_scale(),
            4,
            DqnConfig {
                hidden: vec![16],
                ..DqnConfig::default()
            },
            &mut stream(7, Stream::Init),
        )
        .unwrap();
        let config = TrainerConfig {
            epochs: 20,
            opt_steps: 2,
            batch_size: 8,
            ber,
            replay: schedule,
            seed: 7,
            ..TrainerConfig::default()
        };
        Trainer::new(env, agent, config).unwrap()
    }

    #[test]
    fn start_at_goal_is_zero_length_success() {
        let env = BitFlipEnv::new(4).unwrap();
        let mut agent = trainer(false, ReplaySchedule::off()).agent;
        let g = BitState::parse("0110").unwrap();
        let traj = run_trial(&env, &mut agent, &g, &g, &mut stream(0, Stream::Explore), true).unwrap();
        assert!(traj.is_empty() && traj.success());
        assert_eq!(traj.episode_return(), 0.0);
        assert!(construct_backstep(&env, &traj).unwrap().is_empty());
    }

    #[test]
    fn backstep_is_one_to_one_and_ends_terminal() {
        let env = BitFlipEnv::new(4).unwrap();
        let mut agent = trainer(false, ReplaySchedule::off()).agent;
        let g = BitState::parse("1111").unwrap();
        let s = BitState::parse("0000").unwrap();
        // flip bits 1..=4 in turn: a path that never returns to s0
        let actions = vec![1usize, 2, 3, 4];
        let mut states = vec![s.clone()];
        for a in &actions {
            states.push(env.step(states.last().unwrap(), a).unwrap());
        }
        let traj = Trajectory::<BitFlipEnv> {
            rewards: (0..4).map(|t| env.reward(&s, &states[t], &actions[t], &states[t + 1], &g)).collect(),
            progress: vec![Progress::default(); 4],
            goal: g.clone(),
            actions,
            states,
            started_at_goal: false,
        };
        let back = construct_backstep(&env, &traj).unwrap();
        assert_eq!(back.len(), traj.len());
        assert!(back.last().unwrap().terminal);
        assert!(back[..back.len() - 1].iter().all(|t| !t.terminal));
        assert!(back.iter().all(|t| t.origin == Origin::BackStepping));
        // the last reversed observation is s0 with goal s0
        let last = &back.last().unwrap().next_obs;
        assert_eq!(last[..4], last[4..]);
        // exploration paths may revisit s0; the sequence stops at the first arrival
        let explored = run_trial(&env, &mut agent, &g, &s, &mut stream(1, Stream::Explore), true).unwrap();
        let back = construct_backstep(&env, &explored).unwrap();
        assert!(!back.is_empty() && back.len() <= explored.len());
        assert!(back.last().unwrap().terminal && back[..back.len() - 1].iter().all(|t| !t.terminal));
    }

    #[test]
    fn plain_runs_leave_backstep_buffer_empty() {
        let mut t = trainer(false, ReplaySchedule::off());
        t.train(|_, _| Ok(true)).unwrap();
        assert!(t.backstep_buffer().is_empty());
        assert_eq!(t.history().len(), 20);
    }

    #[test]
    fn epoch_errors_carry_the_epoch() {
        // six Q outputs for four bits: exploring eventually picks an action the env rejects
        let mut bad = trainer(false, ReplaySchedule::off());
        bad.agent = DqnAgent::new(&[1.0; 8], 6, DqnConfig::default(), &mut stream(0, Stream::Init)).unwrap();
        let mut failed = None;
        for _ in 0..20 {
            if let Err(e) = bad.run_epoch() {
                failed = Some(e);
                break;
            }
        }
        assert!(matches!(failed, Some(Error::Epoch { .. })));
    }
}
