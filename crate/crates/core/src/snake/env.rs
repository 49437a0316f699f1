//! Goal-reaching task for the snake: one wave action per actuation period.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dynamics::{Simulator, SnakeBody, TrajectorySample, Vec2};
use super::params::PhysicalParams;
use super::waveform::{
    actuator_difference_rates, actuator_differences, biases_from_action, channel_pressure_rates, channel_pressures,
    deflection, wrap_angle, WaveAction, ACTUATORS,
};
use crate::env::{GoalEnv, Progress, StepReward};
use crate::trainer::targets::{sample_target, TargetMode};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardParams {
    /// Weight of the normalised distance, non-positive.
    pub w_distance: f64,
    /// Weight of the normalised deflection, non-positive.
    pub w_deflection: f64,
    pub success_reward: f64,
    pub success_radius_m: f64,
    pub period_s: f64,
    pub timeout_s: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            w_distance: -0.15,
            w_deflection: -1.0,
            success_reward: 50.0,
            success_radius_m: 0.03,
            period_s: 1.0,
            timeout_s: 150.0,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_distance <= 0.0 && self.w_deflection <= 0.0) {
            return Err(Error::InvalidConfig("reward weights must be non-positive".into()));
        }
        if !(self.success_reward > 0.0 && self.success_radius_m > 0.0) {
            return Err(Error::InvalidConfig("success reward and radius must be positive".into()));
        }
        if !(self.period_s > 0.0 && self.timeout_s >= self.period_s) {
            return Err(Error::InvalidConfig("need period_s > 0 and timeout_s >= period_s".into()));
        }
        Ok(())
    }

    /// Number of agent periods before a trial times out.
    pub fn max_periods(&self) -> usize {
        (self.timeout_s / self.period_s).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnakeConfig {
    #[serde(default)]
    pub physics: PhysicalParams,
    #[serde(default)]
    pub reward: RewardParams,
    /// Sinusoid amplitude `p_m`, kPa.
    pub pressure_amplitude_kpa: f64,
    /// Bias bound `b_m`, kPa.
    pub bias_max_kpa: f64,
    #[serde(default)]
    pub targets: TargetMode,
}

impl Default for SnakeConfig {
    fn default() -> Self {
        Self {
            physics: PhysicalParams::default(),
            reward: RewardParams::default(),
            pressure_amplitude_kpa: 276.0,
            bias_max_kpa: 276.0,
            targets: TargetMode::default(),
        }
    }
}

/// Simulator state plus the bookkeeping the policy observes.
#[derive(Debug, Clone, PartialEq)]
pub struct SnakeState {
    pub body: SnakeBody,
    /// Channel biases of the previous period.
    pub b_prev: [f64; 4],
    /// Last two `b_a1` values, oldest first.
    pub hist1: [f64; 2],
    /// Last two `b_a2` values, oldest first.
    pub hist2: [f64; 2],
}

impl SnakeState {
    fn push_history(&mut self, a: &WaveAction) {
        self.hist1 = [self.hist1[1], a.b_a1];
        self.hist2 = [self.hist2[1], a.b_a2];
    }
}

#[derive(Debug, Clone)]
pub struct SnakeEnv {
    config: SnakeConfig,
    sim: Simulator,
}

impl SnakeEnv {
    pub fn new(config: SnakeConfig) -> Result<Self> {
        config.reward.validate()?;
        config.targets.validate()?;
        if !(config.pressure_amplitude_kpa >= 0.0 && config.bias_max_kpa >= 0.0) {
            return Err(Error::InvalidConfig("pressure amplitude and bias bound must be non-negative".into()));
        }
        let sim = Simulator::new(config.physics.clone())?;
        Ok(Self { config, sim })
    }

    pub fn config(&self) -> &SnakeConfig {
        &self.config
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    fn fill_curvature(&self, diff: &[f64; ACTUATORS], out: &mut [f64]) {
        let kb = self.config.physics.curvature_per_kpa;
        for (o, d) in out.iter_mut().zip(diff) {
            *o = kb * d;
        }
    }

    /// Curvature of the unbiased waveform at the start of a period.
    pub fn initial_curvature(&self) -> Vec<f64> {
        let p = channel_pressures(
            &WaveAction::zero_bias(1),
            &[0.0; 4],
            0.0,
            self.config.pressure_amplitude_kpa,
            self.config.reward.period_s,
        );
        let mut kappa = vec![0.0; ACTUATORS];
        self.fill_curvature(&actuator_differences(&p), &mut kappa);
        kappa
    }

    /// Robot at rest at `com` with heading zero, default shape and empty histories.
    pub fn state_at(&self, com: Vec2) -> SnakeState {
        SnakeState {
            body: SnakeBody::at_rest(com, 0.0, self.initial_curvature()),
            b_prev: [0.0; 4],
            hist1: [0.0; 2],
            hist2: [0.0; 2],
        }
    }

    /// Plays one period of `action` and optionally records every substep.
    pub fn step_recorded(
        &self,
        state: &SnakeState,
        action: &WaveAction,
        record: bool,
    ) -> Result<(SnakeState, Vec<TrajectorySample>)> {
        let a = action.clamped(self.config.bias_max_kpa);
        let b_prev = state.b_prev;
        let p_m = self.config.pressure_amplitude_kpa;
        let period = self.config.reward.period_s;
        let (body, samples) = self.sim.integrate(
            &state.body,
            period,
            |t, kappa, rate| {
                let p = channel_pressures(&a, &b_prev, t, p_m, period);
                let pd = channel_pressure_rates(&a, &b_prev, t, p_m, period);
                self.fill_curvature(&actuator_differences(&p), kappa);
                self.fill_curvature(&actuator_difference_rates(&p, &pd), rate);
            },
            record,
        )?;
        let mut next = SnakeState {
            body,
            b_prev: biases_from_action(&a),
            hist1: state.hist1,
            hist2: state.hist2,
        };
        next.push_history(&a);
        Ok((next, samples))
    }

    /// Runs an open-loop action program from `state`, returning every substep.
    pub fn rollout(&self, state: &SnakeState, actions: &[WaveAction]) -> Result<(SnakeState, Vec<TrajectorySample>)> {
        let mut s = state.clone();
        let mut all = vec![TrajectorySample {
            t: 0.0,
            com: s.body.com,
            heading: s.body.heading,
            com_vel: s.body.com_vel,
            heading_rate: s.body.heading_rate,
        }];
        let period = self.config.reward.period_s;
        for (k, a) in actions.iter().enumerate() {
            let (next, samples) = self.step_recorded(&s, a, true)?;
            all.extend(samples.into_iter().skip(1).map(|mut x| {
                x.t += k as f64 * period;
                x
            }));
            s = next;
        }
        Ok((s, all))
    }

    pub fn distance(state: &SnakeState, goal: &Vec2) -> f64 {
        let dx = goal[0] - state.body.com[0];
        let dy = goal[1] - state.body.com[1];
        (dx * dx + dy * dy).sqrt()
    }

    /// Bearing of the goal relative to the heading, in `(-π, π]`.
    pub fn relative_bearing(state: &SnakeState, goal: &Vec2) -> f64 {
        let dx = goal[0] - state.body.com[0];
        let dy = goal[1] - state.body.com[1];
        wrap_angle(dy.atan2(dx) - state.body.heading)
    }

    /// `w1 ΔL/ΔL0 + w2 2Δθ_r/π`, plus the success bonus within the success radius.
    pub fn snake_reward(&self, distance: f64, initial_distance: f64, dtheta: f64) -> StepReward {
        let r = &self.config.reward;
        let ratio = if initial_distance > 0.0 {
            distance / initial_distance
        } else {
            0.0
        };
        let mut reward = r.w_distance * ratio + r.w_deflection * 2.0 * deflection(dtheta) / std::f64::consts::PI;
        let success = distance <= r.success_radius_m;
        if success {
            reward += r.success_reward;
        }
        StepReward { reward, success }
    }
}

impl GoalEnv for SnakeEnv {
    type State = SnakeState;
    type Goal = Vec2;
    type Action = WaveAction;

    fn obs_dim(&self) -> usize {
        7
    }

    fn action_dim(&self) -> usize {
        3
    }

    fn max_steps(&self) -> usize {
        self.config.reward.max_periods()
    }

    fn sample_task<R: Rng + ?Sized>(&self, rng: &mut R, epoch: usize, epochs: usize) -> (Vec2, Vec2) {
        (sample_target(&self.config.targets, epoch, epochs, rng), [0.0, 0.0])
    }

    fn reset(&self, start: &Vec2) -> SnakeState {
        self.state_at(*start)
    }

    fn step(&self, state: &SnakeState, action: &WaveAction) -> Result<SnakeState> {
        Ok(self.step_recorded(state, action, false)?.0)
    }

    fn reward(
        &self,
        origin: &SnakeState,
        _state: &SnakeState,
        _action: &WaveAction,
        next: &SnakeState,
        goal: &Vec2,
    ) -> StepReward {
        self.snake_reward(
            Self::distance(next, goal),
            Self::distance(origin, goal),
            Self::relative_bearing(next, goal),
        )
    }

    fn is_success(&self, state: &SnakeState, goal: &Vec2) -> bool {
        Self::distance(state, goal) <= self.config.reward.success_radius_m
    }

    fn reverse_action(&self, _state: &SnakeState, action: &WaveAction, _next: &SnakeState) -> WaveAction {
        action.reversed()
    }

    /// `(ΔX, ΔY, Δθ, b_a1 history, b_a2 history)`.
    fn observe(&self, state: &SnakeState, goal: &Vec2) -> Vec<f64> {
        vec![
            goal[0] - state.body.com[0],
            goal[1] - state.body.com[1],
            Self::relative_bearing(state, goal),
            state.hist1[0],
            state.hist1[1],
            state.hist2[0],
            state.hist2[1],
        ]
    }

    fn achieved_goal(&self, state: &SnakeState) -> Vec2 {
        state.body.com
    }

    /// COM position and heading.
    /// Centre-of-mass position. Heading is left out: start-up transients swing
    /// it by tens of milliradians while the body moves millimetres.
    fn physical_state(&self, state: &SnakeState) -> Vec<f64> {
        vec![state.body.com[0], state.body.com[1]]
    }

    fn random_action<R: Rng + ?Sized>(&self, rng: &mut R) -> WaveAction {
        let b = self.config.bias_max_kpa;
        WaveAction {
            b_a1: rng.random_range(-b..=b),
            b_a2: rng.random_range(-b..=b),
            c: if rng.random_bool(0.5) { 1 } else { -1 },
        }
    }

    fn encode_action(&self, action: &WaveAction) -> Vec<f64> {
        vec![action.b_a1, action.b_a2, action.c as f64]
    }

    /// Biases are clamped to the bound; the direction is the sign of the third
    /// component, with zero read as `+1`.
    fn decode_action(&self, encoded: &[f64]) -> Result<WaveAction> {
        if encoded.len() != 3 {
            return Err(Error::DimensionMismatch {
                context: "snake action",
                expected: 3,
                got: encoded.len(),
            });
        }
        if encoded.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidAction(format!("non-finite action {encoded:?}")));
        }
        let c = if encoded[2] >= 0.0 { 1 } else { -1 };
        Ok(WaveAction::new(encoded[0], encoded[1], c)?.clamped(self.config.bias_max_kpa))
    }

    fn progress(&self, origin: &SnakeState, state: &SnakeState, goal: &Vec2) -> Progress {
        let initial = Self::distance(origin, goal);
        Progress {
            distance_ratio: if initial > 0.0 {
                Self::distance(state, goal) / initial
            } else {
                0.0
            },
            deflection: deflection(Self::relative_bearing(state, goal)),
        }
    }

    /// Histories restart from zero at the reversed start and follow the reversed actions.
    fn reversed_states(&self, states: &[SnakeState], reversed_actions: &[WaveAction]) -> Vec<SnakeState> {
        let mut out: Vec<SnakeState> = states.iter().rev().cloned().collect();
        let mut hist = SnakeState {
            hist1: [0.0; 2],
            hist2: [0.0; 2],
            ..states[0].clone()
        };
        for (k, s) in out.iter_mut().enumerate() {
            s.hist1 = hist.hist1;
            s.hist2 = hist.hist2;
            if let Some(a) = reversed_actions.get(k) {
                hist.push_history(a);
            }
        }
        out
    }

    fn observation_scale(&self) -> Vec<f64> {
        let b = self.config.bias_max_kpa.max(1.0);
        vec![1.0, 1.0, std::f64::consts::PI, b, b, b, b]
    }

    fn action_scale(&self) -> Vec<f64> {
        vec![self.config.bias_max_kpa, self.config.bias_max_kpa, 1.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn env() -> SnakeEnv {
        let config = SnakeConfig {
            physics: PhysicalParams {
                samples: 101,
                dt_s: 2e-3,
                ..PhysicalParams::default()
            },
            ..SnakeConfig::default()
        };
        SnakeEnv::new(config).unwrap()
    }

    #[test]
    fn reward_examples() {
        let e = env();
        let r = e.snake_reward(0.02, 0.5, 0.0);
        assert!(r.success && r.reward > 49.0);
        let r = e.snake_reward(0.5, 0.5, FRAC_PI_2);
        assert!((r.reward + 1.15).abs() < 1e-12 && !r.success);
        let r = e.snake_reward(0.25, 0.5, 0.0);
        assert!((r.reward + 0.075).abs() < 1e-12);
    }

    #[test]
    fn zero_waveform_keeps_com() {
        let config = SnakeConfig {
            pressure_amplitude_kpa: 0.0,
            physics: PhysicalParams {
                samples: 51,
                dt_s: 5e-3,
                ..PhysicalParams::default()
            },
            ..SnakeConfig::default()
        };
        let e = SnakeEnv::new(config).unwrap();
        let s = e.reset(&[0.0, 0.0]);
        let next = e.step(&s, &WaveAction::zero_bias(1)).unwrap();
        assert_eq!(next.body.com, [0.0, 0.0]);
        assert!(!e.is_success(&next, &[0.0, 0.5]));
    }

    #[test]
    fn histories_shift() {
        let e = env();
        let s = e.reset(&[0.0, 0.0]);
        let a1 = WaveAction::new(10.0, -20.0, 1).unwrap();
        let a2 = WaveAction::new(30.0, 40.0, -1).unwrap();
        let s1 = e.step(&s, &a1).unwrap();
        let s2 = e.step(&s1, &a2).unwrap();
        assert_eq!(s2.hist1, [10.0, 30.0]);
        assert_eq!(s2.hist2, [-20.0, 40.0]);
        assert_eq!(s2.b_prev, [30.0, 40.0, 0.0, 0.0]);
    }

    #[test]
    fn decode_clamps_and_reads_sign() {
        let e = env();
        let a = e.decode_action(&[400.0, -10.0, -0.2]).unwrap();
        assert_eq!(a, WaveAction::new(276.0, -10.0, -1).unwrap());
        assert_eq!(e.decode_action(&[0.0, 0.0, 0.0]).unwrap().c, 1);
        assert!(e.decode_action(&[0.0, f64::NAN, 1.0]).is_err());
        assert_eq!(e.encode_action(&a), vec![276.0, -10.0, -1.0]);
    }

    #[test]
    fn observation_layout() {
        let e = env();
        let mut s = e.reset(&[0.1, 0.0]);
        s.hist1 = [1.0, 2.0];
        s.hist2 = [3.0, 4.0];
        let obs = e.observe(&s, &[0.1, 0.5]);
        assert!((obs[0]).abs() < 1e-15 && (obs[1] - 0.5).abs() < 1e-15);
        assert!((obs[2] - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(&obs[3..], &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn reversed_histories_restart_from_zero() {
        let e = env();
        let s0 = e.reset(&[0.0, 0.0]);
        let a = [WaveAction::new(10.0, 0.0, 1).unwrap(), WaveAction::new(20.0, 5.0, 1).unwrap()];
        let s1 = e.step(&s0, &a[0]).unwrap();
        let s2 = e.step(&s1, &a[1]).unwrap();
        let rev_actions = [a[1].reversed(), a[0].reversed()];
        let rev = e.reversed_states(&[s0.clone(), s1.clone(), s2.clone()], &rev_actions);
        assert_eq!(rev[0].body, s2.body);
        assert_eq!(rev[0].hist1, [0.0, 0.0]);
        assert_eq!(rev[1].hist1, [0.0, 20.0]);
        assert_eq!(rev[2].hist1, [20.0, 10.0]);
        assert_eq!(rev[2].hist2, [5.0, 0.0]);
        assert_eq!(rev[2].body, s0.body);
    }
}
