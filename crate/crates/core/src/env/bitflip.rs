//! The n-bit flipping game.
//!
//! The state is an array of `n` bits, action `a ∈ {1..n}` flips bit `a`, the
//! reward is `-[s' != g]` and the episode ends once `s' = g`. The game is its
//! own inverse, so the reversal function is the identity.

use std::collections::VecDeque;

use rand::Rng;

use super::{GoalEnv, Progress, StepReward};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitState {
    bits: Vec<u8>,
}

impl BitState {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() || bits.iter().any(|b| *b > 1) {
            return Err(Error::InvalidConfig("bit states need n >= 1 binary values".into()));
        }
        Ok(Self { bits })
    }

    pub fn zeros(n: usize) -> Self {
        Self { bits: vec![0; n] }
    }

    /// Parses a string such as `"0101"`.
    pub fn parse(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(Error::InvalidConfig(format!("not a bit: {c}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(bits)
    }

    /// Bit `i` of `index` (least significant first).
    pub fn from_index(n: usize, index: usize) -> Self {
        Self {
            bits: (0..n).map(|i| ((index >> i) & 1) as u8).collect(),
        }
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self {
            bits: (0..n).map(|_| rng.random_range(0..2u8)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn index(&self) -> usize {
        self.bits
            .iter()
            .enumerate()
            .map(|(i, b)| (*b as usize) << i)
            .sum()
    }
}

impl std::fmt::Display for BitState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// Toggles bit `action` (1-based).
pub fn flip_step(state: &BitState, action: usize) -> Result<BitState> {
    if action == 0 || action > state.len() {
        return Err(Error::InvalidAction(format!(
            "bit index {action} outside 1..={}",
            state.len()
        )));
    }
    let mut next = state.clone();
    next.bits[action - 1] ^= 1;
    Ok(next)
}

/// `-[s' != g]`; the flag is true when `s' = g`.
pub fn bit_reward(next: &BitState, goal: &BitState) -> StepReward {
    let success = next == goal;
    StepReward {
        reward: if success { 0.0 } else { -1.0 },
        success,
    }
}

pub fn bit_reverse_action(action: usize) -> usize {
    action
}

/// Hamming distance, which is also the optimal episode length.
pub fn bit_oracle_distance(state: &BitState, goal: &BitState) -> usize {
    state.bits.iter().zip(&goal.bits).filter(|(a, b)| a != b).count()
}

/// Shortest flip count by breadth-first search over the hypercube.
pub fn bfs_distance(start: &BitState, goal: &BitState) -> usize {
    let n = start.len();
    let mut seen = vec![false; 1 << n];
    let mut queue = VecDeque::from([(start.index(), 0usize)]);
    seen[start.index()] = true;
    let target = goal.index();
    while let Some((s, d)) = queue.pop_front() {
        if s == target {
            return d;
        }
        for bit in 0..n {
            let t = s ^ (1 << bit);
            if !seen[t] {
                seen[t] = true;
                queue.push_back((t, d + 1));
            }
        }
    }
    unreachable!("the flip graph is connected")
}

#[derive(Debug, Clone, PartialEq)]
pub struct BitFlipEnv {
    n: usize,
    max_steps: usize,
}

impl BitFlipEnv {
    /// Step cap defaults to `3n`.
    pub fn new(n: usize) -> Result<Self> {
        Self::with_max_steps(n, 3 * n)
    }

    pub fn with_max_steps(n: usize, max_steps: usize) -> Result<Self> {
        if n == 0 || n > 16 {
            return Err(Error::InvalidConfig(format!("bit count must be in 1..=16, got {n}")));
        }
        if max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be positive".into()));
        }
        Ok(Self { n, max_steps })
    }

    pub fn bits(&self) -> usize {
        self.n
    }
}

impl GoalEnv for BitFlipEnv {
    type State = BitState;
    type Goal = BitState;
    type Action = usize;

    fn obs_dim(&self) -> usize {
        2 * self.n
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn max_steps(&self) -> usize {
        self.max_steps
    }

    fn sample_task<R: Rng + ?Sized>(&self, rng: &mut R, _epoch: usize, _epochs: usize) -> (BitState, BitState) {
        let start = BitState::random(self.n, rng);
        let goal = BitState::random(self.n, rng);
        (goal, start)
    }

    fn reset(&self, start: &BitState) -> BitState {
        start.clone()
    }

    fn step(&self, state: &BitState, action: &usize) -> Result<BitState> {
        flip_step(state, *action)
    }

    fn reward(&self, _origin: &BitState, _s: &BitState, _a: &usize, next: &BitState, goal: &BitState) -> StepReward {
        bit_reward(next, goal)
    }

    fn is_success(&self, state: &BitState, goal: &BitState) -> bool {
        state == goal
    }

    fn random_action<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(1..=self.n)
    }

    fn reverse_action(&self, _s: &BitState, action: &usize, _next: &BitState) -> usize {
        bit_reverse_action(*action)
    }

    /// Concatenation `[s, g]`.
    fn observe(&self, state: &BitState, goal: &BitState) -> Vec<f64> {
        state.bits.iter().chain(&goal.bits).map(|b| *b as f64).collect()
    }

    fn achieved_goal(&self, state: &BitState) -> BitState {
        state.clone()
    }

    fn physical_state(&self, state: &BitState) -> Vec<f64> {
        state.bits.iter().map(|b| *b as f64).collect()
    }

    /// Zero-based bit index as a single number.
    fn encode_action(&self, action: &usize) -> Vec<f64> {
        vec![(*action - 1) as f64]
    }

    fn decode_action(&self, encoded: &[f64]) -> Result<usize> {
        let idx = encoded
            .first()
            .copied()
            .ok_or_else(|| Error::InvalidAction("empty action".into()))?;
        if !(idx >= 0.0 && idx < self.n as f64 && idx.fract() == 0.0) {
            return Err(Error::InvalidAction(format!("bit index {idx} outside 0..{}", self.n)));
        }
        Ok(idx as usize + 1)
    }

    fn progress(&self, origin: &BitState, state: &BitState, goal: &BitState) -> Progress {
        let initial = bit_oracle_distance(origin, goal);
        Progress {
            distance_ratio: if initial == 0 {
                0.0
            } else {
                bit_oracle_distance(state, goal) as f64 / initial as f64
            },
            deflection: 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{reversibility_defect, Defect};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn flip_examples() {
        let s = BitState::parse("0101").unwrap();
        assert_eq!(flip_step(&s, 1).unwrap(), BitState::parse("1101").unwrap());
        assert_eq!(flip_step(&BitState::parse("0000").unwrap(), 4).unwrap(), BitState::parse("0001").unwrap());
        let twice = flip_step(&flip_step(&s, 3).unwrap(), 3).unwrap();
        assert_eq!(twice, s);
    }

    #[test]
    fn flip_rejects_out_of_range() {
        let s = BitState::zeros(4);
        assert!(matches!(flip_step(&s, 0), Err(Error::InvalidAction(_))));
        assert!(matches!(flip_step(&s, 5), Err(Error::InvalidAction(_))));
    }

    #[test]
    fn rewards() {
        let g = BitState::parse("1100").unwrap();
        assert_eq!(bit_reward(&g, &g), StepReward { reward: 0.0, success: true });
        let r = bit_reward(&BitState::parse("1101").unwrap(), &g);
        assert_eq!(r, StepReward { reward: -1.0, success: false });
    }

    #[test]
    fn optimal_episode_return_is_minus_k_minus_one() {
        // n = 6, solve by flipping differing bits in order
        let env = BitFlipEnv::new(6).unwrap();
        let start = BitState::parse("000000").unwrap();
        let goal = BitState::parse("101101").unwrap();
        let k = bit_oracle_distance(&start, &goal);
        let mut s = start.clone();
        let mut ret = 0.0;
        for (i, (a, b)) in start.bits().iter().zip(goal.bits()).enumerate() {
            if a != b {
                let next = env.step(&s, &(i + 1)).unwrap();
                ret += env.reward(&start, &s, &(i + 1), &next, &goal).reward;
                s = next;
            }
        }
        assert_eq!(s, goal);
        assert_eq!(ret, -((k - 1) as f64));
    }

    #[test]
    fn reversal_is_identity() {
        let env = BitFlipEnv::new(4).unwrap();
        let s = BitState::parse("0110").unwrap();
        let next = env.step(&s, &3).unwrap();
        assert_eq!(env.reverse_action(&s, &3, &next), 3);
        assert_eq!(env.step(&next, &3).unwrap(), s);
    }

    #[test]
    fn exhaustive_reversibility_n4() {
        let env = BitFlipEnv::new(4).unwrap();
        for idx in 0..16 {
            let s = BitState::from_index(4, idx);
            for a in 1..=4 {
                let next = env.step(&s, &a).unwrap();
                assert_eq!(reversibility_defect(&env, &s, &a, &next).unwrap(), Defect::Ratio(0.0));
            }
        }
    }

    #[test]
    fn hamming_examples_and_bfs_oracle() {
        let a = BitState::parse("0101").unwrap();
        assert_eq!(bit_oracle_distance(&a, &a), 0);
        assert_eq!(bit_oracle_distance(&a, &BitState::parse("1101").unwrap()), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(1..=8);
            let s = BitState::random(n, &mut rng);
            let g = BitState::random(n, &mut rng);
            assert_eq!(bit_oracle_distance(&s, &g), bfs_distance(&s, &g));
        }
    }

    #[test]
    fn observation_is_concatenation() {
        let env = BitFlipEnv::new(3).unwrap();
        let s = BitState::parse("101").unwrap();
        let g = BitState::parse("011").unwrap();
        assert_eq!(env.observe(&s, &g), vec![1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        assert_eq!(env.observe(&s, &g), env.observe(&s, &g));
    }

    #[test]
    fn action_encoding_round_trip() {
        let env = BitFlipEnv::new(5).unwrap();
        for a in 1..=5 {
            assert_eq!(env.decode_action(&env.encode_action(&a)).unwrap(), a);
        }
        assert!(env.decode_action(&[5.0]).is_err());
        assert!(env.decode_action(&[-1.0]).is_err());
    }

    #[test]
    fn task_sampling_is_uniform() {
        // chi-square over the 16 states of n = 4, 10^5 draws, 15 dof.
        // Critical value at significance 0.01 is 30.578.
        let env = BitFlipEnv::new(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draws = 100_000;
        let mut goal_counts = [0usize; 16];
        let mut start_counts = [0usize; 16];
        for _ in 0..draws {
            let (g, s) = env.sample_task(&mut rng, 0, 1);
            goal_counts[g.index()] += 1;
            start_counts[s.index()] += 1;
        }
        let expected = draws as f64 / 16.0;
        for counts in [goal_counts, start_counts] {
            let chi2: f64 = counts.iter().map(|c| (*c as f64 - expected).powi(2) / expected).sum();
            assert!(chi2 < 30.578, "chi-square {chi2}");
        }
    }
}
