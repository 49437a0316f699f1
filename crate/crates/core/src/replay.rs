//! Replay buffers and the forward/back-stepping sampling schedule.
//!
//! Standard transitions live in `R_f`, synthesized back-stepping transitions in
//! `R_b`. A minibatch draws each slot from `R_b` with probability
//! `P_{t,b}(epoch)` and from `R_f` otherwise.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Where a transition came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    ForwardStandard,
    BackwardStandard,
    BackStepping,
}

/// One `(obs, action, reward, next_obs, terminal)` record.
///
/// `obs` and `next_obs` are goal-conditioned observations (state ⊙ goal).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub terminal: bool,
    pub origin: Origin,
}

impl Transition {
    pub fn new(
        obs: Vec<f64>,
        action: Vec<f64>,
        reward: f64,
        next_obs: Vec<f64>,
        terminal: bool,
        origin: Origin,
    ) -> Result<Self> {
        if obs.len() != next_obs.len() {
            return Err(Error::DimensionMismatch {
                context: "transition next_obs",
                expected: obs.len(),
                got: next_obs.len(),
            });
        }
        if !reward.is_finite() {
            return Err(Error::NonFiniteLoss(format!("transition reward {reward}")));
        }
        Ok(Self {
            obs,
            action,
            reward,
            next_obs,
            terminal,
            origin,
        })
    }
}

/// Fixed-capacity ring buffer, evicting oldest first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    /// Index of the oldest item once the buffer is full.
    head: usize,
}

pub const DEFAULT_CAPACITY: usize = 1_000_000;

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::new(),
            head: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Oldest-to-newest iteration.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.items.split_at(self.head);
        older.iter().chain(newer.iter())
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<&Transition> {
        if self.items.is_empty() {
            None
        } else {
            Some(&self.items[rng.random_range(0..self.items.len())])
        }
    }

    /// Writes one JSON object per line, oldest first.
    pub fn dump<W: Write>(&self, mut w: W) -> Result<()> {
        for t in self.iter() {
            serde_json::to_writer(&mut w, t)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Exponentially decaying probability with a hard cutoff:
/// `p(i) = p0 * exp(-decay * i)` for `i <= cutoff`, `0` afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecaySchedule {
    pub p0: f64,
    pub decay: f64,
    /// Last epoch with a non-zero probability; `None` keeps it on forever.
    pub cutoff: Option<usize>,
}

impl DecaySchedule {
    pub const fn off() -> Self {
        Self {
            p0: 0.0,
            decay: 0.0,
            cutoff: Some(0),
        }
    }

    /// `P_{t,b} = 0.5 e^{-0.002 i}` up to epoch 2500.
    pub const fn snake_default() -> Self {
        Self {
            p0: 0.5,
            decay: 0.002,
            cutoff: Some(2500),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p0) || !self.decay.is_finite() || self.decay < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "schedule needs p0 in [0, 1] and decay >= 0, got p0={} decay={}",
                self.p0, self.decay
            )));
        }
        Ok(())
    }

    pub fn probability(&self, epoch: usize) -> f64 {
        match self.cutoff {
            Some(cut) if epoch > cut => 0.0,
            _ => self.p0 * (-self.decay * epoch as f64).exp(),
        }
    }
}

/// The sampling strategy `S_t`: back-stepping mix `P_{t,b}` and the
/// backward-trial trigger `P_b`, kept separate for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplaySchedule {
    pub backstep: DecaySchedule,
    pub backward_trial: DecaySchedule,
}

impl ReplaySchedule {
    /// `P_b = P_{t,b}`.
    pub fn tied(backstep: DecaySchedule) -> Self {
        Self {
            backstep,
            backward_trial: backstep,
        }
    }

    pub fn off() -> Self {
        Self::tied(DecaySchedule::off())
    }

    /// `P_{t,b}(i)`.
    pub fn p_backstep(&self, epoch: usize) -> f64 {
        self.backstep.probability(epoch)
    }

    /// `P_{t,f}(i) = 1 - P_{t,b}(i)`.
    pub fn p_forward(&self, epoch: usize) -> f64 {
        1.0 - self.p_backstep(epoch)
    }

    /// `P_b(i)`.
    pub fn p_backward_trial(&self, epoch: usize) -> f64 {
        self.backward_trial.probability(epoch)
    }

    pub fn validate(&self) -> Result<()> {
        self.backstep.validate()?;
        self.backward_trial.validate()
    }
}

/// Draws `batch` transitions; each slot comes from `rb` with probability `p_back`.
///
/// An empty `rb` falls back to `rf`. No Bernoulli draw is consumed when the
/// mix is degenerate, so a zero schedule leaves the random stream exactly as a
/// run without back-stepping replay would.
pub fn sample_mixed<'a, R: Rng + ?Sized>(
    rf: &'a ReplayBuffer,
    rb: &'a ReplayBuffer,
    p_back: f64,
    batch: usize,
    rng: &mut R,
) -> Result<Vec<&'a Transition>> {
    if rf.is_empty() && rb.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let mixing = p_back > 0.0 && !rb.is_empty();
    let mut out = Vec::with_capacity(batch);
    for _ in 0..batch {
        let from_back = if rf.is_empty() {
            true
        } else if mixing {
            rng.random_bool(p_back.min(1.0))
        } else {
            false
        };
        let buf = if from_back { rb } else { rf };
        out.push(buf.sample_one(rng).expect("chosen buffer is non-empty"));
    }
    Ok(out)
}

pub fn sample_minibatch<'a, R: Rng + ?Sized>(
    rf: &'a ReplayBuffer,
    rb: &'a ReplayBuffer,
    schedule: &ReplaySchedule,
    epoch: usize,
    batch: usize,
    rng: &mut R,
) -> Result<Vec<&'a Transition>> {
    sample_mixed(rf, rb, schedule.p_backstep(epoch), batch, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(tag: f64, origin: Origin) -> Transition {
        Transition::new(vec![tag], vec![0.0], -1.0, vec![tag + 1.0], false, origin).unwrap()
    }

    #[test]
    fn schedule_values() {
        let s = ReplaySchedule::tied(DecaySchedule::snake_default());
        assert_eq!(s.p_backstep(0), 0.5);
        assert!((s.p_backstep(1000) - 0.5 * (-2.0f64).exp()).abs() < 1e-16);
        assert!((s.p_backstep(1000) - 0.06767).abs() < 1e-5);
        assert!(s.p_backstep(2500) > 0.0);
        assert_eq!(s.p_backstep(2501), 0.0);
        assert_eq!(s.p_backward_trial(2501), 0.0);
        assert_eq!(s.p_forward(0) + s.p_backstep(0), 1.0);
    }

    #[test]
    fn ring_eviction_keeps_newest() {
        let mut buf = ReplayBuffer::new(2);
        for tag in [1.0, 2.0, 3.0] {
            buf.push(tr(tag, Origin::ForwardStandard));
        }
        let tags: Vec<f64> = buf.iter().map(|t| t.obs[0]).collect();
        assert_eq!(tags, vec![2.0, 3.0]);
    }

    #[test]
    fn fills_to_capacity() {
        let mut buf = ReplayBuffer::new(10_000);
        for i in 0..10_000 {
            buf.push(tr(i as f64, Origin::ForwardStandard));
        }
        assert_eq!(buf.len(), 10_000);
    }

    #[test]
    fn singleton_sample() {
        let mut rf = ReplayBuffer::new(4);
        let rb = ReplayBuffer::new(4);
        rf.push(tr(7.0, Origin::ForwardStandard));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let got = sample_mixed(&rf, &rb, 0.5, 1, &mut rng).unwrap();
        assert_eq!(got[0], &tr(7.0, Origin::ForwardStandard));
    }

    #[test]
    fn zero_mix_draws_only_forward() {
        let mut rf = ReplayBuffer::new(8);
        let mut rb = ReplayBuffer::new(8);
        rf.push(tr(1.0, Origin::ForwardStandard));
        rb.push(tr(2.0, Origin::BackStepping));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let got = sample_mixed(&rf, &rb, 0.0, 1000, &mut rng).unwrap();
        assert!(got.iter().all(|t| t.origin == Origin::ForwardStandard));
    }

    #[test]
    fn empty_backstep_buffer_falls_back() {
        let mut rf = ReplayBuffer::new(8);
        let rb = ReplayBuffer::new(8);
        rf.push(tr(1.0, Origin::ForwardStandard));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let got = sample_mixed(&rf, &rb, 0.5, 500, &mut rng).unwrap();
        assert_eq!(got.len(), 500);
        assert!(got.iter().all(|t| t.origin == Origin::ForwardStandard));
    }

    #[test]
    fn both_empty_is_an_error() {
        let rf = ReplayBuffer::new(8);
        let rb = ReplayBuffer::new(8);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(matches!(sample_mixed(&rf, &rb, 0.5, 1, &mut rng), Err(Error::EmptyBuffer)));
    }

    #[test]
    fn half_mix_concentrates() {
        let mut rf = ReplayBuffer::new(8);
        let mut rb = ReplayBuffer::new(8);
        rf.push(tr(1.0, Origin::ForwardStandard));
        rb.push(tr(2.0, Origin::BackStepping));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let got = sample_mixed(&rf, &rb, 0.5, n, &mut rng).unwrap();
        let frac = got.iter().filter(|t| t.origin == Origin::BackStepping).count() as f64 / n as f64;
        assert!((0.49..=0.51).contains(&frac), "fraction {frac}");
    }

    #[test]
    fn mismatched_observation_lengths_are_rejected() {
        assert!(Transition::new(vec![0.0], vec![], 0.0, vec![0.0, 1.0], false, Origin::ForwardStandard).is_err());
    }

    #[test]
    fn dump_writes_one_record_per_line() {
        let mut buf = ReplayBuffer::new(3);
        buf.push(tr(1.0, Origin::ForwardStandard));
        buf.push(tr(2.0, Origin::BackStepping));
        let mut out = Vec::new();
        buf.dump(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let back: Transition = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(back.origin, Origin::BackStepping);
        assert!(lines[1].contains("\"origin\":\"back-stepping\""));
    }

    proptest! {
        #[test]
        fn schedule_is_non_increasing_and_cut(p0 in 0.0f64..=1.0, decay in 0.0f64..0.01, cut in 0usize..5000, i in 0usize..6000) {
            let s = DecaySchedule { p0, decay, cutoff: Some(cut) };
            prop_assert!(s.probability(i + 1) <= s.probability(i));
            if i > cut {
                prop_assert_eq!(s.probability(i), 0.0);
            }
        }

        #[test]
        fn buffer_never_exceeds_capacity(cap in 1usize..50, pushes in 0usize..200) {
            let mut buf = ReplayBuffer::new(cap);
            for i in 0..pushes {
                buf.push(tr(i as f64, Origin::ForwardStandard));
            }
            prop_assert_eq!(buf.len(), pushes.min(cap));
            let tags: Vec<f64> = buf.iter().map(|t| t.obs[0]).collect();
            let expected: Vec<f64> = (pushes.saturating_sub(cap)..pushes).map(|i| i as f64).collect();
            prop_assert_eq!(tags, expected);
        }
    }
}
