//! Pressure waveforms, actuator wiring and the agent's wave action.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use super::quadrature::Grid;
use crate::{Error, Result};

/// One decision per actuation period: channel biases and wave direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveAction {
    /// Bias of the channel pair (1, 3), kPa.
    pub b_a1: f64,
    /// Bias of the channel pair (2, 4), kPa.
    pub b_a2: f64,
    /// Propagation direction, `+1` or `-1`.
    pub c: i8,
}

impl WaveAction {
    pub fn new(b_a1: f64, b_a2: f64, c: i8) -> Result<Self> {
        if c != 1 && c != -1 {
            return Err(Error::InvalidAction(format!("wave direction must be +1 or -1, got {c}")));
        }
        if !(b_a1.is_finite() && b_a2.is_finite()) {
            return Err(Error::InvalidAction("non-finite bias".into()));
        }
        Ok(Self { b_a1, b_a2, c })
    }

    pub fn zero_bias(c: i8) -> Self {
        Self { b_a1: 0.0, b_a2: 0.0, c }
    }

    /// Clamps both biases into `[-b_max, b_max]`.
    pub fn clamped(self, b_max: f64) -> Self {
        Self {
            b_a1: self.b_a1.clamp(-b_max, b_max),
            b_a2: self.b_a2.clamp(-b_max, b_max),
            c: self.c,
        }
    }

    /// Same biases, opposite wave direction.
    pub fn reversed(self) -> Self {
        Self { c: -self.c, ..self }
    }
}

/// Channel biases `(b1, b2, b3, b4)`: each signed bias drives one channel of its pair.
pub fn biases_from_action(a: &WaveAction) -> [f64; 4] {
    [a.b_a1.max(0.0), a.b_a2.max(0.0), -a.b_a1.min(0.0), -a.b_a2.min(0.0)]
}

/// `sin(x + k·π/2)` for the four channel phase offsets, evaluated exactly by rotation.
fn quarter_phases(x: f64) -> [f64; 4] {
    let (s, c) = x.sin_cos();
    [s, c, -s, -c]
}

/// Ramp weight `t_r / T`; biases blend as `b_prev (1-τ) + b τ` so both ends are exact.
fn ramp(t_r: f64, period: f64) -> f64 {
    (t_r / period).clamp(0.0, 1.0)
}

/// Channel pressures `p_i = p_m sin(c 2π t_r/T + (i-1)π/2) + b_prev,i + (b_i - b_prev,i) t_r/T`.
pub fn channel_pressures(a: &WaveAction, b_prev: &[f64; 4], t_r: f64, p_m: f64, period: f64) -> [f64; 4] {
    let tau = ramp(t_r, period);
    // phase taken modulo one period so t_r = T and t_r = 0 agree bit for bit
    let sines = quarter_phases(a.c as f64 * TAU * tau.fract());
    let b = biases_from_action(a);
    let mut p = [0.0; 4];
    for i in 0..4 {
        p[i] = p_m * sines[i] + b_prev[i] * (1.0 - tau) + b[i] * tau;
    }
    p
}

/// Time derivative of [`channel_pressures`].
pub fn channel_pressure_rates(a: &WaveAction, b_prev: &[f64; 4], t_r: f64, p_m: f64, period: f64) -> [f64; 4] {
    let tau = ramp(t_r, period);
    let omega = a.c as f64 * TAU / period;
    let cosines = quarter_phases(a.c as f64 * TAU * tau.fract() + FRAC_PI_2);
    let b = biases_from_action(a);
    let mut r = [0.0; 4];
    for i in 0..4 {
        r[i] = p_m * omega * cosines[i] + (b[i] - b_prev[i]) / period;
    }
    r
}

pub const ACTUATORS: usize = 6;

/// Channel pair `(positive, negative)` of each actuator, zero-based.
///
/// Actuator `k` sits a quarter phase behind actuator `k-1`, so the six
/// actuators carry one and a half wavelengths of the travelling wave.
pub const WIRING: [(usize, usize); ACTUATORS] = [(0, 2), (1, 3), (2, 0), (3, 1), (0, 2), (1, 3)];

/// Actuator pressure differences with negative channel pressures clipped to zero.
pub fn actuator_differences(p: &[f64; 4]) -> [f64; ACTUATORS] {
    WIRING.map(|(a, b)| p[a].max(0.0) - p[b].max(0.0))
}

/// Time derivative of [`actuator_differences`].
pub fn actuator_difference_rates(p: &[f64; 4], rates: &[f64; 4]) -> [f64; ACTUATORS] {
    let clipped = |i: usize| if p[i] > 0.0 { rates[i] } else { 0.0 };
    WIRING.map(|(a, b)| clipped(a) - clipped(b))
}

/// Actuator index of every grid sample (equal-length segments).
pub fn actuator_of_samples(grid: &Grid) -> Vec<usize> {
    let seg = grid.length() / ACTUATORS as f64;
    (0..grid.len())
        .map(|j| ((grid.s(j) / seg) as usize).min(ACTUATORS - 1))
        .collect()
}

/// Piecewise-constant pressure difference along the body.
pub fn pressure_difference_profile(p: &[f64; 4], grid: &Grid) -> Vec<f64> {
    let diff = actuator_differences(p);
    actuator_of_samples(grid).into_iter().map(|k| diff[k]).collect()
}

/// `κ = K_b Δp`, elementwise.
pub fn curvature_from_pressure(dp: &[f64], k_b: f64) -> Vec<f64> {
    dp.iter().map(|d| k_b * d).collect()
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(TAU) - PI;
    if y <= -PI {
        y + TAU
    } else {
        y
    }
}

/// Folded bearing error in `[0, π/2]`; heading straight away counts as aligned.
pub fn deflection(dtheta: f64) -> f64 {
    let a = dtheta.abs();
    if a <= FRAC_PI_2 {
        a
    } else {
        PI - a
    }
}
