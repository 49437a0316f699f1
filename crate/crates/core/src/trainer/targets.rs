//! Target sampling for the snake: a fixed point, the half ring, or the half
//! ring revealed gradually by a curriculum.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetMode {
    Fixed { x_m: f64, y_m: f64 },
    Ring { min_radius_m: f64, max_radius_m: f64 },
    RingCurriculum { min_radius_m: f64, max_radius_m: f64 },
}

impl Default for TargetMode {
    fn default() -> Self {
        TargetMode::Fixed { x_m: 0.0, y_m: 0.5 }
    }
}

impl TargetMode {
    pub fn ring() -> Self {
        TargetMode::Ring {
            min_radius_m: 0.3,
            max_radius_m: 1.0,
        }
    }

    pub fn ring_curriculum() -> Self {
        TargetMode::RingCurriculum {
            min_radius_m: 0.3,
            max_radius_m: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TargetMode::Fixed { x_m, y_m } => {
                if !(x_m.is_finite() && y_m.is_finite()) {
                    return Err(Error::InvalidConfig("fixed target must be finite".into()));
                }
            }
            TargetMode::Ring {
                min_radius_m,
                max_radius_m,
            }
            | TargetMode::RingCurriculum {
                min_radius_m,
                max_radius_m,
            } => {
                if !(min_radius_m > 0.0 && max_radius_m >= min_radius_m && max_radius_m.is_finite()) {
                    return Err(Error::InvalidConfig(format!(
                        "ring radii must satisfy 0 < min <= max, got [{min_radius_m}, {max_radius_m}]"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Curriculum half-width `ψ = π i² / (4 n²)`, with `i` capped at `n`.
pub fn curriculum_width(epoch: usize, epochs: usize) -> f64 {
    if epochs == 0 {
        return PI / 4.0;
    }
    let i = epoch.min(epochs) as f64;
    let n = epochs as f64;
    PI * i * i / (4.0 * n * n)
}

/// The admissible angle intervals `[0,ψ] ∪ (π/2-ψ, π/2+ψ] ∪ (π-ψ, π]`.
pub fn curriculum_intervals(psi: f64) -> [(f64, f64); 3] {
    [(0.0, psi), (FRAC_PI_2 - psi, FRAC_PI_2 + psi), (PI - psi, PI)]
}

/// Draws an angle uniformly over the curriculum set.
///
/// With `ψ = 0` the set collapses to the seeds `{0, π/2, π}`, each picked
/// with equal probability.
pub fn curriculum_angle<R: Rng + ?Sized>(psi: f64, rng: &mut R) -> f64 {
    if psi <= 0.0 {
        return [0.0, FRAC_PI_2, PI][rng.random_range(0..3)];
    }
    let u = rng.random_range(0.0..4.0 * psi);
    if u < psi {
        u
    } else if u < 3.0 * psi {
        FRAC_PI_2 - psi + (u - psi)
    } else {
        PI - psi + (u - 3.0 * psi)
    }
}

/// Goal position for training epoch `epoch` of `epochs`.
pub fn sample_target<R: Rng + ?Sized>(mode: &TargetMode, epoch: usize, epochs: usize, rng: &mut R) -> [f64; 2] {
    let polar = |d: f64, a: f64| [d * a.cos(), d * a.sin()];
    match *mode {
        TargetMode::Fixed { x_m, y_m } => [x_m, y_m],
        TargetMode::Ring {
            min_radius_m,
            max_radius_m,
        } => {
            let d = rng.random_range(min_radius_m..=max_radius_m);
            let a = rng.random_range(0.0..=PI);
            polar(d, a)
        }
        TargetMode::RingCurriculum {
            min_radius_m,
            max_radius_m,
        } => {
            let d = rng.random_range(min_radius_m..=max_radius_m);
            let a = curriculum_angle(curriculum_width(epoch, epochs), rng);
            polar(d, a)
        }
    }
}
