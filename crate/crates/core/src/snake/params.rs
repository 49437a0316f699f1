use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Physical and numerical constants of the snake simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams {
    /// Body length in m.
    pub length_m: f64,
    /// Linear density in kg/m.
    pub density_kg_per_m: f64,
    pub gravity_m_per_s2: f64,
    /// Curvature per unit pressure difference, 1/(kPa·m).
    pub curvature_per_kpa: f64,
    pub mu_forward: f64,
    pub mu_backward: f64,
    pub mu_transverse: f64,
    /// Number of body samples.
    pub samples: usize,
    /// Integration substep in s.
    pub dt_s: f64,
    /// Velocity regularisation of the sliding direction, m/s.
    pub velocity_eps_m_per_s: f64,
    /// Width of the smooth forward/backward switch.
    pub switch_width: f64,
    /// Include the shape angular momentum in the heading equation.
    pub shape_momentum: bool,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            length_m: 0.5,
            density_kg_per_m: 1.08,
            gravity_m_per_s2: 9.81,
            curvature_per_kpa: 0.058,
            mu_forward: 0.2,
            mu_backward: 0.2,
            mu_transverse: 0.3,
            samples: 401,
            dt_s: 1e-3,
            velocity_eps_m_per_s: 1e-4,
            switch_width: 1e-3,
            shape_momentum: true,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("length_m", self.length_m),
            ("density_kg_per_m", self.density_kg_per_m),
            ("gravity_m_per_s2", self.gravity_m_per_s2),
            ("dt_s", self.dt_s),
            ("velocity_eps_m_per_s", self.velocity_eps_m_per_s),
            ("switch_width", self.switch_width),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("mu_forward", self.mu_forward),
            ("mu_backward", self.mu_backward),
            ("mu_transverse", self.mu_transverse),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !self.curvature_per_kpa.is_finite() {
            return Err(Error::InvalidConfig("curvature_per_kpa must be finite".into()));
        }
        if self.samples < 50 {
            return Err(Error::InvalidConfig(format!("samples must be >= 50, got {}", self.samples)));
        }
        Ok(())
    }

    pub fn mass(&self) -> f64 {
        self.density_kg_per_m * self.length_m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        PhysicalParams::default().validate().unwrap();
    }

    #[test]
    fn rejects_coarse_grid_and_negative_friction() {
        let p = PhysicalParams {
            samples: 49,
            ..PhysicalParams::default()
        };
        assert!(p.validate().is_err());
        let p = PhysicalParams {
            mu_transverse: -0.1,
            ..PhysicalParams::default()
        };
        assert!(p.validate().is_err());
    }
}
