//! Soft snake robot: kinematic body model, friction-driven COM dynamics and
//! the goal-reaching environment built on top of them.

pub mod dynamics;
pub mod env;
pub mod params;
pub mod path;
pub mod quadrature;
pub mod waveform;

pub use dynamics::{
    friction_density, point_velocities, reconstruct_shape, BodyShape, Simulator, SnakeBody, TrajectorySample, Vec2,
};
pub use env::{RewardParams, SnakeConfig, SnakeEnv, SnakeState};
pub use params::PhysicalParams;
pub use path::{summarize_path, PathSummary};
pub use quadrature::Grid;
pub use waveform::{biases_from_action, channel_pressures, deflection, WaveAction};
