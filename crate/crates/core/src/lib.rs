//! Back-stepping experience replay (BER) for off-policy reinforcement learning.
//!
//! The crate is organised bottom-up:
//!
//! - [`nn`]: dense networks with reverse-mode gradients, Adam, target syncing.
//! - [`replay`]: ring buffers and the forward/back-stepping mixing schedule.
//! - [`env`]: the goal-conditioned environment contract, the reversibility
//!   diagnostic, and the bit-flip game.
//! - [`snake`]: planar serpentine locomotion dynamics and the snake MDP.
//! - [`agents`]: DQN and DDPG.
//! - [`trainer`]: the BER training loop, target curricula and metrics.

pub mod agents;
pub mod env;
mod error;
pub mod nn;
pub mod replay;
pub mod rng;
pub mod snake;
pub mod trainer;

pub use error::{Error, Result};
