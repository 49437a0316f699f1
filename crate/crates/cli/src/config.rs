//! Run configuration files.

use std::path::Path;

use ber_core::agents::{DdpgConfig, DqnConfig};
use ber_core::snake::SnakeConfig;
use ber_core::trainer::TrainerConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnvConfig {
    Bitflip(BitFlipConfig),
    Snake(SnakeConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BitFlipConfig {
    pub bits: usize,
    /// Defaults to three times the bit count.
    #[serde(default)]
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AgentConfig {
    Dqn(DqnConfig),
    Ddpg(DdpgConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub trainer: TrainerConfig,
    /// Write a checkpoint every this many epochs; the final one is always written.
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
    /// Log every step of every forward trial.
    #[serde(default)]
    pub episode_log: bool,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, e: ber_core::Error| CliError::Config(format!("{field}: {e}"));
        self.trainer.validate().map_err(|e| bad("trainer", e))?;
        match (&self.env, &self.agent) {
            (EnvConfig::Bitflip(b), AgentConfig::Dqn(d)) => {
                if !(1..=16).contains(&b.bits) {
                    return Err(CliError::Config(format!("env.bits: must be in 1..=16, got {}", b.bits)));
                }
                if b.max_steps == Some(0) {
                    return Err(CliError::Config("env.max_steps: must be positive".into()));
                }
                d.validate().map_err(|e| bad("agent", e))?;
            }
            (EnvConfig::Snake(s), AgentConfig::Ddpg(d)) => {
                s.reward.validate().map_err(|e| bad("env.reward", e))?;
                s.physics.validate().map_err(|e| bad("env.physics", e))?;
                s.targets.validate().map_err(|e| bad("env.targets", e))?;
                d.validate(3).map_err(|e| bad("agent", e))?;
            }
            (EnvConfig::Bitflip(_), _) => {
                return Err(CliError::Config("agent.kind: the bit-flip game needs the dqn agent".into()))
            }
            (EnvConfig::Snake(_), _) => {
                return Err(CliError::Config("agent.kind: the snake needs the ddpg agent".into()))
            }
        }
        if self.checkpoint_every == Some(0) {
            return Err(CliError::Config("checkpoint_every: must be positive".into()));
        }
        Ok(())
    }
}

/// Environment-only file for commands that do not train.
#[derive(Debug, Clone, PartialEq, Deserialize)]
struct EnvOnly {
    env: EnvConfig,
}

/// Reads the `[env]` table of a run configuration, ignoring the other tables.
pub fn load_env(path: &Path) -> Result<EnvConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let parsed: EnvOnly = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(parsed.env)
}
