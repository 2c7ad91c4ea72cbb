//! The single JSON document driving every CLI command.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::channel::ChannelConfig;
use crate::engine::DraftMode;
use crate::error::{Error, Result};
use crate::lm::ModelConfig;
use crate::policy::ActionsConfig;
use crate::timing::TimingParams;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: ModelConfig,
    pub channel: ChannelConfig,
    pub timing: TimingParams,
    pub actions: ActionsConfig,
    pub policy: PolicyConfig,
    pub agent: AgentConfig,
    pub run: RunConfig,
}

/// One entry of the policy roster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    Static {
        draft_len: u32,
        ell: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mode: Option<DraftMode>,
    },
    /// Every pair of the action space as its own static policy.
    AllStatic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mode: Option<DraftMode>,
    },
    Heuristic {
        initial_len: u32,
        ell: u32,
    },
    /// Greedy DQN policy. Without `weights`, one network is trained per
    /// temperature before evaluation.
    Ddqn {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    /// Length of the confidence tail in the feature vector.
    #[serde(rename = "K")]
    pub k: usize,
    pub policies: Vec<PolicySpec>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            k: 8,
            policies: vec![
                PolicySpec::Ddqn { weights: None },
                PolicySpec::Heuristic { initial_len: 3, ell: 16 },
                PolicySpec::AllStatic { mode: None },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub prompt_len: usize,
    pub n_max: usize,
    pub seeds: Vec<u64>,
    pub temperatures: Vec<f64>,
    pub mode: DraftMode,
    /// Training episode `e` uses master seed `train_seed_base + e`, kept
    /// apart from the evaluation seeds.
    pub train_seed_base: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            prompt_len: 16,
            n_max: 128,
            seeds: (0..40).collect(),
            temperatures: vec![0.6, 1.0, 1.4],
            mode: DraftMode::QuantizeSample,
            train_seed_base: 1 << 32,
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.channel.validate()?;
        self.timing.validate()?;
        self.agent.validate()?;
        if self.run.n_max == 0 {
            return Err(Error::Config("run.n_max must be at least 1".into()));
        }
        if self.run.temperatures.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::Config("run.temperatures must be positive".into()));
        }
        if self.model.vocab_size < 2 {
            return Err(Error::Config("the prompt needs a non-EOS token".into()));
        }
        Ok(())
    }

    /// Model configuration at sampling temperature `temperature`.
    pub fn model_at(&self, temperature: f64) -> ModelConfig {
        ModelConfig {
            temperature,
            ..self.model.clone()
        }
    }
}
