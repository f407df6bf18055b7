//! Gradient bandits for task sizing: one bandit picks the core count, a second
//! picks the number of memory chunks.

mod cpu;
mod gradient;
mod memory;

use serde::{Deserialize, Serialize};

pub use cpu::{cpu_action_set, cpu_reward, CpuBandit};
pub use gradient::{sample_index, softmax, BaselineInit, GradientBanditState};
pub use memory::{
    escalate_after_oom, mem_action_to_bytes, mem_reward, mem_step_size, MemoryBandit, MemoryBanditConfig, OomEscalator,
    DEFAULT_CHUNKS,
};

use crate::error::{Error, Result};

pub const SNAPSHOT_SCHEMA_VERSION: u32 = 1;

/// Persisted state of a CPU or memory bandit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditSnapshot {
    pub schema_version: u32,
    #[serde(flatten)]
    pub state: GradientBanditState,
}

impl BanditSnapshot {
    pub fn new(state: &GradientBanditState) -> Self {
        Self {
            schema_version: SNAPSHOT_SCHEMA_VERSION,
            state: state.clone(),
        }
    }

    pub fn into_state(self) -> Result<GradientBanditState> {
        if self.schema_version != SNAPSHOT_SCHEMA_VERSION {
            return Err(Error::invalid(
                "bandit snapshot",
                format!("unsupported schema_version {}", self.schema_version),
            ));
        }
        self.state.validate()?;
        Ok(self.state)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
