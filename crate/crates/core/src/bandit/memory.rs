//! Memory bandit: chunked memory actions, the chunk-based reward and the
//! escalation rule applied after an out-of-memory kill.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gradient::{BaselineInit, GradientBanditState};
use crate::domain::ExecutionOutcome;
use crate::error::{Error, Result};

pub const DEFAULT_CHUNKS: u32 = 10;

/// Splits a task's default memory `m` into `n` chunks of `c = ceil(m / n)` bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryBanditConfig {
    pub n_chunks: u32,
    pub chunk_bytes: u64,
    pub initial_action: u32,
}

impl MemoryBanditConfig {
    /// `initial_action` defaults to `ceil(n / 2)`.
    pub fn for_default(default_mem_bytes: u64, n_chunks: u32, initial_action: Option<u32>) -> Result<Self> {
        if n_chunks < 2 {
            return Err(Error::invalid("memory bandit", "n_chunks must be at least 2"));
        }
        if default_mem_bytes == 0 {
            return Err(Error::invalid("memory bandit", "default memory must be positive"));
        }
        let chunk_bytes = default_mem_bytes.div_ceil(n_chunks as u64);
        let initial_action = initial_action.unwrap_or(n_chunks.div_ceil(2));
        let cfg = Self {
            n_chunks,
            chunk_bytes,
            initial_action,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chunks < 2 || self.chunk_bytes == 0 {
            return Err(Error::invalid(
                "memory bandit",
                "need n_chunks >= 2 and chunk_bytes >= 1",
            ));
        }
        if !(1..=self.n_chunks).contains(&self.initial_action) {
            return Err(Error::OutOfRange {
                what: "initial_action",
                value: self.initial_action as i64,
                min: 1,
                max: self.n_chunks as i64,
            });
        }
        Ok(())
    }

    /// Every action `1..=n` as a chunk multiplier.
    pub fn actions(&self) -> Vec<u64> {
        (1..=self.n_chunks as u64).collect()
    }

    pub fn max_bytes(&self) -> u64 {
        self.n_chunks as u64 * self.chunk_bytes
    }

    /// Action whose `a * c` is closest to `bytes`, ties toward the larger
    /// action, clamped into `[1, n]`.
    pub fn nearest_action(&self, bytes: u64) -> u32 {
        let c = self.chunk_bytes as u128;
        let a = (2 * bytes as u128 + c) / (2 * c);
        a.clamp(1, self.n_chunks as u128) as u32
    }
}

/// Bytes assigned by action `a`: `a * c`.
pub fn mem_action_to_bytes(action: u32, config: &MemoryBanditConfig) -> Result<u64> {
    if !(1..=config.n_chunks).contains(&action) {
        return Err(Error::OutOfRange {
            what: "memory action",
            value: action as i64,
            min: 1,
            max: config.n_chunks as i64,
        });
    }
    Ok(action as u64 * config.chunk_bytes)
}

/// `-2 * mem/c` when the task ran out of memory, otherwise minus the number of
/// unused chunks.
pub fn mem_reward(mem_asg: u64, outcome: &ExecutionOutcome, config: &MemoryBanditConfig) -> f64 {
    let c = config.chunk_bytes as f64;
    if outcome.is_success() {
        -((mem_asg as f64 - outcome.peak_rss_bytes as f64) / c)
    } else {
        -2.0 * mem_asg as f64 / c
    }
}

pub fn mem_step_size(config: &MemoryBanditConfig) -> f64 {
    1.0 / config.n_chunks as f64
}

/// Tracks the largest failed allocation of one attempt chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OomEscalator {
    pub failed_alloc_bytes: u64,
    pub task_default_bytes: u64,
}

impl OomEscalator {
    pub fn new(failed_alloc_bytes: u64, task_default_bytes: u64) -> Self {
        Self {
            failed_alloc_bytes,
            task_default_bytes,
        }
    }

    pub fn record_failure(&mut self, bytes: u64) {
        self.failed_alloc_bytes = self.failed_alloc_bytes.max(bytes);
    }

    /// Next allocation after a failure. A proposal above the failed
    /// allocation is taken as is. A smaller one is ignored: its double is used
    /// if that clears the failed allocation, otherwise the task default.
    pub fn escalate(&self, proposal_bytes: u64) -> u64 {
        escalate_after_oom(self, proposal_bytes)
    }
}

pub fn escalate_after_oom(escalator: &OomEscalator, proposal_bytes: u64) -> u64 {
    let failed = escalator.failed_alloc_bytes;
    if proposal_bytes > failed {
        proposal_bytes
    } else if proposal_bytes.saturating_mul(2) > failed {
        proposal_bytes * 2
    } else {
        escalator.task_default_bytes
    }
}

/// Learns how many memory chunks to give one task on one machine.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBandit {
    pub config: MemoryBanditConfig,
    pub state: GradientBanditState,
}

impl MemoryBandit {
    pub fn new(config: MemoryBanditConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            state: GradientBanditState::new(config.actions(), BaselineInit::Zero)?,
            config,
        })
    }

    pub fn from_parts(config: MemoryBanditConfig, state: GradientBanditState) -> Result<Self> {
        config.validate()?;
        state.validate()?;
        if state.actions != config.actions() {
            return Err(Error::invalid(
                "memory bandit",
                "state actions do not match 1..=n_chunks",
            ));
        }
        Ok(Self { config, state })
    }

    /// The configured initial action until the first update, then a draw
    /// from the policy.
    pub fn propose<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        if self.state.updates_seen == 0 {
            self.config.initial_action
        } else {
            self.state.actions[self.state.sample_action(rng)] as u32
        }
    }

    /// A fresh draw from the policy regardless of history.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.state.actions[self.state.sample_action(rng)] as u32
    }

    pub fn greedy_action(&self) -> u32 {
        self.state.actions[self.state.greedy_action()] as u32
    }

    pub fn bytes(&self, action: u32) -> Result<u64> {
        mem_action_to_bytes(action, &self.config)
    }

    /// Credits the outcome of an attempt made with one of the bandit's own actions.
    pub fn observe(&mut self, action: u32, outcome: &ExecutionOutcome) -> Result<f64> {
        let mem = self.bytes(action)?;
        let reward = mem_reward(mem, outcome, &self.config);
        self.state
            .update_preferences(action as usize - 1, reward, mem_step_size(&self.config))?;
        Ok(reward)
    }

    /// Credits an escalated retry of `mem_bytes` to the nearest action. The
    /// reward is clamped to `[-2n, 0]` since escalated allocations can fall
    /// outside the action range.
    pub fn observe_retry(&mut self, mem_bytes: u64, outcome: &ExecutionOutcome) -> Result<f64> {
        let action = self.config.nearest_action(mem_bytes);
        let n = self.config.n_chunks as f64;
        let reward = mem_reward(mem_bytes, outcome, &self.config).clamp(-2.0 * n, 0.0);
        self.state
            .update_preferences(action as usize - 1, reward, mem_step_size(&self.config))?;
        Ok(reward)
    }
}
