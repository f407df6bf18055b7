use rand::Rng;

use super::gradient::{BaselineInit, GradientBanditState};
use crate::domain::{cpu_unused, ExecutionOutcome, MachineSpec, ResourceAlloc};
use crate::error::{Error, Result};

/// Runtime plus idle core-time: `-t * (1 + cpus - usage/100)`.
///
/// Lies in `[-t(cpus+1), -t]` while usage stays within the allocation. Usage
/// above the allocation is passed through unclamped and lifts the reward above `-t`.
pub fn cpu_reward(alloc: &ResourceAlloc, outcome: &ExecutionOutcome) -> f64 {
    -outcome.runtime_s * (1.0 + cpu_unused(alloc, outcome))
}

/// Core counts `1..=cap` with `cap = min(default_cpus * cap_factor, machine cores)`,
/// and never fewer than two arms.
pub fn cpu_action_set(default_cpus: u32, machine: &MachineSpec, cap_factor: u32) -> Vec<u64> {
    let cap = default_cpus
        .saturating_mul(cap_factor.max(1))
        .min(machine.total_cores)
        .max(2);
    (1..=cap as u64).collect()
}

/// Learns how many cores to give one task on one machine.
#[derive(Debug, Clone, PartialEq)]
pub struct CpuBandit {
    pub state: GradientBanditState,
}

impl CpuBandit {
    pub fn new(default_cpus: u32, machine: &MachineSpec, cap_factor: u32) -> Result<Self> {
        let actions = cpu_action_set(default_cpus, machine, cap_factor);
        Ok(Self {
            state: GradientBanditState::new(actions, BaselineInit::FirstReward)?,
        })
    }

    pub fn from_state(state: GradientBanditState) -> Result<Self> {
        state.validate()?;
        Ok(Self { state })
    }

    pub fn propose<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, u32) {
        let idx = self.state.sample_action(rng);
        (idx, self.state.actions[idx] as u32)
    }

    pub fn greedy_cpus(&self) -> u32 {
        self.state.actions[self.state.greedy_action()] as u32
    }

    pub fn index_of(&self, cpus: u32) -> Option<usize> {
        self.state.actions.iter().position(|&a| a == cpus as u64)
    }

    /// Step size for the next update. Before any runtime has been seen the
    /// bootstrap step of 1.0 is used.
    pub fn step_size(&self) -> f64 {
        self.state.cpu_step_size().unwrap_or(1.0)
    }

    /// Credits a successful attempt to arm `chosen` and returns the reward.
    pub fn observe(&mut self, chosen: usize, alloc: &ResourceAlloc, outcome: &ExecutionOutcome) -> Result<f64> {
        if !outcome.is_success() {
            return Err(Error::invalid(
                "cpu bandit observation",
                "only successful attempts carry a CPU reward",
            ));
        }
        let reward = cpu_reward(alloc, outcome);
        let step = self.step_size();
        self.state.update_preferences(chosen, reward, step)?;
        self.state.record_runtime(outcome.runtime_s);
        Ok(reward)
    }
}
