//! Domain types shared by the agents, baselines, simulator and metrics, plus
//! the usage and unit primitives the reward functions are built on.
//!
//! Memory is kept as integer bytes everywhere. Reporting converts to decimal
//! gigabytes (10^9 bytes), see [`mem_gbh`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bytes per reported gigabyte.
pub const BYTES_PER_GB: f64 = 1e9;

const SECONDS_PER_HOUR: f64 = 3600.0;

/// CPU cores and memory proposed for one task attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResourceAlloc {
    pub cpus: u32,
    pub mem_bytes: u64,
}

impl ResourceAlloc {
    pub fn new(cpus: u32, mem_bytes: u64) -> Result<Self> {
        if cpus == 0 {
            return Err(Error::invalid("allocation", "cpus must be at least 1"));
        }
        if mem_bytes == 0 {
            return Err(Error::invalid("allocation", "mem_bytes must be at least 1"));
        }
        Ok(Self { cpus, mem_bytes })
    }

    pub fn fits(&self, machine: &MachineSpec) -> bool {
        self.cpus >= 1
            && self.mem_bytes >= 1
            && self.cpus <= machine.total_cores
            && self.mem_bytes <= machine.total_mem_bytes
    }

    /// Clamps both dimensions into `[1, capacity]` of `machine`.
    pub fn clamp_to(self, machine: &MachineSpec) -> Self {
        Self {
            cpus: self.cpus.clamp(1, machine.total_cores),
            mem_bytes: self.mem_bytes.clamp(1, machine.total_mem_bytes),
        }
    }

    pub fn mem_gb(&self) -> f64 {
        self.mem_bytes as f64 / BYTES_PER_GB
    }
}

impl fmt::Display for ResourceAlloc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} cores / {:.3} GB", self.cpus, self.mem_gb())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineSpec {
    pub name: String,
    pub total_cores: u32,
    pub total_mem_bytes: u64,
}

impl MachineSpec {
    pub fn new(name: impl Into<String>, total_cores: u32, total_mem_bytes: u64) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            total_cores,
            total_mem_bytes,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_cores == 0 || self.total_mem_bytes == 0 {
            return Err(Error::invalid(
                format!("machine `{}`", self.name),
                "total_cores and total_mem_bytes must be at least 1",
            ));
        }
        Ok(())
    }

    pub fn capacity(&self) -> ResourceAlloc {
        ResourceAlloc {
            cpus: self.total_cores,
            mem_bytes: self.total_mem_bytes,
        }
    }
}

/// An abstract task of a workflow together with its user-declared default allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskProfile {
    pub workflow: String,
    pub task_name: String,
    pub default_alloc: ResourceAlloc,
    /// Key into the simulator's behavior table.
    pub behavior_ref: String,
}

/// Agents are instantiated once per abstract task and machine.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentKey {
    pub task_name: String,
    pub machine_name: String,
}

impl AgentKey {
    pub fn new(task_name: impl Into<String>, machine_name: impl Into<String>) -> Self {
        Self {
            task_name: task_name.into(),
            machine_name: machine_name.into(),
        }
    }
}

impl fmt::Display for AgentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.task_name, self.machine_name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttemptStatus {
    #[serde(rename = "success")]
    Success,
    #[serde(rename = "oom")]
    OomKilled,
}

impl AttemptStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            AttemptStatus::Success => "success",
            AttemptStatus::OomKilled => "oom",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "success" => Some(AttemptStatus::Success),
            "oom" => Some(AttemptStatus::OomKilled),
            _ => None,
        }
    }
}

/// What was measured for one task attempt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub runtime_s: f64,
    /// Percent of one core: 250 means two and a half cores were busy on average.
    pub cpu_usage_pct: f64,
    pub peak_rss_bytes: u64,
    pub status: AttemptStatus,
}

impl ExecutionOutcome {
    pub fn is_success(&self) -> bool {
        self.status == AttemptStatus::Success
    }

    /// Average number of busy cores.
    pub fn cpu_usage_cores(&self) -> f64 {
        self.cpu_usage_pct / 100.0
    }

    /// Checks the outcome against the allocation it was measured under.
    pub fn validate_against(&self, alloc: &ResourceAlloc) -> std::result::Result<(), String> {
        if !self.runtime_s.is_finite() || self.runtime_s < 0.0 {
            return Err(format!("runtime_s must be non-negative, got {}", self.runtime_s));
        }
        if !self.cpu_usage_pct.is_finite() || self.cpu_usage_pct < 0.0 {
            return Err(format!(
                "cpu_usage_pct must be non-negative, got {}",
                self.cpu_usage_pct
            ));
        }
        match self.status {
            AttemptStatus::Success => {
                if self.runtime_s <= 0.0 {
                    return Err("successful attempts must have runtime_s > 0".into());
                }
                if self.peak_rss_bytes > alloc.mem_bytes {
                    return Err(format!(
                        "peak_rss_bytes {} exceeds mem_alloc_bytes {} on a successful attempt",
                        self.peak_rss_bytes, alloc.mem_bytes
                    ));
                }
            }
            AttemptStatus::OomKilled => {
                if self.peak_rss_bytes < alloc.mem_bytes {
                    return Err(format!(
                        "oom attempt reports peak_rss_bytes {} below mem_alloc_bytes {}",
                        self.peak_rss_bytes, alloc.mem_bytes
                    ));
                }
            }
        }
        Ok(())
    }
}

/// One attempt as recorded in a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub workflow: String,
    pub task_name: String,
    pub machine_name: String,
    pub input_size_bytes: u64,
    pub alloc: ResourceAlloc,
    pub outcome: ExecutionOutcome,
}

/// Allocated but idle cores: `cpus - usage/100`. Negative when the task used
/// more than it was given.
pub fn cpu_unused(alloc: &ResourceAlloc, outcome: &ExecutionOutcome) -> f64 {
    alloc.cpus as f64 - outcome.cpu_usage_pct / 100.0
}

/// Peak memory divided by the memory assigned.
pub fn mem_utilization(alloc: &ResourceAlloc, outcome: &ExecutionOutcome) -> f64 {
    outcome.peak_rss_bytes as f64 / alloc.mem_bytes as f64
}

/// Core-hours for `cores` held over `runtime_s` seconds.
pub fn cpu_hours(cores: f64, runtime_s: f64) -> f64 {
    cores * runtime_s / SECONDS_PER_HOUR
}

/// Decimal gigabyte-hours for `mem_bytes` held over `runtime_s` seconds.
pub fn mem_gbh(mem_bytes: u64, runtime_s: f64) -> f64 {
    (mem_bytes as f64 / BYTES_PER_GB) * runtime_s / SECONDS_PER_HOUR
}
