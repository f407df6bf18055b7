//! Task sizing for scientific workflows with reinforcement learning.
//!
//! Two agent families pick per-task CPU and memory allocations: a pair of
//! gradient bandits ([`bandit`]) and a joint tabular Q-learning agent
//! ([`qlearn`]). They are compared against the workflow's default
//! configuration and a train-then-predict feedback loop ([`baselines`]) on a
//! deterministic task-execution simulator ([`simulator`]), and scored by
//! allocated versus used CPU-hours and memory GB-hours ([`experiment`]).

pub mod bandit;
pub mod baselines;
pub mod domain;
pub mod error;
pub mod experiment;
pub mod qlearn;
pub mod rng;
pub mod simulator;
pub mod sum;

pub use domain::{
    cpu_hours, cpu_unused, mem_gbh, mem_utilization, AgentKey, AttemptStatus, ExecutionOutcome, MachineSpec,
    ResourceAlloc, TaskProfile, TraceRecord,
};
pub use error::{Error, Result};
