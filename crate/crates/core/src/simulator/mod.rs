//! Task execution environment: the speedup and OOM model, synthetic workload
//! expansion, trace CSV ingestion and behavior fitting for trace replay.

mod behavior;
mod fit;
mod trace;
mod workload;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use behavior::{execute, TaskBehavior, DEFAULT_OOM_FRACTION};
pub use fit::{fit_behavior, FitResult};
pub(crate) use trace::CsvTable;
pub use trace::{load_traces, trace_fields, write_traces, TRACE_COLUMNS};
pub use workload::{gen_workload, InputDist, StageSpec, TaskInstance, WorkflowSpec, WorkloadSpec};

use crate::domain::{ExecutionOutcome, ResourceAlloc};
use crate::error::{Error, Result};

/// Behavior table plus the OOM cost model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub behaviors: BTreeMap<String, TaskBehavior>,
    pub oom_fraction: f64,
}

impl Environment {
    pub fn new(behaviors: BTreeMap<String, TaskBehavior>, oom_fraction: f64) -> Result<Self> {
        let env = Self {
            behaviors,
            oom_fraction,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.oom_fraction > 0.0 && self.oom_fraction <= 1.0) {
            return Err(Error::invalid(
                "environment",
                format!("oom_fraction must be in (0, 1], got {}", self.oom_fraction),
            ));
        }
        for (name, b) in &self.behaviors {
            b.validate(name)?;
        }
        Ok(())
    }

    pub fn behavior(&self, name: &str) -> Result<&TaskBehavior> {
        self.behaviors
            .get(name)
            .ok_or_else(|| Error::invalid("environment", format!("unknown behavior `{name}`")))
    }

    pub fn execute<R: Rng + ?Sized>(
        &self,
        behavior: &str,
        input_size_bytes: u64,
        alloc: &ResourceAlloc,
        rng: &mut R,
    ) -> Result<ExecutionOutcome> {
        Ok(execute(
            self.behavior(behavior)?,
            input_size_bytes,
            alloc,
            self.oom_fraction,
            rng,
        ))
    }
}
