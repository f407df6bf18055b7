use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{MachineSpec, ResourceAlloc, TaskProfile};
use crate::error::{Error, Result};
use crate::rng::{domain, stream};

/// Input-size distribution of a stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputDist {
    Fixed {
        bytes: u64,
    },
    /// Uniform over the closed range.
    Uniform {
        min_bytes: u64,
        max_bytes: u64,
    },
}

impl InputDist {
    fn validate(&self, what: &str) -> Result<()> {
        match *self {
            InputDist::Fixed { bytes: 0 } => Err(Error::invalid(what, "input size must be >= 1 byte")),
            InputDist::Uniform { min_bytes, max_bytes } if min_bytes == 0 || min_bytes > max_bytes => {
                Err(Error::invalid(
                    what,
                    format!("need 1 <= min_bytes <= max_bytes, got {min_bytes}..{max_bytes}"),
                ))
            }
            _ => Ok(()),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match *self {
            InputDist::Fixed { bytes } => bytes,
            InputDist::Uniform { min_bytes, max_bytes } => rng.random_range(min_bytes..=max_bytes),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub task: String,
    /// Key into the behavior table; defaults to the task name.
    #[serde(default)]
    pub behavior: Option<String>,
    pub default_cpus: u32,
    pub default_mem_bytes: u64,
    pub instances: u32,
    pub input: InputDist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkflowSpec {
    pub name: String,
    pub stages: Vec<StageSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub workflows: Vec<WorkflowSpec>,
    pub machines: Vec<MachineSpec>,
    pub seed: u64,
}

impl WorkflowSpec {
    pub fn task_profile(&self, stage: &StageSpec) -> TaskProfile {
        TaskProfile {
            workflow: self.name.clone(),
            task_name: stage.task.clone(),
            default_alloc: ResourceAlloc {
                cpus: stage.default_cpus,
                mem_bytes: stage.default_mem_bytes,
            },
            behavior_ref: stage.behavior.clone().unwrap_or_else(|| stage.task.clone()),
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        if self.machines.is_empty() {
            return Err(Error::invalid("workload", "at least one machine is required"));
        }
        for m in &self.machines {
            m.validate()?;
        }
        if self.workflows.is_empty() {
            return Err(Error::invalid("workload", "at least one workflow is required"));
        }
        let mut tasks = std::collections::BTreeSet::new();
        for wf in &self.workflows {
            if wf.stages.is_empty() {
                return Err(Error::invalid(format!("workflow `{}`", wf.name), "no stages"));
            }
            for st in &wf.stages {
                let what = format!("stage `{}/{}`", wf.name, st.task);
                if !tasks.insert(st.task.clone()) {
                    return Err(Error::invalid(what, "task names must be unique across the workload"));
                }
                if st.instances == 0 {
                    return Err(Error::invalid(what, "instances must be >= 1"));
                }
                let default = ResourceAlloc::new(st.default_cpus, st.default_mem_bytes)
                    .map_err(|e| Error::invalid(what.clone(), e.to_string()))?;
                for m in &self.machines {
                    if !default.fits(m) {
                        return Err(Error::invalid(
                            what,
                            format!("default allocation {default} does not fit machine `{}`", m.name),
                        ));
                    }
                }
                st.input.validate(&what)?;
            }
        }
        Ok(())
    }
}

/// One concrete task execution request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub task: TaskProfile,
    pub stage: usize,
    /// Position in the full instance list.
    pub index: usize,
    pub machine: String,
    pub input_size_bytes: u64,
}

/// Expands every stage into its instances: workflows in order, stages in
/// order, machines assigned round-robin. Input sizes come from the workload
/// stream of `spec.seed`.
pub fn gen_workload(spec: &WorkloadSpec) -> Vec<TaskInstance> {
    let mut rng = stream(spec.seed, domain::WORKLOAD, &[]);
    let mut out = Vec::new();
    for wf in &spec.workflows {
        for (stage_idx, st) in wf.stages.iter().enumerate() {
            let task = wf.task_profile(st);
            for _ in 0..st.instances {
                let index = out.len();
                out.push(TaskInstance {
                    task: task.clone(),
                    stage: stage_idx,
                    index,
                    machine: spec.machines[index % spec.machines.len()].name.clone(),
                    input_size_bytes: st.input.sample(&mut rng),
                });
            }
        }
    }
    out
}
