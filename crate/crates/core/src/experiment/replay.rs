use std::collections::{BTreeMap, BTreeSet};

use super::config::ExperimentConfig;
use super::runner::Experiment;
use crate::domain::{MachineSpec, ResourceAlloc, TaskProfile, TraceRecord};
use crate::error::{Error, Result};
use crate::simulator::{fit_behavior, FitResult, TaskInstance};

/// A replay experiment and the fits its environment was built from.
#[derive(Debug, Clone)]
pub struct Replay {
    pub experiment: Experiment,
    pub fits: BTreeMap<(String, String), FitResult>,
}

fn behavior_key(workflow: &str, task: &str) -> String {
    format!("{workflow}/{task}")
}

/// Builds an experiment whose tasks, instances and behaviors come from
/// trace records.
///
/// Each distinct (workflow, task, machine, input size) is one instance, in
/// order of first appearance. A task's default allocation is the largest
/// cores and memory it was ever given. Machines named in `config` keep their
/// capacity; others get the largest allocation seen on them.
pub fn replay_experiment(mut config: ExperimentConfig, records: &[TraceRecord]) -> Result<Replay> {
    config.validate_settings()?;
    if records.is_empty() {
        return Err(Error::invalid("replay", "the trace has no records"));
    }
    let fits = fit_behavior(records, config.environment.oom_fraction);
    for fit in fits.values() {
        if let Some(why) = &fit.insufficient_data {
            log::warn!("{}/{}: {why}", fit.workflow, fit.task);
        }
    }

    let configured: BTreeMap<&str, &MachineSpec> = config.machines.iter().map(|m| (m.name.as_str(), m)).collect();
    let mut machines: BTreeMap<String, MachineSpec> = BTreeMap::new();
    let mut defaults: BTreeMap<(&str, &str), ResourceAlloc> = BTreeMap::new();
    for r in records {
        let m =
            machines
                .entry(r.machine_name.clone())
                .or_insert_with(|| match configured.get(r.machine_name.as_str()) {
                    Some(m) => (*m).clone(),
                    None => MachineSpec {
                        name: r.machine_name.clone(),
                        total_cores: 1,
                        total_mem_bytes: 1,
                    },
                });
        if !configured.contains_key(r.machine_name.as_str()) {
            m.total_cores = m.total_cores.max(r.alloc.cpus);
            m.total_mem_bytes = m.total_mem_bytes.max(r.alloc.mem_bytes);
        }
        let d = defaults
            .entry((&r.workflow, &r.task_name))
            .or_insert(ResourceAlloc { cpus: 1, mem_bytes: 1 });
        d.cpus = d.cpus.max(r.alloc.cpus);
        d.mem_bytes = d.mem_bytes.max(r.alloc.mem_bytes);
    }

    let mut stage_of: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    let mut stages_in: BTreeMap<&str, usize> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    let mut instances = Vec::new();
    for r in records {
        let key = (r.workflow.as_str(), r.task_name.as_str());
        let stage = *stage_of.entry(key).or_insert_with(|| {
            let n = stages_in.entry(&r.workflow).or_default();
            *n += 1;
            *n - 1
        });
        if !seen.insert((key, r.machine_name.as_str(), r.input_size_bytes)) {
            continue;
        }
        instances.push(TaskInstance {
            task: TaskProfile {
                workflow: r.workflow.clone(),
                task_name: r.task_name.clone(),
                default_alloc: defaults[&key],
                behavior_ref: behavior_key(&r.workflow, &r.task_name),
            },
            stage,
            index: instances.len(),
            machine: r.machine_name.clone(),
            input_size_bytes: r.input_size_bytes,
        });
    }

    config.machines = machines.values().cloned().collect();
    config.workflows.clear();
    config.behaviors = fits
        .values()
        .map(|f| (behavior_key(&f.workflow, &f.task), f.behavior.clone()))
        .collect();
    let env = config.environment()?;
    Ok(Replay {
        experiment: Experiment {
            config,
            instances,
            env,
            machines,
        },
        fits,
    })
}
