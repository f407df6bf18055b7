use std::collections::BTreeMap;

use super::config::ExperimentConfig;
use super::metrics::{strategy_report, AttemptLedgerRow};
use super::report::{AggregateReport, REPORT_SCHEMA_VERSION};
use super::strategy::{build_strategy, Attempt, AttemptContext, Strategy};
use super::StrategyId;
use crate::domain::{MachineSpec, ResourceAlloc, TraceRecord};
use crate::error::{Error, Result};
use crate::rng::{domain, stream};
use crate::simulator::{Environment, TaskInstance};

/// Everything a run needs besides the strategy settings.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub instances: Vec<TaskInstance>,
    pub env: Environment,
    pub machines: BTreeMap<String, MachineSpec>,
}

impl Experiment {
    /// Synthetic run: instances generated from the config's workload.
    pub fn synthetic(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let instances = crate::simulator::gen_workload(&config.workload());
        let env = config.environment()?;
        let machines = config.machines.iter().map(|m| (m.name.clone(), m.clone())).collect();
        Ok(Self {
            config,
            instances,
            env,
            machines,
        })
    }
}

/// Output of a full run.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: AggregateReport,
    pub ledgers: BTreeMap<StrategyId, Vec<AttemptLedgerRow>>,
    /// Agent state after the last episode.
    pub snapshots: BTreeMap<StrategyId, serde_json::Value>,
}

/// Runs every instance once under `strategy`. `episode` is 0-based; ledger
/// rows number episodes from 1.
///
/// Each OOM kill is followed by the strategy's retry allocation. If that
/// does not grow memory, or the next attempt is the last one allowed, the
/// machine's full memory is used instead; an OOM kill at full memory ends
/// the instance.
pub fn run_episode(strategy: &mut dyn Strategy, exp: &Experiment, episode: u64) -> Result<Vec<AttemptLedgerRow>> {
    let seed = exp.config.seed;
    let max_attempts = exp.config.max_attempts;
    let mut agent_rng = stream(seed, domain::AGENT, &[strategy.id().tag(), episode]);
    strategy.begin_episode(episode);
    let mut rows = Vec::new();

    for inst in &exp.instances {
        let machine = exp
            .machines
            .get(&inst.machine)
            .ok_or_else(|| Error::invalid("experiment", format!("unknown machine `{}`", inst.machine)))?;
        let ctx = AttemptContext {
            instance: inst,
            machine,
            episode,
        };
        let mut alloc = strategy.propose(&ctx, &mut agent_rng)?;
        let mut fallback = false;
        for number in 1..=max_attempts {
            // shared across strategies: same episode and instance, same draws
            let mut env_rng = stream(seed, domain::ENVIRONMENT, &[episode, inst.index as u64, number as u64]);
            let outcome = exp
                .env
                .execute(&inst.task.behavior_ref, inst.input_size_bytes, &alloc, &mut env_rng)?;
            let attempt = Attempt {
                number,
                alloc,
                fallback,
            };
            let rewards = strategy.observe(&ctx, &attempt, &outcome)?;
            rows.push(AttemptLedgerRow {
                strategy: strategy.id(),
                episode: episode + 1,
                instance: inst.index,
                attempt: number,
                record: TraceRecord {
                    workflow: inst.task.workflow.clone(),
                    task_name: inst.task.task_name.clone(),
                    machine_name: machine.name.clone(),
                    input_size_bytes: inst.input_size_bytes,
                    alloc,
                    outcome,
                },
                reward: rewards.reward,
                cpu_reward: rewards.cpu_reward,
            });
            if outcome.is_success() || number == max_attempts || fallback {
                break;
            }
            let mut next = strategy
                .retry(&ctx, number + 1, &alloc, &mut agent_rng)?
                .clamp_to(machine);
            fallback = next.mem_bytes <= alloc.mem_bytes || number + 1 == max_attempts;
            if fallback {
                if alloc.mem_bytes >= machine.total_mem_bytes {
                    log::warn!(
                        "{}: OOM at full machine memory; giving up on instance {}",
                        ctx.key(),
                        inst.index
                    );
                    break;
                }
                next = ResourceAlloc {
                    cpus: next.cpus,
                    mem_bytes: machine.total_mem_bytes,
                };
            }
            alloc = next;
        }
    }
    Ok(rows)
}

/// Runs every configured strategy for its episode count, round-tripping
/// agent state through its snapshot between episodes, and aggregates each
/// strategy's final `window` episodes.
pub fn run_experiment(exp: &Experiment) -> Result<ExperimentOutput> {
    let cfg = &exp.config;
    let mut ledgers = BTreeMap::new();
    let mut snapshots = BTreeMap::new();
    let mut reports = BTreeMap::new();
    for &id in &cfg.strategies {
        let mut strategy = build_strategy(id, cfg);
        let episodes = cfg.episodes.total(id);
        let mut rows = Vec::new();
        let mut snapshot = strategy.snapshot()?;
        for episode in 0..episodes {
            rows.extend(run_episode(strategy.as_mut(), exp, episode)?);
            snapshot = strategy.snapshot()?;
            strategy.restore(snapshot.clone())?;
            log::debug!("{id}: episode {}/{episodes} done", episode + 1);
        }
        log::info!("{id}: {episodes} episodes, {} attempts", rows.len());
        reports.insert(id, strategy_report(id, episodes, cfg.window, &rows)?);
        ledgers.insert(id, rows);
        snapshots.insert(id, snapshot);
    }
    Ok(ExperimentOutput {
        report: AggregateReport {
            schema_version: REPORT_SCHEMA_VERSION,
            seed: cfg.seed,
            config: cfg.clone(),
            strategies: reports,
        },
        ledgers,
        snapshots,
    })
}
