use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::StrategyId;
use crate::domain::{cpu_hours, mem_gbh, TraceRecord};
use crate::error::{Error, Result};
use crate::sum::ExactSum;

/// One attempt of one task instance under one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptLedgerRow {
    pub strategy: StrategyId,
    /// 1-based.
    pub episode: u64,
    /// Index of the task instance within the episode.
    pub instance: usize,
    /// 1-based; retries of an instance share `episode` and `instance`.
    pub attempt: u32,
    pub record: TraceRecord,
    /// Memory-bandit reward for the bandits, the joint reward for Q-learning.
    pub reward: Option<f64>,
    /// CPU-bandit reward; set on successful bandit attempts only.
    pub cpu_reward: Option<f64>,
}

/// Allocated versus used resource-time over a group of attempts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WastageMetrics {
    pub allocated_cpu_hours: f64,
    pub used_cpu_hours: f64,
    pub cpu_wastage_hours: f64,
    pub allocated_mem_gbh: f64,
    pub used_mem_gbh: f64,
    pub mem_wastage_gbh: f64,
    pub failure_count: u64,
    pub attempt_count: u64,
    pub episode_count: u64,
}

/// Sums resource-time over `rows`. OOM kills are charged at their
/// allocation for their partial runtime and count as failures.
pub fn wastage_metrics<'a>(
    group: &str,
    rows: impl IntoIterator<Item = &'a AttemptLedgerRow>,
) -> Result<WastageMetrics> {
    let mut alloc_cpu = ExactSum::new();
    let mut used_cpu = ExactSum::new();
    let mut alloc_mem = ExactSum::new();
    let mut used_mem = ExactSum::new();
    let mut failures = 0;
    let mut attempts = 0;
    let mut episodes = BTreeSet::new();
    for row in rows {
        let r = &row.record;
        let t = r.outcome.runtime_s;
        alloc_cpu.add(cpu_hours(r.alloc.cpus as f64, t));
        used_cpu.add(cpu_hours(r.outcome.cpu_usage_cores(), t));
        alloc_mem.add(mem_gbh(r.alloc.mem_bytes, t));
        used_mem.add(mem_gbh(r.outcome.peak_rss_bytes, t));
        if !r.outcome.is_success() {
            failures += 1;
        }
        attempts += 1;
        episodes.insert(row.episode);
    }
    if attempts == 0 {
        return Err(Error::EmptyGroup(group.to_string()));
    }
    let waste = |a: &ExactSum, u: &ExactSum| {
        let mut w = a.clone();
        w.sub(u);
        w.value()
    };
    Ok(WastageMetrics {
        allocated_cpu_hours: alloc_cpu.value(),
        used_cpu_hours: used_cpu.value(),
        cpu_wastage_hours: waste(&alloc_cpu, &used_cpu),
        allocated_mem_gbh: alloc_mem.value(),
        used_mem_gbh: used_mem.value(),
        mem_wastage_gbh: waste(&alloc_mem, &used_mem),
        failure_count: failures,
        attempt_count: attempts,
        episode_count: episodes.len() as u64,
    })
}

/// Metrics of one strategy over its comparison window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyReport {
    pub strategy: StrategyId,
    pub episodes_run: u64,
    /// First and last episode (1-based, inclusive) of the comparison window.
    pub window: [u64; 2],
    pub overall: WastageMetrics,
    pub workflows: BTreeMap<String, WastageMetrics>,
}

/// Aggregates the last `window` of `episodes_run` episodes of `rows`, which
/// must all belong to `strategy`.
pub fn strategy_report(
    strategy: StrategyId,
    episodes_run: u64,
    window: u64,
    rows: &[AttemptLedgerRow],
) -> Result<StrategyReport> {
    let first = episodes_run.saturating_sub(window.max(1)) + 1;
    let in_window: Vec<&AttemptLedgerRow> = rows
        .iter()
        .filter(|r| r.strategy == strategy && r.episode >= first && r.episode <= episodes_run)
        .collect();
    let overall = wastage_metrics(strategy.as_str(), in_window.iter().copied())?;
    let mut by_workflow: BTreeMap<&str, Vec<&AttemptLedgerRow>> = BTreeMap::new();
    for r in &in_window {
        by_workflow.entry(&r.record.workflow).or_default().push(r);
    }
    let workflows = by_workflow
        .into_iter()
        .map(|(wf, rs)| Ok((wf.to_string(), wastage_metrics(&format!("{strategy}/{wf}"), rs)?)))
        .collect::<Result<_>>()?;
    Ok(StrategyReport {
        strategy,
        episodes_run,
        window: [first, episodes_run],
        overall,
        workflows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{AttemptStatus, ExecutionOutcome, ResourceAlloc};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn row(episode: u64, cpus: u32, usage: f64, mem: u64, peak: u64, t: f64, ok: bool) -> AttemptLedgerRow {
        AttemptLedgerRow {
            strategy: StrategyId::Bandits,
            episode,
            instance: 0,
            attempt: 1,
            record: TraceRecord {
                workflow: if episode.is_multiple_of(2) {
                    "even".into()
                } else {
                    "odd".into()
                },
                task_name: "t".into(),
                machine_name: "m".into(),
                input_size_bytes: 1,
                alloc: ResourceAlloc { cpus, mem_bytes: mem },
                outcome: ExecutionOutcome {
                    runtime_s: t,
                    cpu_usage_pct: usage,
                    peak_rss_bytes: peak,
                    status: if ok {
                        AttemptStatus::Success
                    } else {
                        AttemptStatus::OomKilled
                    },
                },
            },
            reward: None,
            cpu_reward: None,
        }
    }

    #[test]
    fn single_row_arithmetic() {
        let m = wastage_metrics("g", [&row(1, 4, 250.0, 4_000_000_000, 1_000_000_000, 3600.0, true)]).unwrap();
        assert_relative_eq!(m.allocated_cpu_hours, 4.0);
        assert_relative_eq!(m.used_cpu_hours, 2.5);
        assert_relative_eq!(m.cpu_wastage_hours, 1.5);
        assert_relative_eq!(m.allocated_mem_gbh, 4.0);
        assert_relative_eq!(m.used_mem_gbh, 1.0);
        assert_relative_eq!(m.mem_wastage_gbh, 3.0);
        assert_eq!((m.failure_count, m.attempt_count, m.episode_count), (0, 1, 1));
    }

    #[test]
    fn exact_fit_has_no_wastage() {
        let m = wastage_metrics("g", [&row(1, 3, 300.0, 7, 7, 12.3, true)]).unwrap();
        assert_eq!(m.cpu_wastage_hours, 0.0);
        assert_eq!(m.mem_wastage_gbh, 0.0);
    }

    #[test]
    fn empty_group_is_an_error() {
        assert!(matches!(wastage_metrics("g", []), Err(Error::EmptyGroup(_))));
    }

    #[test]
    fn window_selects_final_episodes() {
        let rows: Vec<_> = (1..=12).map(|e| row(e, 2, 100.0, 10, 5, 3600.0, e != 12)).collect();
        let rep = strategy_report(StrategyId::Bandits, 12, 10, &rows).unwrap();
        assert_eq!(rep.window, [3, 12]);
        assert_eq!(rep.overall.episode_count, 10);
        assert_eq!(rep.overall.failure_count, 1);
        assert_eq!(rep.workflows.len(), 2);
        assert_eq!(rep.workflows["even"].episode_count, 5);
    }

    proptest! {
        #[test]
        fn order_independent(
            specs in proptest::collection::vec((1u32..16, 0.0f64..1600.0, 1u64..1u64 << 40, 0.001f64..1e5, any::<bool>()), 1..60),
            seed: u64,
        ) {
            let rows: Vec<_> = specs
                .iter()
                .map(|&(c, u, m, t, ok)| row(1, c, u, m, m / 2, t, ok))
                .collect();
            let mut shuffled = rows.clone();
            let mut rng = crate::rng::seeded(seed);
            rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
            prop_assert_eq!(wastage_metrics("g", &rows).unwrap(), wastage_metrics("g", &shuffled).unwrap());
        }

        #[test]
        fn success_rows_never_waste_negative_memory(peak in 0u64..1000, extra in 0u64..1000, t in 0.001f64..1e4) {
            let m = wastage_metrics("g", [&row(1, 1, 50.0, peak + extra.max(1), peak, t, true)]).unwrap();
            prop_assert!(m.mem_wastage_gbh >= 0.0);
        }
    }
}
