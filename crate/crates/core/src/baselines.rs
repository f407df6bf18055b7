//! Comparison strategies: the workflow's static default configuration and a
//! train-then-predict feedback loop.
//!
//! The feedback loop assigns the whole machine while training, then sizes
//! each task from the mean plus standard deviation of what it used. After an
//! OOM kill it retries with the largest peak seen during training, then with
//! double that, then with the machine's full memory.

use serde::{Deserialize, Serialize};

use crate::domain::{ExecutionOutcome, MachineSpec, ResourceAlloc, TaskProfile};
use crate::error::{Error, Result};

pub const SNAPSHOT_SCHEMA_VERSION: u32 = 1;

/// Usage predictions within this distance above an integer round down to it,
/// so `ceil` is not tripped by floating noise.
const CEIL_SLACK: f64 = 1e-9;

pub fn default_alloc(task: &TaskProfile) -> ResourceAlloc {
    task.default_alloc
}

/// Running mean and population variance (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0)
        }
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackPhase {
    Training,
    Predicting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictor {
    #[default]
    MeanPlusStd,
    Mean,
}

/// Usage statistics of one task on one machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackStats {
    /// Busy cores per successful training run.
    pub cpu: RunningStats,
    pub rss: RunningStats,
    pub max_peak_rss_bytes: u64,
    pub phase: FeedbackPhase,
}

impl Default for FeedbackStats {
    fn default() -> Self {
        Self {
            cpu: RunningStats::default(),
            rss: RunningStats::default(),
            max_peak_rss_bytes: 0,
            phase: FeedbackPhase::Training,
        }
    }
}

impl FeedbackStats {
    pub fn count(&self) -> u64 {
        self.rss.count
    }

    /// Folds a successful run into the statistics. Other outcomes carry a
    /// censored peak and are skipped.
    pub fn observe(&mut self, outcome: &ExecutionOutcome) {
        if !outcome.is_success() {
            return;
        }
        self.cpu.push(outcome.cpu_usage_cores());
        self.rss.push(outcome.peak_rss_bytes as f64);
        self.max_peak_rss_bytes = self.max_peak_rss_bytes.max(outcome.peak_rss_bytes);
    }
}

fn ceil_slack(x: f64) -> f64 {
    (x - CEIL_SLACK).ceil()
}

/// Whole machine while training; mean (+ std) of observed usage afterwards.
pub fn feedback_alloc(
    stats: &FeedbackStats,
    machine: &MachineSpec,
    predictor: Predictor,
    key: &str,
) -> Result<ResourceAlloc> {
    match stats.phase {
        FeedbackPhase::Training => Ok(machine.capacity()),
        FeedbackPhase::Predicting => {
            if stats.count() == 0 {
                return Err(Error::NoTrainingData(key.to_string()));
            }
            let (cpu, mem) = match predictor {
                Predictor::MeanPlusStd => (stats.cpu.mean + stats.cpu.std(), stats.rss.mean + stats.rss.std()),
                Predictor::Mean => (stats.cpu.mean, stats.rss.mean),
            };
            let cpus = ceil_slack(cpu).clamp(1.0, machine.total_cores as f64) as u32;
            let mem_bytes = mem.ceil().clamp(1.0, machine.total_mem_bytes as f64) as u64;
            Ok(ResourceAlloc { cpus, mem_bytes })
        }
    }
}

/// Memory for retry number `attempt` (1-based) after an OOM kill.
pub fn feedback_retry(stats: &FeedbackStats, attempt: u32, machine: &MachineSpec) -> u64 {
    let bytes = match attempt {
        0 | 1 => stats.max_peak_rss_bytes,
        2 => stats.max_peak_rss_bytes.saturating_mul(2),
        _ => machine.total_mem_bytes,
    };
    bytes.clamp(1, machine.total_mem_bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackSnapshot {
    pub schema_version: u32,
    #[serde(flatten)]
    pub stats: FeedbackStats,
}

impl FeedbackSnapshot {
    pub fn new(stats: &FeedbackStats) -> Self {
        Self {
            schema_version: SNAPSHOT_SCHEMA_VERSION,
            stats: stats.clone(),
        }
    }

    pub fn into_stats(self) -> Result<FeedbackStats> {
        if self.schema_version != SNAPSHOT_SCHEMA_VERSION {
            return Err(Error::invalid(
                "feedback snapshot",
                format!("unsupported schema_version {}", self.schema_version),
            ));
        }
        Ok(self.stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::AttemptStatus;
    use proptest::prelude::*;

    const GB: u64 = 1_000_000_000;

    fn machine() -> MachineSpec {
        MachineSpec::new("m", 16, 128 * GB).unwrap()
    }

    fn run(usage: f64, peak: u64) -> ExecutionOutcome {
        ExecutionOutcome {
            runtime_s: 10.0,
            cpu_usage_pct: usage,
            peak_rss_bytes: peak,
            status: AttemptStatus::Success,
        }
    }

    #[test]
    fn default_is_pass_through() {
        let t = TaskProfile {
            workflow: "w".into(),
            task_name: "t".into(),
            default_alloc: ResourceAlloc::new(4, 8 << 30).unwrap(),
            behavior_ref: "b".into(),
        };
        assert_eq!(default_alloc(&t), ResourceAlloc::new(4, 8 << 30).unwrap());
        assert_eq!(default_alloc(&t), default_alloc(&t));
    }

    #[test]
    fn training_gets_whole_machine() {
        let s = FeedbackStats::default();
        assert_eq!(
            feedback_alloc(&s, &machine(), Predictor::MeanPlusStd, "k").unwrap(),
            ResourceAlloc::new(16, 128 * GB).unwrap()
        );
    }

    #[test]
    fn prediction_rounds_up() {
        let mut s = FeedbackStats {
            phase: FeedbackPhase::Predicting,
            ..Default::default()
        };
        s.cpu = RunningStats {
            count: 4,
            mean: 2.3,
            m2: 0.16 * 4.0,
        };
        s.rss = RunningStats {
            count: 4,
            mean: 5e9,
            m2: 0.0,
        };
        let a = feedback_alloc(&s, &machine(), Predictor::MeanPlusStd, "k").unwrap();
        assert_eq!(a.cpus, 3);
        assert_eq!(a.mem_bytes, 5 * GB);
        let a = feedback_alloc(&s, &machine(), Predictor::Mean, "k").unwrap();
        assert_eq!(a.cpus, 3);
    }

    #[test]
    fn integral_usage_is_not_bumped_by_noise() {
        let mut s = FeedbackStats {
            phase: FeedbackPhase::Predicting,
            ..Default::default()
        };
        s.observe(&run(300.00000000000006, GB));
        assert_eq!(feedback_alloc(&s, &machine(), Predictor::Mean, "k").unwrap().cpus, 3);
    }

    #[test]
    fn predicting_without_data_fails() {
        let s = FeedbackStats {
            phase: FeedbackPhase::Predicting,
            ..Default::default()
        };
        assert!(matches!(
            feedback_alloc(&s, &machine(), Predictor::MeanPlusStd, "k"),
            Err(Error::NoTrainingData(_))
        ));
    }

    #[test]
    fn retry_sequence() {
        let mut s = FeedbackStats::default();
        s.observe(&run(100.0, 6 * GB));
        s.observe(&run(100.0, 2 * GB));
        let m = machine();
        assert_eq!(feedback_retry(&s, 1, &m), 6 * GB);
        assert_eq!(feedback_retry(&s, 2, &m), 12 * GB);
        assert_eq!(feedback_retry(&s, 3, &m), 128 * GB);
        s.max_peak_rss_bytes = 100 * GB;
        assert_eq!(feedback_retry(&s, 2, &m), 128 * GB);
    }

    #[test]
    fn oom_runs_are_not_folded_in() {
        let mut s = FeedbackStats::default();
        s.observe(&ExecutionOutcome {
            status: AttemptStatus::OomKilled,
            ..run(100.0, 5)
        });
        assert_eq!(s.count(), 0);
    }

    proptest! {
        #[test]
        fn welford_matches_two_pass(xs in proptest::collection::vec(-1e6f64..1e6, 1..300)) {
            let mut w = RunningStats::default();
            for &x in &xs { w.push(x); }
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let scale = xs.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            prop_assert!((w.mean - mean).abs() <= 1e-9 * scale);
            prop_assert!((w.std() - var.sqrt()).abs() <= 1e-9 * scale);
        }

        #[test]
        fn retry_non_decreasing(max_peak in 1u64..(256 * GB)) {
            let s = FeedbackStats { max_peak_rss_bytes: max_peak, ..Default::default() };
            let m = machine();
            let seq: Vec<u64> = (1..=5).map(|a| feedback_retry(&s, a, &m)).collect();
            prop_assert!(seq.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
