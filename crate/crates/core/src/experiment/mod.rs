//! Experiment orchestration: strategies, the per-(task, machine) agent
//! registry, episode runs with OOM retries, wastage metrics and report files.

mod config;
mod metrics;
mod replay;
mod report;
mod runner;
mod strategy;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use config::{
    BanditSettings, EnvironmentSettings, EpisodeCounts, ExperimentConfig, FeedbackSettings, OutputSettings,
    QLearningSettings,
};
pub use metrics::{strategy_report, wastage_metrics, AttemptLedgerRow, StrategyReport, WastageMetrics};
pub use replay::{replay_experiment, Replay};
pub use report::{
    comparison_rows, emit_report, ledger_file_name, load_ledger, reports_from_ledgers, write_comparison_csv,
    write_ledger, AggregateReport, ComparisonRow, ALL_WORKFLOWS, LEDGER_EXTRA_COLUMNS, REPORT_SCHEMA_VERSION,
};
pub use runner::{run_episode, run_experiment, Experiment, ExperimentOutput};
pub use strategy::{
    build_strategy, Attempt, AttemptContext, BanditPair, BanditsStrategy, DefaultConfigStrategy, FeedbackLoopStrategy,
    QLearningStrategy, QTemplate, Registry, Rewards, Strategy,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyId {
    DefaultConfig,
    FeedbackLoop,
    Bandits,
    QLearning,
}

impl StrategyId {
    pub const ALL: [StrategyId; 4] = [
        StrategyId::DefaultConfig,
        StrategyId::FeedbackLoop,
        StrategyId::Bandits,
        StrategyId::QLearning,
    ];

    pub(crate) fn all_vec() -> Vec<StrategyId> {
        Self::ALL.to_vec()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyId::DefaultConfig => "default_config",
            StrategyId::FeedbackLoop => "feedback_loop",
            StrategyId::Bandits => "bandits",
            StrategyId::QLearning => "q_learning",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|id| id.as_str() == s)
    }

    /// Stream tag for this strategy's agent randomness.
    pub(crate) fn tag(self) -> u64 {
        match self {
            StrategyId::DefaultConfig => 1,
            StrategyId::FeedbackLoop => 2,
            StrategyId::Bandits => 3,
            StrategyId::QLearning => 4,
        }
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StrategyId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::parse(s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|id| id.as_str()).collect();
            format!("unknown strategy `{s}` (expected one of {})", names.join(", "))
        })
    }
}
