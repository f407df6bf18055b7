use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::StrategyId;
use crate::bandit::DEFAULT_CHUNKS;
use crate::baselines::Predictor;
use crate::domain::MachineSpec;
use crate::error::{Error, Result};
use crate::simulator::{Environment, TaskBehavior, WorkflowSpec, WorkloadSpec, DEFAULT_OOM_FRACTION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeCounts {
    pub default_config: u64,
    pub feedback_training: u64,
    pub feedback_predicting: u64,
    pub bandits: u64,
    pub q_learning: u64,
}

impl Default for EpisodeCounts {
    fn default() -> Self {
        Self {
            default_config: 10,
            feedback_training: 10,
            feedback_predicting: 10,
            bandits: 50,
            q_learning: 100,
        }
    }
}

impl EpisodeCounts {
    pub fn total(&self, strategy: StrategyId) -> u64 {
        match strategy {
            StrategyId::DefaultConfig => self.default_config,
            StrategyId::FeedbackLoop => self.feedback_training + self.feedback_predicting,
            StrategyId::Bandits => self.bandits,
            StrategyId::QLearning => self.q_learning,
        }
    }

    /// Sets every strategy to `n` episodes; the feedback loop keeps its
    /// training episodes and predicts for `n`.
    pub fn set_all(&mut self, n: u64) {
        self.default_config = n;
        self.feedback_predicting = n;
        self.bandits = n;
        self.q_learning = n;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentSettings {
    pub oom_fraction: f64,
}

impl Default for EnvironmentSettings {
    fn default() -> Self {
        Self {
            oom_fraction: DEFAULT_OOM_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BanditSettings {
    pub n_chunks: u32,
    /// Largest CPU arm as a multiple of the task default.
    pub cpu_cap_factor: u32,
    /// First memory action; `ceil(n_chunks / 2)` when absent.
    pub initial_mem_action: Option<u32>,
}

impl Default for BanditSettings {
    fn default() -> Self {
        Self {
            n_chunks: DEFAULT_CHUNKS,
            cpu_cap_factor: 2,
            initial_mem_action: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QLearningSettings {
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Share of the Q-learning episodes over which epsilon decays.
    pub epsilon_decay_fraction: f64,
    /// Memory levels are `1..=n_mem_levels` chunks of the task default.
    pub n_mem_levels: u32,
    /// CPU levels are `1..=min(cpu_cap_factor * default, machine cores)`.
    pub cpu_cap_factor: u32,
}

impl Default for QLearningSettings {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            discount: 0.5,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.7,
            n_mem_levels: DEFAULT_CHUNKS,
            cpu_cap_factor: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeedbackSettings {
    pub predictor: Predictor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSettings {
    pub dir: String,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

/// Everything one experiment run needs, as read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "StrategyId::all_vec")]
    pub strategies: Vec<StrategyId>,
    /// Final episodes of each strategy that enter the aggregate.
    #[serde(default = "default_window")]
    pub window: u64,
    /// Attempts per task instance, including the terminal fallback.
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default)]
    pub episodes: EpisodeCounts,
    #[serde(default)]
    pub environment: EnvironmentSettings,
    #[serde(default)]
    pub bandits: BanditSettings,
    #[serde(default)]
    pub q_learning: QLearningSettings,
    #[serde(default)]
    pub feedback: FeedbackSettings,
    #[serde(default)]
    pub output: OutputSettings,
    #[serde(default)]
    pub machines: Vec<MachineSpec>,
    #[serde(default)]
    pub workflows: Vec<WorkflowSpec>,
    #[serde(default)]
    pub behaviors: BTreeMap<String, TaskBehavior>,
}

fn default_window() -> u64 {
    10
}

fn default_max_attempts() -> u32 {
    5
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate_settings()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks everything except the workload, which replay takes from traces.
    pub fn validate_settings(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.strategies.is_empty() {
            return bad("`strategies` must name at least one strategy".into());
        }
        if self.window == 0 {
            return bad("`window` must be >= 1".into());
        }
        if self.max_attempts == 0 {
            return bad("`max_attempts` must be >= 1".into());
        }
        for &s in &self.strategies {
            if self.episodes.total(s) == 0 {
                return bad(format!("episode count for `{s}` must be >= 1"));
            }
        }
        if self.strategies.contains(&StrategyId::FeedbackLoop) && self.episodes.feedback_predicting == 0 {
            return bad("`episodes.feedback_predicting` must be >= 1".into());
        }
        if self.bandits.n_chunks < 2 || self.bandits.cpu_cap_factor == 0 {
            return bad("`bandits.n_chunks` must be >= 2 and `bandits.cpu_cap_factor` >= 1".into());
        }
        if let Some(a) = self.bandits.initial_mem_action {
            if !(1..=self.bandits.n_chunks).contains(&a) {
                return bad(format!(
                    "`bandits.initial_mem_action` must be in 1..={}",
                    self.bandits.n_chunks
                ));
            }
        }
        let q = &self.q_learning;
        if !(0.0..=1.0).contains(&q.epsilon_decay_fraction) {
            return bad("`q_learning.epsilon_decay_fraction` must be in [0, 1]".into());
        }
        if q.n_mem_levels < 2 || q.cpu_cap_factor == 0 {
            return bad("`q_learning.n_mem_levels` must be >= 2 and `q_learning.cpu_cap_factor` >= 1".into());
        }
        // Remaining hyperparameter checks live with the agent config.
        crate::qlearn::QConfig {
            learning_rate: q.learning_rate,
            discount: q.discount,
            epsilon_start: q.epsilon_start,
            epsilon_end: q.epsilon_end,
            epsilon_decay_episodes: 0,
            cpu_levels: vec![1, 2],
            mem_levels: vec![1, 2],
        }
        .validate()
        .map_err(|e| Error::Config(e.to_string()))?;
        self.environment_for(BTreeMap::new()).map(|_| ())
    }

    /// Full validation for a synthetic run.
    pub fn validate(&self) -> Result<()> {
        self.validate_settings()?;
        self.workload().validate().map_err(|e| Error::Config(e.to_string()))?;
        for wf in &self.workflows {
            for st in &wf.stages {
                let b = wf.task_profile(st).behavior_ref;
                if !self.behaviors.contains_key(&b) {
                    return Err(Error::Config(format!(
                        "stage `{}/{}` refers to unknown behavior `{b}`",
                        wf.name, st.task
                    )));
                }
            }
        }
        self.environment().map(|_| ())
    }

    pub fn workload(&self) -> WorkloadSpec {
        WorkloadSpec {
            workflows: self.workflows.clone(),
            machines: self.machines.clone(),
            seed: self.seed,
        }
    }

    pub fn environment(&self) -> Result<Environment> {
        self.environment_for(self.behaviors.clone())
    }

    pub fn environment_for(&self, behaviors: BTreeMap<String, TaskBehavior>) -> Result<Environment> {
        Environment::new(behaviors, self.environment.oom_fraction).map_err(|e| Error::Config(e.to_string()))
    }

    /// Episodes over which Q-learning epsilon decays.
    pub fn epsilon_decay_episodes(&self) -> u64 {
        (self.q_learning.epsilon_decay_fraction * self.episodes.q_learning as f64).round() as u64
    }
}
