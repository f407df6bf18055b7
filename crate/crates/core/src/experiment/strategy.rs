use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::StrategyId;
use crate::bandit::{BanditSnapshot, CpuBandit, MemoryBandit, MemoryBanditConfig, OomEscalator};
use crate::baselines::{
    default_alloc, feedback_alloc, feedback_retry, FeedbackPhase, FeedbackSnapshot, FeedbackStats, Predictor,
};
use crate::domain::{AgentKey, ExecutionOutcome, MachineSpec, ResourceAlloc};
use crate::error::{Error, Result};
use crate::qlearn::{QAgent, QConfig, QSnapshot, QStep};
use crate::rng::SimRng;
use crate::simulator::TaskInstance;

/// What a strategy sees about the instance it is sizing.
#[derive(Debug, Clone, Copy)]
pub struct AttemptContext<'a> {
    pub instance: &'a TaskInstance,
    pub machine: &'a MachineSpec,
    /// 0-based episode index within this strategy's run.
    pub episode: u64,
}

impl AttemptContext<'_> {
    pub fn key(&self) -> AgentKey {
        AgentKey::new(&self.instance.task.task_name, &self.machine.name)
    }

    pub fn default_alloc(&self) -> ResourceAlloc {
        default_alloc(&self.instance.task).clamp_to(self.machine)
    }
}

/// An executed attempt as reported back to the strategy.
#[derive(Debug, Clone, Copy)]
pub struct Attempt {
    /// 1-based.
    pub number: u32,
    pub alloc: ResourceAlloc,
    /// Set when the runner replaced the strategy's retry allocation with the
    /// machine's full memory.
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Rewards {
    pub reward: Option<f64>,
    pub cpu_reward: Option<f64>,
}

/// A sizing strategy. The runner calls `propose` for the first attempt of an
/// instance, `observe` after every attempt and `retry` after each OOM kill
/// that is followed by another attempt.
pub trait Strategy {
    fn id(&self) -> StrategyId;

    fn begin_episode(&mut self, _episode: u64) {}

    fn propose(&mut self, ctx: &AttemptContext, rng: &mut SimRng) -> Result<ResourceAlloc>;

    fn observe(&mut self, ctx: &AttemptContext, attempt: &Attempt, outcome: &ExecutionOutcome) -> Result<Rewards>;

    /// Allocation for attempt `next_attempt` after `failed` was OOM-killed.
    fn retry(
        &mut self,
        ctx: &AttemptContext,
        next_attempt: u32,
        failed: &ResourceAlloc,
        rng: &mut SimRng,
    ) -> Result<ResourceAlloc>;

    fn snapshot(&self) -> Result<serde_json::Value>;

    fn restore(&mut self, snapshot: serde_json::Value) -> Result<()>;
}

/// One agent per (task, machine), created on first use.
#[derive(Debug, Clone)]
pub struct Registry<A> {
    agents: BTreeMap<AgentKey, A>,
}

impl<A> Default for Registry<A> {
    fn default() -> Self {
        Self {
            agents: BTreeMap::new(),
        }
    }
}

impl<A> Registry<A> {
    pub fn get(&self, key: &AgentKey) -> Option<&A> {
        self.agents.get(key)
    }

    pub fn get_mut(&mut self, key: &AgentKey) -> Option<&mut A> {
        self.agents.get_mut(key)
    }

    pub fn get_or_try_insert(&mut self, key: &AgentKey, make: impl FnOnce() -> Result<A>) -> Result<&mut A> {
        if !self.agents.contains_key(key) {
            let agent = make()?;
            self.agents.insert(key.clone(), agent);
        }
        Ok(self.agents.get_mut(key).expect("inserted above"))
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&AgentKey, &A)> {
        self.agents.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&AgentKey, &mut A)> {
        self.agents.iter_mut()
    }

    fn agent(&mut self, key: &AgentKey) -> Result<&mut A> {
        self.agents
            .get_mut(key)
            .ok_or_else(|| Error::invalid("agent registry", format!("no agent for {key}")))
    }
}

#[derive(Serialize, Deserialize)]
struct Entry<S> {
    key: AgentKey,
    #[serde(flatten)]
    state: S,
}

fn dump<A, S: Serialize>(reg: &Registry<A>, f: impl Fn(&A) -> S) -> Result<serde_json::Value> {
    let entries: Vec<Entry<S>> = reg
        .iter()
        .map(|(k, a)| Entry {
            key: k.clone(),
            state: f(a),
        })
        .collect();
    Ok(serde_json::to_value(entries)?)
}

fn load<A, S: DeserializeOwned>(snapshot: serde_json::Value, f: impl Fn(S) -> Result<A>) -> Result<Registry<A>> {
    let entries: Vec<Entry<S>> = serde_json::from_value(snapshot)?;
    let mut reg = Registry::default();
    for e in entries {
        reg.agents.insert(e.key, f(e.state)?);
    }
    Ok(reg)
}

/// Next allocation with doubled memory.
fn double_mem(failed: &ResourceAlloc) -> ResourceAlloc {
    ResourceAlloc {
        cpus: failed.cpus,
        mem_bytes: failed.mem_bytes.saturating_mul(2),
    }
}

/// The workflow's own configuration, doubling memory after an OOM kill.
#[derive(Debug, Default)]
pub struct DefaultConfigStrategy;

impl Strategy for DefaultConfigStrategy {
    fn id(&self) -> StrategyId {
        StrategyId::DefaultConfig
    }

    fn propose(&mut self, ctx: &AttemptContext, _rng: &mut SimRng) -> Result<ResourceAlloc> {
        Ok(ctx.default_alloc())
    }

    fn observe(&mut self, _: &AttemptContext, _: &Attempt, _: &ExecutionOutcome) -> Result<Rewards> {
        Ok(Rewards::default())
    }

    fn retry(&mut self, _: &AttemptContext, _: u32, failed: &ResourceAlloc, _: &mut SimRng) -> Result<ResourceAlloc> {
        Ok(double_mem(failed))
    }

    fn snapshot(&self) -> Result<serde_json::Value> {
        Ok(serde_json::Value::Array(Vec::new()))
    }

    fn restore(&mut self, _: serde_json::Value) -> Result<()> {
        Ok(())
    }
}

/// Train on the whole machine, then predict from the frozen statistics.
#[derive(Debug)]
pub struct FeedbackLoopStrategy {
    pub stats: Registry<FeedbackStats>,
    pub training_episodes: u64,
    pub predictor: Predictor,
    phase: FeedbackPhase,
}

impl FeedbackLoopStrategy {
    pub fn new(training_episodes: u64, predictor: Predictor) -> Self {
        Self {
            stats: Registry::default(),
            training_episodes,
            predictor,
            phase: if training_episodes == 0 {
                FeedbackPhase::Predicting
            } else {
                FeedbackPhase::Training
            },
        }
    }

    fn untrained(&self, key: &AgentKey) -> bool {
        self.stats.get(key).is_none_or(|s| s.count() == 0)
    }
}

impl Strategy for FeedbackLoopStrategy {
    fn id(&self) -> StrategyId {
        StrategyId::FeedbackLoop
    }

    fn begin_episode(&mut self, episode: u64) {
        if episode >= self.training_episodes {
            self.phase = FeedbackPhase::Predicting;
            for (_, s) in self.stats.iter_mut() {
                s.phase = FeedbackPhase::Predicting;
            }
        }
    }

    fn propose(&mut self, ctx: &AttemptContext, _rng: &mut SimRng) -> Result<ResourceAlloc> {
        let key = ctx.key();
        if self.phase == FeedbackPhase::Predicting && self.untrained(&key) {
            log::debug!("{key}: no training data, using the whole machine");
            return Ok(ctx.machine.capacity());
        }
        let phase = self.phase;
        let stats = self.stats.get_or_try_insert(&key, || {
            Ok(FeedbackStats {
                phase,
                ..Default::default()
            })
        })?;
        feedback_alloc(stats, ctx.machine, self.predictor, &key.to_string())
    }

    fn observe(&mut self, ctx: &AttemptContext, _: &Attempt, outcome: &ExecutionOutcome) -> Result<Rewards> {
        if self.phase == FeedbackPhase::Training {
            if let Some(s) = self.stats.get_mut(&ctx.key()) {
                s.observe(outcome);
            }
        }
        Ok(Rewards::default())
    }

    fn retry(
        &mut self,
        ctx: &AttemptContext,
        next_attempt: u32,
        failed: &ResourceAlloc,
        _: &mut SimRng,
    ) -> Result<ResourceAlloc> {
        let key = ctx.key();
        if self.phase == FeedbackPhase::Training || self.untrained(&key) {
            return Ok(ctx.machine.capacity());
        }
        let stats = self.stats.agent(&key)?;
        Ok(ResourceAlloc {
            cpus: failed.cpus,
            mem_bytes: feedback_retry(stats, next_attempt - 1, ctx.machine),
        })
    }

    fn snapshot(&self) -> Result<serde_json::Value> {
        dump(&self.stats, FeedbackSnapshot::new)
    }

    fn restore(&mut self, snapshot: serde_json::Value) -> Result<()> {
        self.stats = load(snapshot, FeedbackSnapshot::into_stats)?;
        Ok(())
    }
}

/// CPU and memory bandits of one task on one machine.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditPair {
    pub cpu: CpuBandit,
    pub mem: MemoryBandit,
}

#[derive(Serialize, Deserialize)]
struct BanditPairSnapshot {
    cpu: BanditSnapshot,
    mem_config: MemoryBanditConfig,
    mem: BanditSnapshot,
}

#[derive(Debug, Clone, Copy)]
struct BanditAttempt {
    cpu_idx: usize,
    mem_action: u32,
    escalator: Option<OomEscalator>,
}

#[derive(Debug)]
pub struct BanditsStrategy {
    pub agents: Registry<BanditPair>,
    pub n_chunks: u32,
    pub cpu_cap_factor: u32,
    pub initial_mem_action: Option<u32>,
    pending: Option<BanditAttempt>,
}

impl BanditsStrategy {
    pub fn new(n_chunks: u32, cpu_cap_factor: u32, initial_mem_action: Option<u32>) -> Self {
        Self {
            agents: Registry::default(),
            n_chunks,
            cpu_cap_factor,
            initial_mem_action,
            pending: None,
        }
    }

    fn pending(&mut self) -> Result<&mut BanditAttempt> {
        self.pending
            .as_mut()
            .ok_or_else(|| Error::invalid("bandits", "observation without a proposal"))
    }
}

impl Strategy for BanditsStrategy {
    fn id(&self) -> StrategyId {
        StrategyId::Bandits
    }

    fn propose(&mut self, ctx: &AttemptContext, rng: &mut SimRng) -> Result<ResourceAlloc> {
        let default = ctx.default_alloc();
        let (n, cap, a0) = (self.n_chunks, self.cpu_cap_factor, self.initial_mem_action);
        let pair = self.agents.get_or_try_insert(&ctx.key(), || {
            Ok(BanditPair {
                cpu: CpuBandit::new(default.cpus, ctx.machine, cap)?,
                mem: MemoryBandit::new(MemoryBanditConfig::for_default(default.mem_bytes, n, a0)?)?,
            })
        })?;
        let (cpu_idx, cpus) = pair.cpu.propose(rng);
        let mem_action = pair.mem.propose(rng);
        let mem_bytes = pair.mem.bytes(mem_action)?;
        self.pending = Some(BanditAttempt {
            cpu_idx,
            mem_action,
            escalator: None,
        });
        Ok(ResourceAlloc { cpus, mem_bytes }.clamp_to(ctx.machine))
    }

    fn observe(&mut self, ctx: &AttemptContext, attempt: &Attempt, outcome: &ExecutionOutcome) -> Result<Rewards> {
        let p = *self.pending()?;
        let pair = self.agents.agent(&ctx.key())?;
        let mut rewards = Rewards::default();
        // Only the bandit's own first choice is credited; escalated retries
        // would drag the reward baseline down and make cheap OOM arms look good.
        if attempt.number == 1 {
            rewards.reward = Some(if pair.mem.bytes(p.mem_action)? == attempt.alloc.mem_bytes {
                pair.mem.observe(p.mem_action, outcome)?
            } else {
                pair.mem.observe_retry(attempt.alloc.mem_bytes, outcome)?
            });
        }
        if outcome.is_success() {
            if pair.cpu.state.actions[p.cpu_idx] == attempt.alloc.cpus as u64 {
                rewards.cpu_reward = Some(pair.cpu.observe(p.cpu_idx, &attempt.alloc, outcome)?);
            }
        } else {
            let default_mem = ctx.default_alloc().mem_bytes;
            let pending = self.pending()?;
            match pending.escalator.as_mut() {
                Some(e) => e.record_failure(attempt.alloc.mem_bytes),
                None => pending.escalator = Some(OomEscalator::new(attempt.alloc.mem_bytes, default_mem)),
            }
        }
        Ok(rewards)
    }

    fn retry(
        &mut self,
        ctx: &AttemptContext,
        _: u32,
        failed: &ResourceAlloc,
        rng: &mut SimRng,
    ) -> Result<ResourceAlloc> {
        let escalator = self
            .pending()?
            .escalator
            .ok_or_else(|| Error::invalid("bandits", "retry without a recorded failure"))?;
        let pair = self.agents.agent(&ctx.key())?;
        let proposal = pair.mem.bytes(pair.mem.sample(rng))?;
        Ok(ResourceAlloc {
            cpus: failed.cpus,
            mem_bytes: escalator.escalate(proposal),
        })
    }

    fn snapshot(&self) -> Result<serde_json::Value> {
        dump(&self.agents, |p| BanditPairSnapshot {
            cpu: BanditSnapshot::new(&p.cpu.state),
            mem_config: p.mem.config,
            mem: BanditSnapshot::new(&p.mem.state),
        })
    }

    fn restore(&mut self, snapshot: serde_json::Value) -> Result<()> {
        self.agents = load(snapshot, |s: BanditPairSnapshot| {
            Ok(BanditPair {
                cpu: CpuBandit::from_state(s.cpu.into_state()?)?,
                mem: MemoryBandit::from_parts(s.mem_config, s.mem.into_state()?)?,
            })
        })?;
        Ok(())
    }
}

/// Hyperparameters shared by every Q-learning agent of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct QTemplate {
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_episodes: u64,
    pub n_mem_levels: u32,
    pub cpu_cap_factor: u32,
}

impl QTemplate {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        let q = &cfg.q_learning;
        Self {
            learning_rate: q.learning_rate,
            discount: q.discount,
            epsilon_start: q.epsilon_start,
            epsilon_end: q.epsilon_end,
            epsilon_decay_episodes: cfg.epsilon_decay_episodes(),
            n_mem_levels: q.n_mem_levels,
            cpu_cap_factor: q.cpu_cap_factor,
        }
    }

    /// Level grid for a task: cores `1..=min(cap * default, machine)` and
    /// `1..=n` chunks of the default memory.
    pub fn config_for(&self, default: &ResourceAlloc, machine: &MachineSpec) -> QConfig {
        let top_cpu = default
            .cpus
            .saturating_mul(self.cpu_cap_factor)
            .min(machine.total_cores)
            .max(2);
        let chunk = default.mem_bytes.div_ceil(self.n_mem_levels as u64).max(1);
        QConfig {
            learning_rate: self.learning_rate,
            discount: self.discount,
            epsilon_start: self.epsilon_start,
            epsilon_end: self.epsilon_end,
            epsilon_decay_episodes: self.epsilon_decay_episodes,
            cpu_levels: (1..=top_cpu).collect(),
            mem_levels: (1..=self.n_mem_levels as u64).map(|k| k * chunk).collect(),
        }
    }
}

#[derive(Debug)]
pub struct QLearningStrategy {
    pub agents: Registry<QAgent>,
    pub template: QTemplate,
    pending: Option<QStep>,
}

impl QLearningStrategy {
    pub fn new(template: QTemplate) -> Self {
        Self {
            agents: Registry::default(),
            template,
            pending: None,
        }
    }
}

impl Strategy for QLearningStrategy {
    fn id(&self) -> StrategyId {
        StrategyId::QLearning
    }

    fn propose(&mut self, ctx: &AttemptContext, rng: &mut SimRng) -> Result<ResourceAlloc> {
        let default = ctx.default_alloc();
        let cfg = self.template.config_for(&default, ctx.machine);
        let agent = self
            .agents
            .get_or_try_insert(&ctx.key(), || QAgent::new(cfg, &default))?;
        let step = agent.propose(agent.cfg.epsilon(ctx.episode), rng);
        self.pending = Some(step);
        Ok(agent.alloc(step.to).clamp_to(ctx.machine))
    }

    fn observe(&mut self, ctx: &AttemptContext, attempt: &Attempt, outcome: &ExecutionOutcome) -> Result<Rewards> {
        if attempt.fallback {
            return Ok(Rewards::default());
        }
        let step = self
            .pending
            .ok_or_else(|| Error::invalid("q-learning", "observation without a proposal"))?;
        let obs = self.agents.agent(&ctx.key())?.observe(step, outcome)?;
        Ok(Rewards {
            reward: Some(obs.reward),
            cpu_reward: None,
        })
    }

    fn retry(&mut self, ctx: &AttemptContext, _: u32, _: &ResourceAlloc, _: &mut SimRng) -> Result<ResourceAlloc> {
        let agent = self.agents.agent(&ctx.key())?;
        let step = agent.stay();
        self.pending = Some(step);
        Ok(agent.alloc(step.to).clamp_to(ctx.machine))
    }

    fn snapshot(&self) -> Result<serde_json::Value> {
        dump(&self.agents, QAgent::snapshot)
    }

    fn restore(&mut self, snapshot: serde_json::Value) -> Result<()> {
        self.agents = load(snapshot, |s: QSnapshot| QAgent::restore(s))?;
        Ok(())
    }
}

/// Builds the strategy `id` with the settings of `cfg`.
pub fn build_strategy(id: StrategyId, cfg: &ExperimentConfig) -> Box<dyn Strategy> {
    match id {
        StrategyId::DefaultConfig => Box::new(DefaultConfigStrategy),
        StrategyId::FeedbackLoop => Box::new(FeedbackLoopStrategy::new(
            cfg.episodes.feedback_training,
            cfg.feedback.predictor,
        )),
        StrategyId::Bandits => Box::new(BanditsStrategy::new(
            cfg.bandits.n_chunks,
            cfg.bandits.cpu_cap_factor,
            cfg.bandits.initial_mem_action,
        )),
        StrategyId::QLearning => Box::new(QLearningStrategy::new(QTemplate::from_config(cfg))),
    }
}
