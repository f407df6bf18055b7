//! Tabular Q-learning over joint (CPU level, memory level) allocation states.
//!
//! The agent moves one level at a time: more or fewer cores, more or less
//! memory, or stays put. The executed allocation is the state it moves to.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::{escalate_after_oom, OomEscalator};
use crate::domain::{cpu_unused, mem_utilization, ExecutionOutcome, ResourceAlloc, BYTES_PER_GB};
use crate::error::{Error, Result};

pub const SNAPSHOT_SCHEMA_VERSION: u32 = 1;

/// Floor on the unused-core penalty.
pub const CPU_WASTE_FLOOR: f64 = 0.1;
/// Cap on memory utilisation, so at least a quarter of the allocation is penalised.
pub const MEM_USE_CAP: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QState {
    pub cpu_idx: usize,
    pub mem_idx: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QAction {
    IncCpu,
    DecCpu,
    IncMem,
    DecMem,
    Noop,
}

impl QAction {
    /// Fixed order; greedy ties resolve to the earliest action.
    pub const ALL: [QAction; 5] = [
        QAction::IncCpu,
        QAction::DecCpu,
        QAction::IncMem,
        QAction::DecMem,
        QAction::Noop,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for QAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Learning hyperparameters and the level grid of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QConfig {
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Episodes over which epsilon decays linearly from start to end.
    pub epsilon_decay_episodes: u64,
    pub cpu_levels: Vec<u32>,
    pub mem_levels: Vec<u64>,
}

impl QConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Err(Error::invalid("q-learning config", reason));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must be in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.discount) {
            return bad("discount must be in [0, 1)");
        }
        let unit = 0.0..=1.0;
        if !unit.contains(&self.epsilon_start) || !unit.contains(&self.epsilon_end) {
            return bad("epsilon_start and epsilon_end must be in [0, 1]");
        }
        if self.epsilon_start < self.epsilon_end {
            return bad("epsilon_start must be >= epsilon_end");
        }
        if self.cpu_levels.len() < 2 || self.mem_levels.len() < 2 {
            return bad("level lists need at least 2 entries");
        }
        if !self.cpu_levels.windows(2).all(|w| w[0] < w[1]) || !self.mem_levels.windows(2).all(|w| w[0] < w[1]) {
            return bad("level lists must be strictly increasing");
        }
        if self.cpu_levels[0] == 0 || self.mem_levels[0] == 0 {
            return bad("levels must be positive");
        }
        Ok(())
    }

    /// Linearly decayed exploration rate for a 0-based episode index.
    pub fn epsilon(&self, episode: u64) -> f64 {
        if self.epsilon_decay_episodes == 0 {
            return self.epsilon_end;
        }
        let frac = (episode as f64 / self.epsilon_decay_episodes as f64).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }

    pub fn alloc(&self, s: QState) -> ResourceAlloc {
        ResourceAlloc {
            cpus: self.cpu_levels[s.cpu_idx],
            mem_bytes: self.mem_levels[s.mem_idx],
        }
    }

    /// Smallest levels covering `alloc`, or the top levels when it exceeds them.
    pub fn state_covering(&self, alloc: &ResourceAlloc) -> QState {
        QState {
            cpu_idx: covering_index(&self.cpu_levels, alloc.cpus),
            mem_idx: covering_index(&self.mem_levels, alloc.mem_bytes),
        }
    }

    pub fn contains(&self, s: QState) -> bool {
        s.cpu_idx < self.cpu_levels.len() && s.mem_idx < self.mem_levels.len()
    }

    pub fn is_legal(&self, s: QState, a: QAction) -> bool {
        match a {
            QAction::IncCpu => s.cpu_idx + 1 < self.cpu_levels.len(),
            QAction::DecCpu => s.cpu_idx > 0,
            QAction::IncMem => s.mem_idx + 1 < self.mem_levels.len(),
            QAction::DecMem => s.mem_idx > 0,
            QAction::Noop => true,
        }
    }

    pub fn legal_actions(&self, s: QState) -> impl Iterator<Item = QAction> + '_ {
        QAction::ALL.into_iter().filter(move |&a| self.is_legal(s, a))
    }
}

fn covering_index<T: PartialOrd + Copy>(levels: &[T], value: T) -> usize {
    levels.iter().position(|&l| l >= value).unwrap_or(levels.len() - 1)
}

/// Moves one index step, clamped to the grid.
pub fn apply_action(s: QState, a: QAction, cfg: &QConfig) -> QState {
    let mut next = s;
    match a {
        QAction::IncCpu => next.cpu_idx = (s.cpu_idx + 1).min(cfg.cpu_levels.len() - 1),
        QAction::DecCpu => next.cpu_idx = s.cpu_idx.saturating_sub(1),
        QAction::IncMem => next.mem_idx = (s.mem_idx + 1).min(cfg.mem_levels.len() - 1),
        QAction::DecMem => next.mem_idx = s.mem_idx.saturating_sub(1),
        QAction::Noop => {}
    }
    next
}

/// Action values over the level grid. Unvisited pairs read as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_cpu: usize,
    n_mem: usize,
    values: Vec<f64>,
    visits: Vec<u64>,
}

impl QTable {
    pub fn new(n_cpu: usize, n_mem: usize) -> Self {
        let n = n_cpu * n_mem * QAction::ALL.len();
        Self {
            n_cpu,
            n_mem,
            values: vec![0.0; n],
            visits: vec![0; n],
        }
    }

    pub fn for_config(cfg: &QConfig) -> Self {
        Self::new(cfg.cpu_levels.len(), cfg.mem_levels.len())
    }

    fn slot(&self, s: QState, a: QAction) -> usize {
        debug_assert!(s.cpu_idx < self.n_cpu && s.mem_idx < self.n_mem);
        (s.cpu_idx * self.n_mem + s.mem_idx) * QAction::ALL.len() + a.index()
    }

    pub fn get(&self, s: QState, a: QAction) -> f64 {
        self.values[self.slot(s, a)]
    }

    pub fn set(&mut self, s: QState, a: QAction, v: f64) {
        let i = self.slot(s, a);
        self.values[i] = v;
    }

    pub fn visits(&self, s: QState, a: QAction) -> u64 {
        self.visits[self.slot(s, a)]
    }

    /// Best legal action in `s`, ties by [`QAction::ALL`] order.
    pub fn greedy(&self, s: QState, cfg: &QConfig) -> QAction {
        let mut best = QAction::Noop;
        let mut best_v = f64::NEG_INFINITY;
        for a in cfg.legal_actions(s) {
            let v = self.get(s, a);
            if v > best_v {
                best = a;
                best_v = v;
            }
        }
        best
    }

    pub fn max_value(&self, s: QState, cfg: &QConfig) -> f64 {
        cfg.legal_actions(s)
            .map(|a| self.get(s, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn states(&self) -> impl Iterator<Item = QState> + '_ {
        (0..self.n_cpu).flat_map(move |c| (0..self.n_mem).map(move |m| QState { cpu_idx: c, mem_idx: m }))
    }
}

/// Epsilon-greedy choice among the legal actions of `s`. With `epsilon == 0`
/// no randomness is consumed.
pub fn select_action<R: Rng + ?Sized>(table: &QTable, s: QState, epsilon: f64, cfg: &QConfig, rng: &mut R) -> QAction {
    let explore = if epsilon <= 0.0 {
        false
    } else if epsilon >= 1.0 {
        true
    } else {
        rng.random::<f64>() < epsilon
    };
    if explore {
        let legal: Vec<QAction> = cfg.legal_actions(s).collect();
        legal[rng.random_range(0..legal.len())]
    } else {
        table.greedy(s, cfg)
    }
}

/// One Bellman backup: `Q(s,a) += lr * (r + discount * max Q(s', .) - Q(s,a))`.
pub fn q_update(table: &mut QTable, s: QState, a: QAction, reward: f64, s_next: QState, cfg: &QConfig) {
    let target = reward + cfg.discount * table.max_value(s_next, cfg);
    let i = table.slot(s, a);
    table.values[i] += cfg.learning_rate * (target - table.values[i]);
    table.visits[i] += 1;
}

/// `-max(0.1, unused cores) * (t / avg_t) * mem_gb * (1 - min(0.75, mem_use))`.
pub fn q_reward(alloc: &ResourceAlloc, outcome: &ExecutionOutcome, avg_t_s: f64) -> f64 {
    let cpu_waste = cpu_unused(alloc, outcome).max(CPU_WASTE_FLOOR);
    let slowdown = outcome.runtime_s / avg_t_s;
    let mem_waste = alloc.mem_bytes as f64 / BYTES_PER_GB * (1.0 - mem_utilization(alloc, outcome).min(MEM_USE_CAP));
    -cpu_waste * slowdown * mem_waste
}

/// Penalty for an out-of-memory attempt: twice the worst success penalty at
/// this allocation with `t = avg_t`.
pub fn q_reward_oom(alloc: &ResourceAlloc, _avg_t_s: f64) -> f64 {
    -2.0 * (alloc.cpus as f64).max(CPU_WASTE_FLOOR) * alloc.mem_gb()
}

/// A transition proposed by the agent: where it is and where it moves to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QStep {
    pub from: QState,
    pub action: QAction,
    pub to: QState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QObservation {
    pub reward: f64,
    /// State the agent is in afterwards. After an OOM kill this is the
    /// escalated state the retry runs in.
    pub next_state: QState,
}

/// One Q-learning agent for a single task and machine.
#[derive(Debug, Clone, PartialEq)]
pub struct QAgent {
    pub cfg: QConfig,
    pub table: QTable,
    pub state: QState,
    pub runtime_sum_s: f64,
    pub runtime_count: u64,
}

impl QAgent {
    pub fn new(cfg: QConfig, start: &ResourceAlloc) -> Result<Self> {
        cfg.validate()?;
        let state = cfg.state_covering(start);
        Ok(Self {
            table: QTable::for_config(&cfg),
            cfg,
            state,
            runtime_sum_s: 0.0,
            runtime_count: 0,
        })
    }

    /// Historical mean runtime, if any run has finished.
    pub fn avg_runtime(&self) -> Option<f64> {
        (self.runtime_count > 0).then(|| self.runtime_sum_s / self.runtime_count as f64)
    }

    pub fn propose<R: Rng + ?Sized>(&self, epsilon: f64, rng: &mut R) -> QStep {
        let action = select_action(&self.table, self.state, epsilon, &self.cfg, rng);
        QStep {
            from: self.state,
            action,
            to: apply_action(self.state, action, &self.cfg),
        }
    }

    /// A retry stays where the agent is.
    pub fn stay(&self) -> QStep {
        QStep {
            from: self.state,
            action: QAction::Noop,
            to: self.state,
        }
    }

    pub fn alloc(&self, s: QState) -> ResourceAlloc {
        self.cfg.alloc(s)
    }

    /// Scores the attempt executed at `step.to` and applies the backup.
    pub fn observe(&mut self, step: QStep, outcome: &ExecutionOutcome) -> Result<QObservation> {
        if !self.cfg.contains(step.from) || !self.cfg.contains(step.to) {
            return Err(Error::invalid("q-learning step", "state outside the level grid"));
        }
        let alloc = self.cfg.alloc(step.to);
        let (reward, next_state) = if outcome.is_success() {
            // first observation: t / avg_t = 1
            let avg_t = self.avg_runtime().unwrap_or(outcome.runtime_s);
            let r = q_reward(&alloc, outcome, avg_t);
            self.runtime_sum_s += outcome.runtime_s;
            self.runtime_count += 1;
            (r, step.to)
        } else {
            let avg_t = self.avg_runtime().unwrap_or(1.0);
            let r = q_reward_oom(&alloc, avg_t);
            let top = *self.cfg.mem_levels.last().expect("validated level list");
            let escalated = escalate_after_oom(&OomEscalator::new(alloc.mem_bytes, top), alloc.mem_bytes);
            let forced = QState {
                mem_idx: covering_index(&self.cfg.mem_levels, escalated),
                ..step.to
            };
            (r, forced)
        };
        q_update(&mut self.table, step.from, step.action, reward, next_state, &self.cfg);
        self.state = next_state;
        Ok(QObservation { reward, next_state })
    }

    /// Follows greedy actions from `start` until Noop is chosen. Returns
    /// `None` if the greedy walk cycles.
    pub fn greedy_fixed_point(&self, start: QState) -> Option<QState> {
        let mut s = start;
        let mut seen = std::collections::HashSet::new();
        loop {
            let a = self.table.greedy(s, &self.cfg);
            if a == QAction::Noop {
                return Some(s);
            }
            if !seen.insert(s) {
                return None;
            }
            s = apply_action(s, a, &self.cfg);
        }
    }

    pub fn snapshot(&self) -> QSnapshot {
        let mut q_values = Vec::new();
        let mut visit_counts = Vec::new();
        for s in self.table.states() {
            for a in QAction::ALL {
                let n = self.table.visits(s, a);
                if n > 0 {
                    q_values.push(QEntry {
                        state: s,
                        action: a,
                        value: self.table.get(s, a),
                    });
                    visit_counts.push(QVisit {
                        state: s,
                        action: a,
                        count: n,
                    });
                }
            }
        }
        QSnapshot {
            schema_version: SNAPSHOT_SCHEMA_VERSION,
            config: self.cfg.clone(),
            current_state: self.state,
            q_values,
            visit_counts,
            runtime_sum_s: self.runtime_sum_s,
            runtime_count: self.runtime_count,
        }
    }

    pub fn restore(snap: QSnapshot) -> Result<Self> {
        if snap.schema_version != SNAPSHOT_SCHEMA_VERSION {
            return Err(Error::invalid(
                "q-learning snapshot",
                format!("unsupported schema_version {}", snap.schema_version),
            ));
        }
        snap.config.validate()?;
        let cfg = snap.config;
        let mut table = QTable::for_config(&cfg);
        for e in snap.q_values {
            if !cfg.contains(e.state) || !e.value.is_finite() {
                return Err(Error::invalid("q-learning snapshot", "bad q_values entry"));
            }
            table.set(e.state, e.action, e.value);
        }
        for v in snap.visit_counts {
            if !cfg.contains(v.state) {
                return Err(Error::invalid("q-learning snapshot", "bad visit_counts entry"));
            }
            let i = table.slot(v.state, v.action);
            table.visits[i] = v.count;
        }
        if !cfg.contains(snap.current_state) {
            return Err(Error::invalid("q-learning snapshot", "current_state outside the grid"));
        }
        Ok(Self {
            cfg,
            table,
            state: snap.current_state,
            runtime_sum_s: snap.runtime_sum_s,
            runtime_count: snap.runtime_count,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QEntry {
    pub state: QState,
    pub action: QAction,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QVisit {
    pub state: QState,
    pub action: QAction,
    pub count: u64,
}

/// Persisted Q-learning agent. Only visited pairs are listed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QSnapshot {
    pub schema_version: u32,
    pub config: QConfig,
    pub current_state: QState,
    pub q_values: Vec<QEntry>,
    pub visit_counts: Vec<QVisit>,
    pub runtime_sum_s: f64,
    pub runtime_count: u64,
}
