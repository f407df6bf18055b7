//! Softmax policy over action preferences and the gradient preference update.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the reward baseline is seeded before the first reward arrives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineInit {
    /// The baseline starts at 0, so the first update uses the raw reward as advantage.
    #[default]
    Zero,
    /// The baseline starts at the first reward, so the first update is neutral.
    FirstReward,
}

/// Preferences and running statistics of one gradient bandit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBanditState {
    /// Action payloads: core counts for the CPU bandit, chunk multipliers for
    /// the memory bandit.
    pub actions: Vec<u64>,
    pub preferences: Vec<f64>,
    pub reward_baseline: f64,
    pub updates_seen: u64,
    pub runtime_sum_s: f64,
    pub runtime_count: u64,
    #[serde(default)]
    pub baseline_init: BaselineInit,
}

impl GradientBanditState {
    pub fn new(actions: Vec<u64>, baseline_init: BaselineInit) -> Result<Self> {
        if actions.len() < 2 {
            return Err(Error::invalid(
                "bandit action set",
                format!("needs at least 2 actions, got {}", actions.len()),
            ));
        }
        Ok(Self {
            preferences: vec![0.0; actions.len()],
            actions,
            reward_baseline: 0.0,
            updates_seen: 0,
            runtime_sum_s: 0.0,
            runtime_count: 0,
            baseline_init,
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.actions.len() < 2 || self.preferences.len() != self.actions.len() {
            return Err(Error::invalid(
                "bandit state",
                "preferences must match the action set and hold at least 2 entries",
            ));
        }
        if !self.preferences.iter().all(|h| h.is_finite()) || !self.reward_baseline.is_finite() {
            return Err(Error::invalid("bandit state", "non-finite preference or baseline"));
        }
        Ok(())
    }

    /// Action probabilities `exp(H(a)) / sum_q exp(H(q))`.
    pub fn policy(&self) -> Vec<f64> {
        softmax(&self.preferences)
    }

    /// Draws an action index from the current policy.
    pub fn sample_action<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.policy(), rng)
    }

    /// Index of the highest preference; ties go to the lowest index.
    pub fn greedy_action(&self) -> usize {
        argmax(&self.preferences)
    }

    /// Applies one gradient step for the reward observed after playing `chosen`.
    ///
    /// The advantage is taken against the baseline as it stood before this
    /// reward; the baseline is then moved to the running mean of all rewards.
    pub fn update_preferences(&mut self, chosen: usize, reward: f64, step: f64) -> Result<()> {
        if chosen >= self.actions.len() {
            return Err(Error::OutOfRange {
                what: "action index",
                value: chosen as i64,
                min: 0,
                max: self.actions.len() as i64 - 1,
            });
        }
        if !reward.is_finite() || !(step > 0.0 && step.is_finite()) {
            return Err(Error::invalid(
                "preference update",
                format!("reward {reward} and step {step} must be finite, step > 0"),
            ));
        }
        if self.updates_seen == 0 && self.baseline_init == BaselineInit::FirstReward {
            self.reward_baseline = reward;
        }
        let pi = self.policy();
        let advantage = reward - self.reward_baseline;
        for (a, (h, p)) in self.preferences.iter_mut().zip(&pi).enumerate() {
            if a == chosen {
                *h += step * advantage * (1.0 - p);
            } else {
                *h -= step * advantage * p;
            }
        }
        self.updates_seen += 1;
        self.reward_baseline += (reward - self.reward_baseline) / self.updates_seen as f64;
        Ok(())
    }

    pub fn record_runtime(&mut self, runtime_s: f64) {
        self.runtime_sum_s += runtime_s;
        self.runtime_count += 1;
    }

    /// `1 / avg(runtime)` over the runtimes recorded so far.
    pub fn cpu_step_size(&self) -> Result<f64> {
        if self.runtime_count == 0 {
            return Err(Error::NoObservations);
        }
        Ok(1.0 / (self.runtime_sum_s / self.runtime_count as f64))
    }
}

/// Numerically stable softmax. Subtracting the maximum leaves the result unchanged.
pub fn softmax(h: &[f64]) -> Vec<f64> {
    let max = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut e: Vec<f64> = h.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = e.iter().sum();
    for v in &mut e {
        *v /= z;
    }
    e
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding slack above the last cumulative sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
