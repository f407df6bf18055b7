use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{AttemptStatus, ExecutionOutcome, ResourceAlloc};
use crate::error::{Error, Result};

pub const DEFAULT_OOM_FRACTION: f64 = 0.5;

/// Resource behaviour of one abstract task.
///
/// Runtime follows Amdahl's law with an optional coordination overhead: the
/// parallel part on `p = min(cpus, max_parallelism)` cores costs
/// `1 + overhead * (p - 1)` times its serial work, so runtime flattens out at
/// `max_parallelism` while busy core-time keeps growing with `p`. With
/// `parallel_overhead = 0` this is plain Amdahl and busy core-time equals the
/// serial work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskBehavior {
    /// Runtime on one core at `reference_input_bytes`.
    pub serial_runtime_s: f64,
    pub reference_input_bytes: u64,
    pub parallel_fraction: f64,
    pub max_parallelism: f64,
    #[serde(default)]
    pub parallel_overhead: f64,
    pub peak_mem_base_bytes: u64,
    #[serde(default)]
    pub mem_per_input_byte: f64,
    #[serde(default)]
    pub runtime_noise_cv: f64,
    #[serde(default)]
    pub mem_noise_cv: f64,
}

impl TaskBehavior {
    pub fn validate(&self, name: &str) -> Result<()> {
        let bad = |reason: String| Err(Error::invalid(format!("behavior `{name}`"), reason));
        let finite = [
            self.serial_runtime_s,
            self.parallel_fraction,
            self.max_parallelism,
            self.parallel_overhead,
            self.mem_per_input_byte,
            self.runtime_noise_cv,
            self.mem_noise_cv,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return bad("all fields must be finite".into());
        }
        if self.serial_runtime_s <= 0.0 {
            return bad(format!("serial_runtime_s must be > 0, got {}", self.serial_runtime_s));
        }
        if self.reference_input_bytes == 0 {
            return bad("reference_input_bytes must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.parallel_fraction) {
            return bad(format!(
                "parallel_fraction must be in [0, 1], got {}",
                self.parallel_fraction
            ));
        }
        if self.max_parallelism < 1.0 {
            return bad(format!("max_parallelism must be >= 1, got {}", self.max_parallelism));
        }
        if !(0.0..1.0).contains(&self.parallel_overhead) {
            return bad(format!(
                "parallel_overhead must be in [0, 1), got {}",
                self.parallel_overhead
            ));
        }
        if self.peak_mem_base_bytes == 0 {
            return bad("peak_mem_base_bytes must be >= 1".into());
        }
        if self.mem_per_input_byte < 0.0 || self.runtime_noise_cv < 0.0 || self.mem_noise_cv < 0.0 {
            return bad("mem_per_input_byte and noise CVs must be non-negative".into());
        }
        Ok(())
    }

    /// One-core runtime for an input of `input_bytes` (at least one byte).
    pub fn serial_runtime_for(&self, input_bytes: u64) -> f64 {
        self.serial_runtime_s * input_bytes.max(1) as f64 / self.reference_input_bytes as f64
    }

    pub fn effective_parallelism(&self, cpus: u32) -> f64 {
        (cpus as f64).min(self.max_parallelism)
    }

    /// Wall-clock time relative to the serial runtime.
    pub fn time_factor(&self, cpus: u32) -> f64 {
        let p = self.effective_parallelism(cpus);
        let f = self.parallel_fraction;
        (1.0 - f) + f * (1.0 + self.parallel_overhead * (p - 1.0)) / p
    }

    /// Busy core-time relative to the serial runtime.
    pub fn work_factor(&self, cpus: u32) -> f64 {
        let p = self.effective_parallelism(cpus);
        1.0 + self.parallel_fraction * self.parallel_overhead * (p - 1.0)
    }

    /// Noise-free runtime and busy cores at an allocation.
    pub fn nominal(&self, input_bytes: u64, cpus: u32) -> (f64, f64) {
        let base = self.serial_runtime_for(input_bytes);
        let t = base * self.time_factor(cpus);
        (t, base * self.work_factor(cpus) / t)
    }

    /// Noise-free peak memory for an input size.
    pub fn nominal_peak(&self, input_bytes: u64) -> f64 {
        self.peak_mem_base_bytes as f64 + self.mem_per_input_byte * input_bytes as f64
    }
}

fn noise<R: Rng + ?Sized>(cv: f64, rng: &mut R) -> f64 {
    if cv <= 0.0 {
        return 1.0;
    }
    LogNormal::from_mean_cv(1.0, cv)
        .expect("cv validated as finite and positive")
        .sample(rng)
}

/// Runs one attempt of a task. Memory demand above the allocation is an OOM
/// kill after `oom_fraction` of the nominal runtime, reporting the allocation
/// as peak RSS.
pub fn execute<R: Rng + ?Sized>(
    behavior: &TaskBehavior,
    input_size_bytes: u64,
    alloc: &ResourceAlloc,
    oom_fraction: f64,
    rng: &mut R,
) -> ExecutionOutcome {
    let base = behavior.serial_runtime_for(input_size_bytes);
    let time_noise = noise(behavior.runtime_noise_cv, rng);
    let mem_noise = noise(behavior.mem_noise_cv, rng);

    let runtime = base * behavior.time_factor(alloc.cpus) * time_noise;
    let busy = base * behavior.work_factor(alloc.cpus) * time_noise;
    let cpu_usage_pct = (100.0 * busy / runtime).min(100.0 * alloc.cpus as f64);
    let demand = (behavior.nominal_peak(input_size_bytes) * mem_noise).round().max(1.0) as u64;

    if demand > alloc.mem_bytes {
        ExecutionOutcome {
            runtime_s: runtime * oom_fraction,
            cpu_usage_pct,
            peak_rss_bytes: alloc.mem_bytes,
            status: AttemptStatus::OomKilled,
        }
    } else {
        ExecutionOutcome {
            runtime_s: runtime,
            cpu_usage_pct,
            peak_rss_bytes: demand,
            status: AttemptStatus::Success,
        }
    }
}
