use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::behavior::TaskBehavior;
use crate::domain::TraceRecord;

/// Consecutive per-core runtimes closer than this (relative) count as equal,
/// which marks the start of the saturated region.
const SATURATION_TOL: f64 = 1e-9;
/// Fitted noise below this is treated as rounding error.
const NOISE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub workflow: String,
    pub task: String,
    pub behavior: TaskBehavior,
    /// Largest relative runtime error of the fitted behavior over the
    /// successful records it was fitted to.
    pub runtime_residual: f64,
    /// Largest relative peak-memory error over the successful records.
    pub mem_residual: f64,
    pub records: usize,
    /// Why the fit fell back to defaults for some parameters, if it did.
    pub insufficient_data: Option<String>,
}

struct Line {
    intercept: f64,
    slope: f64,
}

/// Ordinary least squares on centred data.
fn least_squares(points: &[(f64, f64)]) -> Line {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    Line {
        intercept: my - slope * mx,
        slope,
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= SATURATION_TOL * a.abs().max(b.abs())
}

struct Level {
    cpus: u32,
    /// Runtime per input byte.
    time: f64,
    /// Busy core-seconds per input byte.
    busy: f64,
}

/// Per-byte serial runtime, parallel fraction, overhead and max parallelism.
struct CpuFit {
    serial_per_byte: f64,
    fraction: f64,
    overhead: f64,
    max_parallelism: f64,
    note: Option<String>,
}

fn fit_cpu(levels: &[Level]) -> CpuFit {
    let serial = |note: &str| CpuFit {
        serial_per_byte: mean(levels.iter().map(|l| l.time)),
        fraction: 0.0,
        overhead: 0.0,
        max_parallelism: 1.0,
        note: Some(note.to_string()),
    };
    if levels.len() < 2 {
        return serial("fewer than two distinct core counts; assuming a serial task");
    }

    // Runtime stops improving from the first pair of equal consecutive levels.
    let sat_start = (1..levels.len())
        .find(|&j| close(levels[j].time, levels[j - 1].time))
        .map(|j| j - 1);
    let (unsat, sat) = match sat_start {
        Some(k) => levels.split_at(k),
        None => (levels, &levels[..0]),
    };

    let (line, note) = match unsat.len() {
        0 => {
            return CpuFit {
                note: None,
                ..serial("")
            }
        }
        // Two points pin the runtime line only if the first flat level is
        // taken to be exactly max_parallelism, the largest value the data allow.
        1 => (
            &levels[..2],
            Some(format!(
                "one core count below saturation; assuming max_parallelism = {}",
                levels[1].cpus
            )),
        ),
        _ => (unsat, None),
    };
    let t = least_squares(&line.iter().map(|l| (1.0 / l.cpus as f64, l.time)).collect::<Vec<_>>());
    let b = least_squares(&line.iter().map(|l| (l.cpus as f64 - 1.0, l.busy)).collect::<Vec<_>>());
    if t.slope <= 0.0 {
        return serial("runtime does not fall with more cores; assuming a serial task");
    }
    let s = t.intercept + t.slope;
    let f_par = (t.slope / s).max(0.0);
    let f_over = (b.slope / s).max(0.0);
    let fraction = (f_par + f_over).min(1.0);
    let overhead = if fraction > 0.0 {
        (f_over / fraction).min(1.0 - 1e-12)
    } else {
        0.0
    };
    let (max_parallelism, note) = if fraction == 0.0 {
        (1.0, note)
    } else if sat.is_empty() {
        let top = unsat[unsat.len() - 1].cpus as f64;
        (
            top,
            Some(format!(
                "runtime still falling at {top} cores; max_parallelism is a lower bound"
            )),
        )
    } else {
        let gap = mean(sat.iter().map(|x| x.time)) - t.intercept;
        if gap > 0.0 {
            (t.slope / gap, note)
        } else {
            (
                sat[0].cpus as f64,
                Some("flat runtime below the fitted floor; max_parallelism set to the first flat level".into()),
            )
        }
    };
    CpuFit {
        serial_per_byte: s,
        fraction,
        overhead,
        max_parallelism: max_parallelism.max(1.0),
        note,
    }
}

fn fit_task(workflow: &str, task: &str, rows: &[&TraceRecord], oom_fraction: f64) -> FitResult {
    let ok: Vec<&TraceRecord> = rows.iter().copied().filter(|r| r.outcome.is_success()).collect();
    let mut notes = Vec::new();
    if rows.len() < 2 {
        notes.push("fewer than two records".to_string());
    }

    let input = |r: &TraceRecord| r.input_size_bytes.max(1) as f64;
    let basis: Vec<&TraceRecord> = if ok.is_empty() {
        notes.push("no successful attempts; runtime inferred from OOM kills".into());
        rows.to_vec()
    } else {
        ok.clone()
    };
    let runtime_of = |r: &TraceRecord| {
        if r.outcome.is_success() {
            r.outcome.runtime_s
        } else {
            r.outcome.runtime_s / oom_fraction
        }
    };
    let reference_input_bytes = mean(basis.iter().map(|r| input(r))).round().max(1.0) as u64;

    let mut by_cpus: BTreeMap<u32, Vec<&TraceRecord>> = BTreeMap::new();
    for r in &basis {
        by_cpus.entry(r.alloc.cpus).or_default().push(r);
    }
    let levels: Vec<Level> = by_cpus
        .iter()
        .map(|(&cpus, rs)| Level {
            cpus,
            time: mean(rs.iter().map(|r| runtime_of(r) / input(r))),
            busy: mean(
                rs.iter()
                    .map(|r| runtime_of(r) * r.outcome.cpu_usage_cores() / input(r)),
            ),
        })
        .collect();
    let cpu = fit_cpu(&levels);
    notes.extend(cpu.note.clone());

    // Peak memory is linear in input size; OOM peaks are censored.
    let mem_points: Vec<(f64, f64)> = ok
        .iter()
        .map(|r| (r.input_size_bytes as f64, r.outcome.peak_rss_bytes as f64))
        .collect();
    let (mem_base, mem_slope) = if mem_points.is_empty() {
        let top = rows.iter().map(|r| r.alloc.mem_bytes).max().unwrap_or(1);
        (top.saturating_mul(2) as f64, 0.0)
    } else {
        let line = least_squares(&mem_points);
        if line.slope <= 0.0 {
            (mean(mem_points.iter().map(|p| p.1)), 0.0)
        } else {
            (line.intercept, line.slope)
        }
    };

    let mut behavior = TaskBehavior {
        serial_runtime_s: (cpu.serial_per_byte * reference_input_bytes as f64).max(f64::MIN_POSITIVE),
        reference_input_bytes,
        parallel_fraction: cpu.fraction,
        max_parallelism: cpu.max_parallelism,
        parallel_overhead: cpu.overhead,
        peak_mem_base_bytes: mem_base.round().max(1.0) as u64,
        mem_per_input_byte: mem_slope,
        runtime_noise_cv: 0.0,
        mem_noise_cv: 0.0,
    };

    let rel = |pred: f64, obs: f64| if obs != 0.0 { (pred - obs) / obs } else { pred - obs };
    let t_err: Vec<f64> = ok
        .iter()
        .map(|r| {
            rel(
                behavior.nominal(r.input_size_bytes, r.alloc.cpus).0,
                r.outcome.runtime_s,
            )
        })
        .collect();
    let m_err: Vec<f64> = ok
        .iter()
        .map(|r| {
            rel(
                behavior.nominal_peak(r.input_size_bytes),
                r.outcome.peak_rss_bytes as f64,
            )
        })
        .collect();
    let max_abs = |e: &[f64]| e.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let rms = |e: &[f64]| {
        if e.is_empty() {
            0.0
        } else {
            mean(e.iter().map(|x| x * x)).sqrt()
        }
    };
    let floor = |x: f64| if x < NOISE_FLOOR { 0.0 } else { x };
    behavior.runtime_noise_cv = floor(rms(&t_err));
    behavior.mem_noise_cv = floor(rms(&m_err));

    FitResult {
        workflow: workflow.to_string(),
        task: task.to_string(),
        behavior,
        runtime_residual: max_abs(&t_err),
        mem_residual: max_abs(&m_err),
        records: rows.len(),
        insufficient_data: if notes.is_empty() { None } else { Some(notes.join("; ")) },
    }
}

/// Fits one behavior per (workflow, task) by least squares.
///
/// Runtime per input byte is regressed on `1/cpus` and busy core-time per
/// input byte on `cpus - 1` over the core counts where runtime still
/// improves; `max_parallelism` is solved from the flat region. Peak memory is
/// regressed on input size over successful attempts. Tasks without enough
/// variation get serial, constant-memory defaults and an explanation in
/// `insufficient_data`. `oom_fraction` converts OOM-kill runtimes back to
/// nominal runtimes when a task never succeeded.
pub fn fit_behavior(records: &[TraceRecord], oom_fraction: f64) -> BTreeMap<(String, String), FitResult> {
    let mut groups: BTreeMap<(String, String), Vec<&TraceRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.workflow.clone(), r.task_name.clone()))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|(key, rows)| {
            let fit = fit_task(&key.0, &key.1, &rows, oom_fraction);
            (key, fit)
        })
        .collect()
}
