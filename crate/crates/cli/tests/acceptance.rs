//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use twofloat::TwoFloat;
use wfsize::bandit::{
    cpu_action_set, cpu_reward, escalate_after_oom, mem_reward, BaselineInit, GradientBanditState, MemoryBanditConfig,
    OomEscalator,
};
use wfsize::baselines::{feedback_alloc, feedback_retry, FeedbackPhase, FeedbackStats, Predictor};
use wfsize::experiment::{run_episode, BanditsStrategy, Experiment, ExperimentConfig, StrategyId};
use wfsize::qlearn::{q_reward, QAgent, QConfig, QState};
use wfsize::rng::seeded;
use wfsize::simulator::{execute, TaskBehavior};
use wfsize::{AttemptStatus, ExecutionOutcome, MachineSpec, ResourceAlloc};

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Duration, Box<dyn Fn() -> Check + 'a>);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn bundled() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic.toml")
}

fn wfsize(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_wfsize"))
        .args(args)
        .env("WFSIZE_LOG", "error")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!(
            "wfsize {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> Result<serde_json::Value, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn policy_correctness() -> Check {
    let mut rng = seeded(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let len = rng.random_range(2..=32);
        let h: Vec<f64> = (0..len).map(|_| rng.random_range(-20.0..=20.0)).collect();
        let mut state = GradientBanditState::new((1..=len as u64).collect(), BaselineInit::Zero).unwrap();
        state.preferences = h.clone();
        let pi = state.policy();
        let sum: f64 = pi.iter().sum();
        ensure((sum - 1.0).abs() <= 1e-12, || format!("policy sums to {sum}"))?;
        ensure(pi.iter().all(|&x| x > 0.0), || "non-positive probability".into())?;
        // double-double evaluation of e^H(a) / sum e^H(q), no shift
        let e: Vec<TwoFloat> = h.iter().map(|&x| TwoFloat::from(x).exp()).collect();
        let z = e.iter().fold(TwoFloat::from(0.0), |acc, &x| acc + x);
        for (i, &x) in e.iter().enumerate() {
            worst = worst.max(rel_err(pi[i], f64::from(x / z)));
        }
    }
    ensure(worst <= 1e-10, || format!("max relative error {worst:e}"))?;
    Ok(format!("1000 vectors, max relative error {worst:.1e}"))
}

fn preference_sum_conservation() -> Check {
    let mut rng = seeded(2);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let len = rng.random_range(2..=16);
        let mut state = GradientBanditState::new((1..=len as u64).collect(), BaselineInit::Zero).unwrap();
        state.preferences = (0..len).map(|_| rng.random_range(-10.0..10.0)).collect();
        state.reward_baseline = rng.random_range(-100.0..0.0);
        state.updates_seen = rng.random_range(0..50);
        let before: f64 = state.preferences.iter().sum();
        let chosen = rng.random_range(0..len);
        let reward = rng.random_range(-200.0..0.0);
        let step = rng.random_range(1e-4..1.0);
        state
            .update_preferences(chosen, reward, step)
            .map_err(|e| e.to_string())?;
        let after: f64 = state.preferences.iter().sum();
        worst = worst.max((after - before).abs());
    }
    ensure(worst <= 1e-9, || format!("sum drifted by {worst:e}"))?;
    Ok(format!("10000 updates, max drift {worst:.1e}"))
}

fn outcome(t: f64, usage_pct: f64, peak: u64, status: AttemptStatus) -> ExecutionOutcome {
    ExecutionOutcome {
        runtime_s: t,
        cpu_usage_pct: usage_pct,
        peak_rss_bytes: peak,
        status,
    }
}

fn reward_bounds() -> Check {
    let n = 10u32;
    let cfg = MemoryBanditConfig::for_default(10_000_000_000, n, None).map_err(|e| e.to_string())?;
    let c = cfg.chunk_bytes;
    let lo = -2.0 * n as f64;
    let mut cases = 0;
    for a in 1..=n {
        let asg = a as u64 * c;
        for k in 0..=10 {
            let peak = (asg as f64 * k as f64 / 10.0).round() as u64;
            for status in [AttemptStatus::Success, AttemptStatus::OomKilled] {
                let peak = if status == AttemptStatus::OomKilled { asg } else { peak };
                let r = mem_reward(asg, &outcome(10.0, 100.0, peak, status), &cfg);
                ensure((lo..=0.0).contains(&r), || {
                    format!("memory reward {r} at a={a}, peak={peak}")
                })?;
                cases += 1;
            }
        }
    }
    for cpus in 1..=16u32 {
        let alloc = ResourceAlloc::new(cpus, 1).unwrap();
        for t in [0.5, 1.0, 60.0, 3600.0] {
            for k in 0..=20 {
                let usage = 100.0 * cpus as f64 * k as f64 / 20.0;
                let r = cpu_reward(&alloc, &outcome(t, usage, 1, AttemptStatus::Success));
                let bound = -t * (cpus as f64 + 1.0);
                ensure(r >= bound - 1e-9 * t && r <= -t + 1e-9 * t, || {
                    format!("cpu reward {r} outside [{bound}, {}] at cpus={cpus}, usage={usage}", -t)
                })?;
                cases += 1;
            }
        }
    }
    Ok(format!("{cases} reward evaluations in bounds"))
}

const CONVERGENCE_TASK: &str = r#"
strategies = ["bandits"]

[[machines]]
name = "m"
total_cores = 8
total_mem_bytes = 64000000000

[[workflows]]
name = "w"

[[workflows.stages]]
task = "t"
default_cpus = 2
default_mem_bytes = 10000000000
instances = 1
input = { dist = "fixed", bytes = 1000000000 }

[behaviors.t]
serial_runtime_s = 600.0
reference_input_bytes = 1000000000
parallel_fraction = 0.9
max_parallelism = 4.0
peak_mem_base_bytes = 3200000000
mem_per_input_byte = 0.0
runtime_noise_cv = 0.0
mem_noise_cv = 0.0
"#;

fn bandit_convergence() -> Check {
    let base = ExperimentConfig::from_toml(CONVERGENCE_TASK).map_err(|e| e.to_string())?;
    let behavior = base.behaviors["t"].clone();
    let machine = base.machines[0].clone();
    let input = 1_000_000_000;

    // exhaustive enumeration of the deterministic arm rewards
    let arms = cpu_action_set(2, &machine, base.bandits.cpu_cap_factor);
    let best_cpu = arms
        .iter()
        .map(|&c| {
            let alloc = ResourceAlloc::new(c as u32, 64_000_000_000).unwrap();
            let out = execute(&behavior, input, &alloc, 0.5, &mut seeded(0));
            (c as u32, cpu_reward(&alloc, &out))
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0;
    let mem_cfg =
        MemoryBanditConfig::for_default(10_000_000_000, base.bandits.n_chunks, None).map_err(|e| e.to_string())?;
    let best_mem = (1..=mem_cfg.n_chunks)
        .map(|a| {
            let alloc = ResourceAlloc::new(2, a as u64 * mem_cfg.chunk_bytes).unwrap();
            let out = execute(&behavior, input, &alloc, 0.5, &mut seeded(0));
            (a, mem_reward(alloc.mem_bytes, &out, &mem_cfg))
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0;

    let (mut cpu_hits, mut mem_hits) = (0, 0);
    for seed in 0..100u64 {
        let mut cfg = base.clone();
        cfg.seed = seed;
        let exp = Experiment::synthetic(cfg).map_err(|e| e.to_string())?;
        let mut strategy = BanditsStrategy::new(exp.config.bandits.n_chunks, exp.config.bandits.cpu_cap_factor, None);
        for episode in 0..200 {
            run_episode(&mut strategy, &exp, episode).map_err(|e| e.to_string())?;
        }
        let (_, pair) = strategy.agents.iter().next().ok_or("no agent")?;
        cpu_hits += (pair.cpu.greedy_cpus() == best_cpu) as u32;
        mem_hits += (pair.mem.greedy_action() == best_mem) as u32;
    }
    let summary = format!("optimum {best_cpu} cores / {best_mem} chunks; CPU {cpu_hits}/100, memory {mem_hits}/100");
    ensure(cpu_hits >= 95 && mem_hits >= 95, || summary.clone())?;
    Ok(summary)
}

fn q_convergence() -> Check {
    let behavior = TaskBehavior {
        serial_runtime_s: 600.0,
        reference_input_bytes: 1_000_000_000,
        parallel_fraction: 0.99,
        max_parallelism: 4.0,
        parallel_overhead: 0.0,
        peak_mem_base_bytes: 3_500_000_000,
        mem_per_input_byte: 0.0,
        runtime_noise_cv: 0.0,
        mem_noise_cv: 0.0,
    };
    let input = 1_000_000_000;
    let steps = 2000u64;
    // shipped defaults
    let cfg = QConfig {
        learning_rate: 0.1,
        discount: 0.5,
        epsilon_start: 1.0,
        epsilon_end: 0.05,
        epsilon_decay_episodes: steps * 7 / 10,
        cpu_levels: (1..=5).collect(),
        mem_levels: (1..=10).map(|k| k * 1_000_000_000).collect(),
    };

    // brute force: expected penalty at every state; t / avg_t scales all
    // states alike, so avg_t = 1 ranks them the same
    let mut ranked = Vec::new();
    for (ci, &c) in cfg.cpu_levels.iter().enumerate() {
        for (mi, &m) in cfg.mem_levels.iter().enumerate() {
            let alloc = ResourceAlloc::new(c, m).unwrap();
            let out = execute(&behavior, input, &alloc, 0.5, &mut seeded(0));
            if out.is_success() {
                ranked.push((q_reward(&alloc, &out, 1.0), ci, mi));
            }
        }
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    ensure(ranked[0].0 > ranked[1].0, || "optimum is not unique".into())?;
    let best = QState {
        cpu_idx: ranked[0].1,
        mem_idx: ranked[0].2,
    };

    let start = ResourceAlloc::new(5, 10_000_000_000).unwrap();
    let mut hits = 0;
    for seed in 0..100u64 {
        let mut agent = QAgent::new(cfg.clone(), &start).map_err(|e| e.to_string())?;
        let mut rng = seeded(seed);
        for step in 0..steps {
            let s = agent.propose(cfg.epsilon(step), &mut rng);
            let out = execute(&behavior, input, &agent.alloc(s.to), 0.5, &mut rng);
            agent.observe(s, &out).map_err(|e| e.to_string())?;
        }
        if agent.greedy_fixed_point(agent.state) == Some(best) {
            hits += 1;
        }
    }
    let summary = format!(
        "optimum {} cores / {} GB; {hits}/100 greedy walks end there",
        cfg.cpu_levels[best.cpu_idx],
        cfg.mem_levels[best.mem_idx] / 1_000_000_000
    );
    ensure(hits >= 90, || summary.clone())?;
    Ok(summary)
}

fn oom_escalation() -> Check {
    let mut rng = seeded(6);
    let mut branches = [0u32; 3];
    for _ in 0..100_000 {
        let failed = rng.random_range(1..1u64 << 40);
        let proposal = rng.random_range(1..1u64 << 41);
        let default = rng.random_range(1..1u64 << 42);
        let out = escalate_after_oom(&OomEscalator::new(failed, default), proposal);
        let expected = if proposal > failed {
            branches[0] += 1;
            proposal
        } else if 2 * proposal > failed {
            branches[1] += 1;
            2 * proposal
        } else {
            branches[2] += 1;
            default
        };
        ensure(out == expected, || {
            format!("({failed}, {proposal}, {default}) gave {out}, expected {expected}")
        })?;
        ensure(out > failed || out == default, || {
            format!("({failed}, {proposal}, {default}) gave {out}")
        })?;
    }
    ensure(branches.iter().all(|&b| b > 0), || {
        format!("branch coverage {branches:?}")
    })?;
    Ok(format!("100000 triples, branch counts {branches:?}"))
}

fn feedback_baseline() -> Check {
    let mut rng = seeded(7);
    let machine = MachineSpec::new("m", 64, 512_000_000_000).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..60);
        let mut stats = FeedbackStats::default();
        let mut cpu = Vec::new();
        let mut rss = Vec::new();
        for _ in 0..n {
            let c = rng.random_range(0.1..16.0);
            let m = rng.random_range(1_000_000u64..100_000_000_000);
            stats.observe(&outcome(100.0, c * 100.0, m, AttemptStatus::Success));
            cpu.push(c);
            rss.push(m as f64);
        }
        stats.observe(&outcome(50.0, 100.0, 1 << 50, AttemptStatus::OomKilled));
        for (xs, got) in [(&cpu, &stats.cpu), (&rss, &stats.rss)] {
            // two-pass oracle
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
            worst = worst.max(rel_err(got.mean, mean)).max(rel_err(got.std(), var.sqrt()));
        }
        let max_rss = rss.iter().fold(0.0f64, |a, &b| a.max(b)) as u64;
        ensure(stats.max_peak_rss_bytes == max_rss, || "max-ever peak mismatch".into())?;
        let seq: Vec<u64> = (1..=3).map(|a| feedback_retry(&stats, a, &machine)).collect();
        ensure(seq == [max_rss, 2 * max_rss, machine.total_mem_bytes], || {
            format!("retry sequence {seq:?}")
        })?;

        stats.phase = FeedbackPhase::Predicting;
        let alloc = feedback_alloc(&stats, &machine, Predictor::MeanPlusStd, "t").map_err(|e| e.to_string())?;
        let mean = cpu.iter().sum::<f64>() / n as f64;
        let sd = (cpu.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        ensure(alloc.cpus == (mean + sd).ceil() as u32, || {
            format!("predicted {} cores for {}", alloc.cpus, mean + sd)
        })?;
    }
    ensure(worst <= 1e-9, || format!("statistics off by {worst:e}"))?;

    let mut stats = FeedbackStats::default();
    stats.observe(&outcome(1.0, 100.0, 6_000_000_000, AttemptStatus::Success));
    let machine = MachineSpec::new("m", 16, 128_000_000_000).unwrap();
    let seq: Vec<u64> = (1..=3).map(|a| feedback_retry(&stats, a, &machine)).collect();
    ensure(seq == [6_000_000_000, 12_000_000_000, 128_000_000_000], || {
        format!("retry sequence {seq:?}")
    })?;
    Ok(format!(
        "200 sequences, max relative error {worst:.1e}; retries 6/12/128 GB"
    ))
}

struct Overall {
    cpu_waste: f64,
    cpu_used: f64,
    mem_waste: f64,
}

fn overall(agg: &serde_json::Value, id: &str) -> Result<Overall, String> {
    let o = &agg["strategies"][id]["overall"];
    let get = |k: &str| o[k].as_f64().ok_or_else(|| format!("{id}: missing {k}"));
    Ok(Overall {
        cpu_waste: get("cpu_wastage_hours")?,
        cpu_used: get("used_cpu_hours")?,
        mem_waste: get("mem_wastage_gbh")?,
    })
}

fn directional(dir: &Path) -> Check {
    wfsize(&["simulate", "--config", p(&bundled()), "--out", p(dir)])?;
    let agg = read_json(&dir.join("aggregate.json"))?;
    let d = overall(&agg, "default_config")?;
    let f = overall(&agg, "feedback_loop")?;
    let b = overall(&agg, "bandits")?;
    let q = overall(&agg, "q_learning")?;
    let cut = |x: f64, base: f64| 1.0 - x / base;
    let checks = [
        ("bandits memory cut >= 50%", cut(b.mem_waste, d.mem_waste) >= 0.5),
        ("q-learning memory cut >= 50%", cut(q.mem_waste, d.mem_waste) >= 0.5),
        ("bandits CPU cut >= 50%", cut(b.cpu_waste, d.cpu_waste) >= 0.5),
        ("feedback memory <= bandits memory", f.mem_waste <= b.mem_waste),
        ("feedback used CPU > bandits used CPU", f.cpu_used > b.cpu_used),
    ];
    let summary = format!(
        "memory cut bandits {:.0}% q-learning {:.0}%, CPU cut bandits {:.0}%, memory GBh feedback {:.0} vs bandits {:.0}, used CPU h feedback {:.0} vs bandits {:.0}",
        100.0 * cut(b.mem_waste, d.mem_waste),
        100.0 * cut(q.mem_waste, d.mem_waste),
        100.0 * cut(b.cpu_waste, d.cpu_waste),
        f.mem_waste,
        b.mem_waste,
        f.cpu_used,
        b.cpu_used
    );
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    ensure(failed.is_empty(), || format!("{} failed; {summary}", failed.join(", ")))?;
    Ok(summary)
}

fn output_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

fn determinism(first: &Path, second: &Path) -> Check {
    wfsize(&["simulate", "--config", p(&bundled()), "--out", p(second)])?;
    let names = output_files(first);
    ensure(names == output_files(second), || "different file sets".into())?;
    ensure(names.iter().filter(|n| n.starts_with("ledger_")).count() == 4, || {
        format!("files {names:?}")
    })?;
    for name in &names {
        let a = fs::read(first.join(name)).map_err(|e| e.to_string())?;
        let b = fs::read(second.join(name)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{name} differs"))?;
    }
    Ok(format!("{} files byte-identical", names.len()))
}

fn round_trip(dir: &Path) -> Check {
    let mut cfg = ExperimentConfig::load(bundled()).map_err(|e| e.to_string())?;
    for b in cfg.behaviors.values_mut() {
        b.runtime_noise_cv = 0.0;
        b.mem_noise_cv = 0.0;
    }
    let cfg_path = dir.join("noise_free.toml");
    fs::write(&cfg_path, cfg.to_toml().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let sim = dir.join("sim");
    wfsize(&["simulate", "--config", p(&cfg_path), "--out", p(&sim)])?;

    // all ledgers in one trace file
    let mut trace = String::new();
    let mut ledgers = Vec::new();
    for id in StrategyId::ALL {
        let path = sim.join(format!("ledger_{}.csv", id.as_str()));
        let text = fs::read_to_string(&path).map_err(|e| e.to_string())?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if trace.is_empty() {
            trace.push_str(header);
            trace.push('\n');
        }
        for l in lines {
            trace.push_str(l);
            trace.push('\n');
        }
        ledgers.push(path);
    }
    let trace_path = dir.join("trace.csv");
    fs::write(&trace_path, trace).map_err(|e| e.to_string())?;
    let rep = dir.join("replay");
    wfsize(&[
        "replay",
        "--config",
        p(&cfg_path),
        "--out",
        p(&rep),
        "--episodes",
        "1",
        p(&trace_path),
    ])?;

    let fits = read_json(&rep.join("fits.json"))?;
    let mut worst = 0.0f64;
    let mut fitted = 0;
    for fit in fits.as_array().ok_or("fits.json is not a list")? {
        let task = fit["task"].as_str().ok_or("fit without task")?;
        let want = cfg
            .behaviors
            .get(task)
            .ok_or_else(|| format!("unexpected task {task}"))?;
        let got: TaskBehavior = serde_json::from_value(fit["behavior"].clone()).map_err(|e| e.to_string())?;
        let per_byte = |b: &TaskBehavior| b.serial_runtime_s / b.reference_input_bytes as f64;
        let mut errs = vec![
            rel_err(per_byte(&got), per_byte(want)),
            (got.parallel_fraction - want.parallel_fraction).abs(),
            rel_err(got.peak_mem_base_bytes as f64, want.peak_mem_base_bytes as f64),
            rel_err(got.mem_per_input_byte, want.mem_per_input_byte),
        ];
        if want.parallel_fraction > 0.0 {
            errs[1] = rel_err(got.parallel_fraction, want.parallel_fraction);
            errs.push(rel_err(got.max_parallelism, want.max_parallelism));
            errs.push(rel_err(got.parallel_overhead, want.parallel_overhead));
        }
        let e = errs.iter().fold(0.0f64, |a, &b| a.max(b));
        ensure(e <= 1e-6, || format!("{task}: parameter error {e:e}"))?;
        worst = worst.max(e);
        fitted += 1;
    }
    ensure(fitted == cfg.behaviors.len(), || {
        format!("{fitted} fits for {} tasks", cfg.behaviors.len())
    })?;

    let cmp_dir = dir.join("report");
    let mut args = vec!["report", "--window", "10", "--out", p(&cmp_dir)];
    args.extend(ledgers.iter().map(|l| p(l)));
    wfsize(&args)?;
    let recomputed = read_json(&cmp_dir.join("comparison.json"))?;
    let emitted = read_json(&sim.join("aggregate.json"))?;
    let mut report_err = 0.0f64;
    let mut compared = 0;
    let strategies = emitted["strategies"].as_object().ok_or("no strategies")?;
    for (id, rep) in strategies {
        let mut groups: BTreeMap<String, &serde_json::Value> = BTreeMap::new();
        groups.insert("overall".into(), &rep["overall"]);
        for (wf, m) in rep["workflows"].as_object().ok_or("no workflows")? {
            groups.insert(format!("workflows/{wf}"), m);
        }
        for (path, metrics) in groups {
            let other = path.split('/').fold(&recomputed[id], |v, k| &v[k]);
            for (k, v) in metrics.as_object().ok_or("bad metrics")? {
                let (a, b) = (v.as_f64().unwrap_or(f64::NAN), other[k].as_f64().unwrap_or(f64::NAN));
                let e = if a == b { 0.0 } else { (a - b).abs() / a.abs().max(1.0) };
                ensure(e <= 1e-9, || format!("{id} {path} {k}: {a} vs {b}"))?;
                report_err = report_err.max(e);
                compared += 1;
            }
        }
    }
    Ok(format!(
        "{fitted} tasks refitted, max parameter error {worst:.1e}; {compared} report values recomputed, max error {report_err:.1e}"
    ))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let first = tmp.path().join("run1");
    let second = tmp.path().join("run2");
    let rt = tmp.path().join("round_trip");
    fs::create_dir_all(&rt).expect("round-trip directory");

    let criteria: Vec<Criterion> = vec![
        (
            "policy correctness",
            Duration::from_secs(1),
            Box::new(policy_correctness),
        ),
        (
            "preference-sum conservation",
            Duration::from_secs(1),
            Box::new(preference_sum_conservation),
        ),
        ("reward bounds", Duration::from_secs(1), Box::new(reward_bounds)),
        (
            "bandit convergence",
            Duration::from_secs(30),
            Box::new(bandit_convergence),
        ),
        (
            "q-learning convergence",
            Duration::from_secs(60),
            Box::new(q_convergence),
        ),
        ("OOM escalation", Duration::from_secs(1), Box::new(oom_escalation)),
        (
            "feedback-loop baseline",
            Duration::from_secs(1),
            Box::new(feedback_baseline),
        ),
        (
            "directional reproduction",
            Duration::from_secs(300),
            Box::new(|| directional(&first)),
        ),
        (
            "determinism",
            Duration::from_secs(300),
            Box::new(|| determinism(&first, &second)),
        ),
        ("round trip", Duration::from_secs(120), Box::new(|| round_trip(&rt))),
    ];

    let mut failures = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = check();
        let took = started.elapsed();
        let result = result.and_then(|msg| {
            if took <= *limit {
                Ok(msg)
            } else {
                Err(format!("{msg}; took {took:.1?}, limit {limit:?}"))
            }
        });
        match result {
            Ok(msg) => println!("criterion {:>2} PASS  {name}: {msg} ({took:.2?})", i + 1),
            Err(msg) => {
                failures += 1;
                println!("criterion {:>2} FAIL  {name}: {msg} ({took:.2?})", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
