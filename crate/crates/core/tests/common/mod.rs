#![allow(dead_code)]

use std::path::PathBuf;

use wfsize::experiment::{Experiment, ExperimentConfig, StrategyId};

pub fn bundled_config_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic.toml")
}

pub fn bundled_config() -> ExperimentConfig {
    ExperimentConfig::load(bundled_config_path()).unwrap()
}

/// The bundled config with all noise switched off.
pub fn noise_free(mut cfg: ExperimentConfig) -> ExperimentConfig {
    for b in cfg.behaviors.values_mut() {
        b.runtime_noise_cv = 0.0;
        b.mem_noise_cv = 0.0;
    }
    cfg
}

/// Two single-stage workflows on one machine, small enough for quick runs.
pub const SMALL: &str = r#"
seed = 7
window = 3

[episodes]
default_config = 4
feedback_training = 3
feedback_predicting = 4
bandits = 6
q_learning = 6

[[machines]]
name = "m"
total_cores = 8
total_mem_bytes = 32000000000

[[workflows]]
name = "wa"

[[workflows.stages]]
task = "a"
default_cpus = 4
default_mem_bytes = 8000000000
instances = 3
input = { dist = "uniform", min_bytes = 500000000, max_bytes = 1500000000 }

[[workflows]]
name = "wb"

[[workflows.stages]]
task = "b"
default_cpus = 2
default_mem_bytes = 4000000000
instances = 2
input = { dist = "fixed", bytes = 1000000000 }

[behaviors.a]
serial_runtime_s = 400.0
reference_input_bytes = 1000000000
parallel_fraction = 0.8
max_parallelism = 3.0
peak_mem_base_bytes = 1000000000
mem_per_input_byte = 1.5
runtime_noise_cv = 0.05
mem_noise_cv = 0.05

[behaviors.b]
serial_runtime_s = 100.0
reference_input_bytes = 1000000000
parallel_fraction = 0.0
max_parallelism = 1.0
peak_mem_base_bytes = 1200000000
mem_per_input_byte = 0.0
runtime_noise_cv = 0.0
mem_noise_cv = 0.0
"#;

pub fn small_config() -> ExperimentConfig {
    ExperimentConfig::from_toml(SMALL).unwrap()
}

pub fn small_experiment() -> Experiment {
    Experiment::synthetic(small_config()).unwrap()
}

pub fn only(mut cfg: ExperimentConfig, ids: &[StrategyId]) -> ExperimentConfig {
    cfg.strategies = ids.to_vec();
    cfg
}
