#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use multitypical::config::{ExperimentConfig, Method};

/// A configuration small enough to run the whole study in about a second.
pub fn small_config(dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        dim: 5,
        num_components: 4,
        num_members: 3,
        train_n: 2000,
        test_n: 500,
        samples_per_cell: 500,
        per_model_count: 500,
        entropy_samples: 5000,
        calibration_sequences: 2000,
        method: Method::Adam,
        epochs: 5,
        learning_rate: 0.01,
        num_projections: 2,
        projection_samples: 100,
        output_dir: dir.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

/// Runs the binary with `RUST_LOG=off`.
pub fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multitypical"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .expect("spawning the binary")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Writes `cfg` as a JSON config file, with `output_dir` set explicitly.
pub fn write_config(path: &Path, cfg: &ExperimentConfig) {
    let mut v = serde_json::to_value(cfg).unwrap();
    v["output_dir"] = serde_json::Value::String(cfg.output_dir.display().to_string());
    std::fs::write(path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}
