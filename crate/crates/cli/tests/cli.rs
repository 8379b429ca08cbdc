//! Exit-code and validation behavior of the pipeline binary.

use std::path::{Path, PathBuf};
use std::process::Command;

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    std::fs::remove_dir_all(&dir).ok();
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_modarm"))
        .args(args)
        .output()
        .unwrap()
}

fn tiny_config(dir: &Path, out: &Path, variant: &str, n_sum: usize, extra_task: &str) -> PathBuf {
    let text = format!(
        r#"
[plant]
n_sum = {n_sum}
mode = "cable3d"
theta_max = 0.9
g_gain = 0.1
coupling_gain = 0.26
coupling_decay = 0.8
whip_gain = 0.6
whip_decay = 0.3
dt_control = 0.2
substeps = 5

[collect]
method = "phased"
n_samples = 240
delta_max = 0.3
seed = 11

[network]
variant = "{variant}"
hidden = 8
layers = 1
window = 4
lr = 0.002
batch = 8
epochs = 2
seed = 3

{extra_task}

[output]
dir = "{}"
"#,
        out.display()
    );
    let path = dir.join(format!("{variant}-{n_sum}.toml"));
    std::fs::write(&path, text).unwrap();
    path
}

const SWEEP_TASK: &str = r#"
[[task]]
name = "sweep"
kind = "a"
t_max = 30
v_zmin = [0.9, 0.8, 0.7]
scale = 0.8
"#;

#[test]
fn report_on_empty_directory_fails_with_validation_exit() {
    let dir = scratch("empty-report");
    let out = run(&["report", "--run-dir", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("no runs"), "stderr: {stderr}");
}

#[test]
fn mismatched_dataset_header_is_rejected() {
    let dir = scratch("mismatch");
    let out3 = dir.join("run3");
    let cfg3 = tiny_config(&dir, &out3, "bilstm", 3, SWEEP_TASK);
    assert!(run(&["collect", "--config", cfg3.to_str().unwrap()])
        .status
        .success());

    // a 4-module config must refuse the 3-module dataset
    let out4 = dir.join("run4");
    let cfg4 = tiny_config(&dir, &out4, "bilstm", 4, SWEEP_TASK);
    let out = run(&[
        "train",
        "--config",
        cfg4.to_str().unwrap(),
        "--dataset",
        out3.join("dataset.txt").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("modules"), "stderr: {stderr}");
}

#[test]
fn time_lstm_refuses_other_chain_lengths_in_control() {
    let dir = scratch("time-transfer");
    let out3 = dir.join("run3");
    let cfg3 = tiny_config(&dir, &out3, "time-lstm", 3, SWEEP_TASK);
    assert!(run(&["collect", "--config", cfg3.to_str().unwrap()])
        .status
        .success());
    assert!(run(&[
        "train",
        "--config",
        cfg3.to_str().unwrap(),
        "--dataset",
        out3.join("dataset.txt").to_str().unwrap(),
    ])
    .status
    .success());

    let task4 = r#"
[[task]]
name = "sweep"
kind = "a"
t_max = 30
v_zmin = [0.9, 0.8, 0.7, 0.6]
scale = 0.8
"#;
    let out4 = dir.join("run4");
    let cfg4 = tiny_config(&dir, &out4, "time-lstm", 4, task4);
    let out = run(&[
        "control",
        "--config",
        cfg4.to_str().unwrap(),
        "--model",
        out3.join("model.txt").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("fixed to 3 modules"), "stderr: {stderr}");
}

#[test]
fn unmet_threshold_exits_three() {
    let dir = scratch("threshold");
    let out3 = dir.join("run");
    let task = r#"
[[task]]
name = "sweep"
kind = "a"
t_max = 30
v_zmin = [0.9, 0.8, 0.7]
scale = 0.8
threshold_mean = 0.0001
"#;
    let cfg = tiny_config(&dir, &out3, "bilstm", 3, task);
    assert!(run(&["collect", "--config", cfg.to_str().unwrap()])
        .status
        .success());
    assert!(run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--dataset",
        out3.join("dataset.txt").to_str().unwrap(),
    ])
    .status
    .success());
    let out = run(&[
        "control",
        "--config",
        cfg.to_str().unwrap(),
        "--model",
        out3.join("model.txt").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn eval_estimation_writes_table() {
    let dir = scratch("eval");
    let out3 = dir.join("run");
    let cfg = tiny_config(&dir, &out3, "bilstm", 3, SWEEP_TASK);
    assert!(run(&["collect", "--config", cfg.to_str().unwrap()])
        .status
        .success());
    assert!(run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--dataset",
        out3.join("dataset.txt").to_str().unwrap(),
    ])
    .status
    .success());
    let out = run(&[
        "eval-estimation",
        "--config",
        cfg.to_str().unwrap(),
        "--model",
        out3.join("model.txt").to_str().unwrap(),
        "--dataset",
        out3.join("dataset.txt").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let table = std::fs::read_to_string(out3.join("estimation_eval.csv")).unwrap();
    assert!(table.starts_with("module,mean_pct,std_pct"));
    assert_eq!(table.lines().count(), 4);

    // manifest names every artifact with the config digest
    let manifest = std::fs::read_to_string(out3.join("manifest.json")).unwrap();
    for artifact in ["dataset.txt", "model.txt", "estimation_eval.csv"] {
        assert!(manifest.contains(artifact), "manifest missing {artifact}");
    }
}
