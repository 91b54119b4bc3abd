use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dqnlab::harness::{RunConfig, CHECKPOINT_FILE, CONFIG_FILE, METRICS_FILE, SUMMARY_FILE};

fn dqnlab(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dqnlab"));
    cmd.args(args).env_remove("RL_SEED");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Arguments for a desk run short enough for a smoke test.
fn short_train(out: &Path) -> Vec<String> {
    ["train", "--preset", "desk", "--episodes", "2", "--set", "warmup_size=32", "--set", "max_episode_steps=100", "--out"]
        .iter()
        .map(|s| s.to_string())
        .chain([out.display().to_string()])
        .collect()
}

fn saved_config(run: &Path) -> RunConfig {
    RunConfig::from_json_file(&run.join(CONFIG_FILE), None).unwrap()
}

#[test]
fn train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let args = short_train(&run);
    let out = dqnlab(&args.iter().map(String::as_str).collect::<Vec<_>>(), &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("checkpoint:"));
    let metrics = fs::read_to_string(run.join(METRICS_FILE)).unwrap();
    assert_eq!(metrics.lines().count(), 3);

    let ckpt = run.join(CHECKPOINT_FILE);
    let eval_dir = dir.path().join("eval");
    let out = dqnlab(
        &["eval", "--checkpoint", ckpt.to_str().unwrap(), "--episodes", "3", "--max-steps", "300", "--out", eval_dir.to_str().unwrap()],
        &[],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().next(), Some("episodes,mean,std,min,max,p25,p50,p75"));
    assert!(text.lines().nth(1).unwrap().starts_with("3,"));
    let summary = fs::read_to_string(eval_dir.join(SUMMARY_FILE)).unwrap();
    assert_eq!(summary.lines().next(), Some("mean,std,min,max,p25,p50,p75"));
}

#[test]
fn seed_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let from_env = dir.path().join("env");
    let args = short_train(&from_env);
    let out = dqnlab(&args.iter().map(String::as_str).collect::<Vec<_>>(), &[("RL_SEED", "7")]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(saved_config(&from_env).seed, 7);

    let from_flag = dir.path().join("flag");
    let mut args = short_train(&from_flag);
    args.extend(["--seed".to_string(), "3".to_string()]);
    let out = dqnlab(&args.iter().map(String::as_str).collect::<Vec<_>>(), &[("RL_SEED", "7")]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(saved_config(&from_flag).seed, 3);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("cfg.json");
    fs::write(&file, r#"{"preset": "desk", "gamma": 0.9, "n_episodes": 5, "warmup_size": 32, "max_episode_steps": 100}"#).unwrap();
    let run = dir.path().join("run");
    let out = dqnlab(
        &["train", "--config", file.to_str().unwrap(), "--episodes", "1", "--out", run.to_str().unwrap()],
        &[],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let saved = saved_config(&run);
    assert_eq!(saved.gamma, 0.9);
    assert_eq!(saved.n_episodes, 1);
    assert_eq!(saved.batch_size, RunConfig::desk().batch_size);
}

#[test]
fn unknown_keys_are_rejected_with_the_valid_list() {
    let dir = tempfile::tempdir().unwrap();
    let out = dqnlab(
        &["tune", "--param", "learning_rat", "--values", "1e-4,1e-5", "--preset", "desk", "--out", dir.path().to_str().unwrap()],
        &[],
    );
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("learning_rat") && err.contains("valid keys") && err.contains("learning_rate"), "{err}");

    let out = dqnlab(&["train", "--preset", "desk", "--set", "gama=0.5"], &[]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("gamma"));
}

#[test]
fn cliff_prints_the_greedy_path() {
    let out = dqnlab(&["cliff", "--algo", "qlearning", "--epsilon-final", "0.0001", "--episodes", "1000"], &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("path length 13, return -13"), "{text}");
    assert_eq!(text.lines().count(), 5);

    let out = dqnlab(&["cliff", "--algo", "td"], &[]);
    assert!(!out.status.success());
}
