use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bcenhance::metrics::EvalReport;
use bcenhance::trainer::TrainConfig;
use bcenhance_cli::{resolve_train_config, Overrides};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bcenhance"));
    c.env("BCENHANCE_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn bcenhance")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn toy(dir: &Path, count: usize, seconds: f64) -> PathBuf {
    let data = dir.join("data");
    let out = run(&[
        "toy",
        "--out",
        s(&data),
        "--count",
        &count.to_string(),
        "--seconds",
        &seconds.to_string(),
        "--seed",
        "7",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    data
}

fn run_config(run_dir: &Path) -> TrainConfig {
    TrainConfig::from_text(&fs::read_to_string(run_dir.join("config.txt")).unwrap()).unwrap()
}

#[test]
fn no_arguments_is_a_usage_error() {
    let out = run(&[]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_flag_and_bad_value_exit_2() {
    assert_eq!(code(&run(&["train", "--frobnicate"])), 2);
    let tmp = TempDir::new().unwrap();
    let data = toy(tmp.path(), 1, 0.2);
    let out = run(&[
        "train",
        "--dataset",
        s(&data),
        "--out",
        s(&tmp.path().join("run")),
        "--variant",
        "triple",
    ]);
    assert_eq!(code(&out), 2);
    assert!(!tmp.path().join("run").exists());
}

#[test]
fn lambda_flags_set_the_weights() {
    let o = Overrides {
        lambda_cyc: Some(10.0),
        lambda_id: Some(5.0),
        ..Default::default()
    };
    let cfg = resolve_train_config(None, &o).unwrap();
    assert_eq!((cfg.weights.lambda_cyc, cfg.weights.lambda_id), (10.0, 5.0));

    let tmp = TempDir::new().unwrap();
    let data = toy(tmp.path(), 1, 0.2);
    let run_dir = tmp.path().join("run");
    let out = run(&[
        "train",
        "--dataset",
        s(&data),
        "--out",
        s(&run_dir),
        "--epochs",
        "0",
        "--lambda-cyc",
        "10",
        "--lambda-id",
        "5",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let cfg = run_config(&run_dir);
    assert_eq!((cfg.weights.lambda_cyc, cfg.weights.lambda_id), (10.0, 5.0));
    assert!(stdout(&out).contains("lambda_cyc = 10"));
    assert!(stdout(&out).contains("sha256"));
}

#[test]
fn flags_override_the_config_file() {
    let tmp = TempDir::new().unwrap();
    let file = tmp.path().join("train.cfg");
    fs::write(&file, "# overrides\nepochs = 3000\nbatch_size = 2\n").unwrap();
    let o = Overrides {
        epochs: Some(10),
        ..Default::default()
    };
    let cfg = resolve_train_config(Some(&file), &o).unwrap();
    assert_eq!(cfg.epochs, 10);
    assert_eq!(cfg.batch_size, 2);
    // without the flag the file wins over the default
    let cfg = resolve_train_config(Some(&file), &Overrides::default()).unwrap();
    assert_eq!(cfg.epochs, 3000);

    let data = toy(tmp.path(), 1, 0.2);
    let run_dir = tmp.path().join("run");
    let out = run(&[
        "train",
        "--dataset",
        s(&data),
        "--out",
        s(&run_dir),
        "--config",
        s(&file),
        "--epochs",
        "0",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let cfg = run_config(&run_dir);
    assert_eq!((cfg.epochs, cfg.batch_size), (0, 2));
}

#[test]
fn missing_config_file_exits_2() {
    let tmp = TempDir::new().unwrap();
    let data = toy(tmp.path(), 1, 0.2);
    let out = run(&[
        "train",
        "--dataset",
        s(&data),
        "--out",
        s(&tmp.path().join("run")),
        "--config",
        s(&tmp.path().join("absent.cfg")),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn extract_is_idempotent() {
    let tmp = TempDir::new().unwrap();
    let data = toy(tmp.path(), 2, 0.2);
    let first = run(&["extract", "--dataset", s(&data)]);
    assert_eq!(code(&first), 0);
    assert!(stdout(&first).contains("4 files extracted, 0 already cached"), "{}", stdout(&first));
    let cached = data.join("bc").join("utt000.bcf1");
    let bytes = fs::read(&cached).unwrap();
    let second = run(&["extract", "--dataset", s(&data)]);
    assert_eq!(code(&second), 0);
    assert!(stdout(&second).contains("0 files extracted, 4 already cached"), "{}", stdout(&second));
    assert_eq!(fs::read(&cached).unwrap(), bytes);
}

#[test]
fn data_errors_exit_3_and_leave_no_run_dir() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("empty");
    fs::create_dir_all(data.join("bc")).unwrap();
    fs::create_dir_all(data.join("ac")).unwrap();
    let run_dir = tmp.path().join("run");
    let out = run(&["train", "--dataset", s(&data), "--out", s(&run_dir)]);
    assert_eq!(code(&out), 3);
    assert!(!run_dir.exists());

    let bogus = tmp.path().join("bogus.bcck");
    fs::write(&bogus, b"not a checkpoint").unwrap();
    let wav = toy(tmp.path(), 1, 0.2).join("bc").join("utt000.wav");
    let output = tmp.path().join("out.wav");
    let out = run(&[
        "enhance",
        "--checkpoint",
        s(&bogus),
        "--input",
        s(&wav),
        "--output",
        s(&output),
    ]);
    assert_eq!(code(&out), 3);
    assert!(!output.exists());
}

#[test]
fn missing_checkpoint_exits_2() {
    let tmp = TempDir::new().unwrap();
    let data = toy(tmp.path(), 1, 0.2);
    let out = run(&[
        "evaluate",
        "--checkpoint",
        s(&tmp.path().join("none.bcck")),
        "--dataset",
        s(&data),
        "--output",
        s(&tmp.path().join("eval.tsv")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(!tmp.path().join("eval.tsv").exists());
}

fn train_run(data: &Path, run_dir: &Path, epochs: usize) {
    let out = run(&[
        "train",
        "--dataset",
        s(data),
        "--out",
        s(run_dir),
        "--epochs",
        &epochs.to_string(),
        "--batch-size",
        "2",
        "--lr-generator",
        "0.001",
        "--lr-discriminator",
        "0.0005",
        "--width-divisor",
        "8",
        "--seed",
        "7",
        "--checkpoint-every",
        "50",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

fn evaluate_run(checkpoint: &Path, data: &Path, output: &Path) -> EvalReport {
    let out = run(&[
        "evaluate",
        "--checkpoint",
        s(checkpoint),
        "--dataset",
        s(data),
        "--output",
        s(output),
        "--all",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("utt000"));
    EvalReport::parse_records(&fs::read_to_string(output).unwrap()).unwrap()
}

/// Train, evaluate, enhance and plot end to end on a tiny corpus.
#[test]
fn training_reduces_lsd_and_artifacts_are_written() {
    let tmp = TempDir::new().unwrap();
    let data = toy(tmp.path(), 2, 0.64);
    let untrained = tmp.path().join("untrained");
    train_run(&data, &untrained, 0);
    let before = evaluate_run(&untrained.join("latest.bcck"), &data, &tmp.path().join("before.tsv"));

    let trained = tmp.path().join("trained");
    train_run(&data, &trained, 150);
    assert!(trained.join("ckpt-e00050.bcck").is_file());
    assert!(trained.join("ckpt-e00150.bcck").is_file());
    let after = evaluate_run(&trained.join("latest.bcck"), &data, &tmp.path().join("after.tsv"));
    assert!(
        after.mean_lsd < before.mean_lsd,
        "LSD {} -> {}",
        before.mean_lsd,
        after.mean_lsd
    );

    let enhanced = tmp.path().join("enhanced.wav");
    let out = run(&[
        "enhance",
        "--checkpoint",
        s(&trained.join("latest.bcck")),
        "--input",
        s(&data.join("bc").join("utt000.wav")),
        "--output",
        s(&enhanced),
        "--float",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let (samples, rate) = bcenhance::audio::read_wav(&enhanced).unwrap();
    assert_eq!(rate, 16_000);
    assert!(samples.len().abs_diff(10_240) <= 80);

    let plots = tmp.path().join("plots");
    let out = run(&[
        "plot",
        "--run",
        s(&trained),
        "--out",
        s(&plots),
        "--dataset",
        s(&data),
        "--limit",
        "1",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let losses = image::open(plots.join("losses.png")).unwrap();
    assert_eq!((losses.width(), losses.height()), (960, 400));
    assert!(image::open(plots.join("spec-utt000.png")).is_ok());
    assert!(!plots.join("spec-utt001.png").exists());
}
