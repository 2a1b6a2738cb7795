//! End-to-end smoke tests for the `rlft` binary: every subcommand runs
//! against a tiny config, artifacts land where the help text says they do,
//! and malformed or out-of-order invocations fail with a useful message.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn rlft() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rlft"))
}

/// A config small enough that the full pipeline finishes in seconds.
/// Only overridden keys are listed; everything else uses the defaults.
fn write_config(dir: &Path, out_dir: &Path) -> PathBuf {
    let text = format!(
        r#"
[scenario]
n = 80

[sft]
epochs = 60

[scheduler]
total_steps = 30

[objective]
steps = 30

[evaluation]
n_eval = 40
interval = 10

[experiment]
seeds = [1]
variants = ["thinkdrive", "grpo"]
out_dir = "{}"
"#,
        out_dir.display()
    );
    let path = dir.join("smoke.toml");
    fs::write(&path, text).expect("write config");
    path
}

fn run(args: &[&str]) -> Output {
    rlft().args(args).output().expect("spawn rlft")
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn line_count(path: &Path) -> usize {
    fs::read_to_string(path).expect("read csv").lines().count()
}

#[test]
fn subcommands_run_in_order_and_write_their_artifacts() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("runs");
    let config = write_config(tmp.path(), &out);
    let config = config.to_str().unwrap();

    // gen-data picks up the out dir from the config when --out is omitted.
    let gen = run(&["gen-data", "--config", config]);
    assert_ok(&gen, "gen-data");
    for file in ["dataset.jsonl", "eval.jsonl", "sft_pool.jsonl", "rl_pool.jsonl"] {
        assert!(out.join(file).exists(), "gen-data should write {file}");
    }

    let sft = run(&["sft", "--config", config]);
    assert_ok(&sft, "sft");
    assert!(out.join("cold_start.json").exists());
    assert!(out.join("eval_model.json").exists());

    let tag = run(&["tag-difficulty", "--config", config]);
    assert_ok(&tag, "tag-difficulty");
    assert!(out.join("tagged.jsonl").exists());

    // An explicit --out pointing at the same workspace is equivalent.
    let train = run(&["train-rl", "--config", config, "--out", out.to_str().unwrap()]);
    assert_ok(&train, "train-rl");
    assert!(out.join("rl_final.json").exists());
    assert!(out.join("runlog.jsonl").exists());
    let train_report = stdout(&train);
    assert!(
        train_report.contains("thinkdrive (seed 1)"),
        "train-rl should report the variant and seed, got: {train_report}"
    );

    let eval = run(&["eval", "--config", config]);
    assert_ok(&eval, "eval");
    assert!(stdout(&eval).contains("exam"), "eval should print exam metrics");

    let plots = run(&["emit-plots", "--config", config, "--window", "10"]);
    assert_ok(&plots, "emit-plots");
    for file in ["reward.csv", "easy_exam.csv", "proportions.csv"] {
        let path = out.join("plots").join(file);
        assert!(path.exists(), "emit-plots should write plots/{file}");
        assert!(line_count(&path) > 1, "plots/{file} should have data rows");
    }
}

#[test]
fn train_rl_accepts_a_variant_override() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("runs");
    let config = write_config(tmp.path(), &out);
    let config = config.to_str().unwrap();

    assert_ok(&run(&["gen-data", "--config", config]), "gen-data");
    assert_ok(&run(&["sft", "--config", config]), "sft");
    assert_ok(&run(&["tag-difficulty", "--config", config]), "tag-difficulty");

    let train = run(&["train-rl", "--config", config, "--variant", "grpo", "--seed", "7"]);
    assert_ok(&train, "train-rl --variant grpo");
    assert!(
        stdout(&train).contains("grpo (seed 7)"),
        "override should be reflected in the report"
    );
}

#[test]
fn compare_writes_one_summary_row_per_variant_and_seed() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("runs");
    let config = write_config(tmp.path(), &out);

    let cmp = run(&["compare", "--config", config.to_str().unwrap()]);
    assert_ok(&cmp, "compare");

    let summary = out.join("compare").join("summary.csv");
    assert!(summary.exists(), "compare should write compare/summary.csv");
    // Two variants x one seed = header plus two data rows.
    assert_eq!(line_count(&summary), 3, "expected header + 2 rows");
    let text = fs::read_to_string(&summary).unwrap();
    assert!(text.contains("thinkdrive"), "summary should name each variant");
    assert!(text.contains("grpo"), "summary should name each variant");
}

#[test]
fn unknown_config_keys_are_rejected_by_name() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("typo.toml");
    fs::write(&path, "[objective]\nepsilon = 0.3\n").unwrap();

    let gen = run(&["gen-data", "--config", path.to_str().unwrap()]);
    assert!(!gen.status.success(), "a config with an unknown key must be rejected");
    let err = stderr(&gen);
    assert!(
        err.contains("epsilon"),
        "the error should name the offending key, got: {err}"
    );
}

#[test]
fn stages_out_of_order_fail_and_name_the_missing_stage() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("runs");
    let config = write_config(tmp.path(), &out);

    let train = run(&["train-rl", "--config", config.to_str().unwrap()]);
    assert!(!train.status.success(), "train-rl without artifacts must fail");
    let err = stderr(&train);
    assert!(
        err.contains("gen-data"),
        "the error should point at the stage to run first, got: {err}"
    );
}
