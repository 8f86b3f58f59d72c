//! End-to-end checks of the installed binary's contract: flags,
//! output shapes, exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn lgc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lgc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn plan_prints_known_scheme_arrays() {
    let out = lgc(&["plan", "Logarithmic-8"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("[64, 32, 16, 8, 4, 2, 1, 1]"), "{text}");
    assert!(text.contains("[128, 64, 32, 32]"), "{text}");
    assert!(!text.contains("note:"), "no correction notice expected: {text}");
}

#[test]
fn plan_accepts_explicit_channel_count() {
    let out = lgc(&["plan", "--channels", "128", "--groups", "1"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("sizes: [128]"));
}

#[test]
fn plan_sixteen_group_scheme_carries_notice() {
    let out = lgc(&["plan", "Logarithmic-16"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(
        text.contains("[32, 16, 16, 8, 8, 8, 8, 8, 4, 4, 4, 4, 4, 2, 1, 1]"),
        "{text}"
    );
    assert!(text.contains("note:"), "{text}");
}

#[test]
fn plan_unknown_scheme_fails_with_names() {
    let out = lgc(&["plan", "Quadratic-8"]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("Quadratic-8"), "{err}");
    assert!(err.contains("Logarithmic-8"), "should list canonical names: {err}");
}

#[test]
fn plan_without_arguments_fails() {
    let out = lgc(&["plan"]);
    assert!(!out.status.success());
}

#[test]
fn unknown_flag_is_rejected() {
    let out = lgc(&["plan", "Logarithmic-8", "--bogus"]);
    assert!(!out.status.success());
}

#[test]
fn count_params_reports_published_total() {
    let out = lgc(&["count-params", "--scheme", "Logarithmic-8", "--classes", "10"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("216,260"));

    let csv = lgc(&[
        "count-params",
        "--scheme",
        "Logarithmic-8",
        "--classes",
        "10",
        "--format",
        "csv",
    ]);
    assert!(csv.status.success());
    let text = stdout(&csv);
    assert!(text.lines().next() == Some("layer,weights"), "{text}");
    assert!(text.contains("total,216260"), "{text}");
}

#[test]
fn count_params_shortcut_is_free() {
    let with = lgc(&["count-params", "--format", "csv"]);
    let without = lgc(&["count-params", "--format", "csv", "--no-shortcut"]);
    assert!(with.status.success() && without.status.success());
    assert_eq!(stdout(&with), stdout(&without));
}

#[test]
fn reproduce_tables_flags_every_row() {
    for (classes, grouped_totals) in [
        ("6", ["268480", "157888", "102592", "277696", "215236", "190036"]),
        ("10", ["269504", "158912", "103616", "278720", "216260", "191060"]),
    ] {
        let out = lgc(&["reproduce-tables", "--classes", classes, "--format", "csv"]);
        assert!(out.status.success());
        let text = stdout(&out);
        let match_rows = text.lines().filter(|l| l.ends_with(",MATCH")).count();
        assert_eq!(match_rows, 6, "classes {classes}: {text}");
        let delta_rows = text.lines().filter(|l| l.ends_with(",DOCUMENTED-DELTA")).count();
        assert_eq!(delta_rows, 1, "classes {classes}: {text}");
        for total in grouped_totals {
            assert!(text.contains(&format!(",{total},{total},MATCH")), "{total} in {text}");
        }
        assert!(!text.contains("MISMATCH"), "{text}");
    }
}

#[test]
fn reproduce_tables_rejects_unpublished_class_counts() {
    let out = lgc(&["reproduce-tables", "--classes", "7"]);
    assert!(!out.status.success());
}

#[test]
fn gradcheck_passes_and_is_deterministic() {
    let a = lgc(&["gradcheck", "--seed", "0"]);
    assert!(a.status.success(), "{}", stderr(&a));
    let text = stdout(&a);
    assert!(text.contains("full_network_log8"), "{text}");
    assert!(text.contains("softmax_cross_entropy"), "{text}");
    assert!(!text.contains("FAIL"), "{text}");

    let b = lgc(&["gradcheck", "--seed", "0"]);
    assert_eq!(text, stdout(&b), "same seed must reproduce the report");
}

#[test]
fn train_then_eval_synthetic_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out_str = out_dir.to_str().unwrap();
    let train = lgc(&[
        "train",
        "--dataset",
        "synthetic",
        "--synthetic-train",
        "24",
        "--synthetic-test",
        "6",
        "--epochs",
        "1",
        "--batch-size",
        "8",
        "--lr-schedule",
        "const:1e-3",
        "--seed",
        "3",
        "--out",
        out_str,
    ]);
    assert!(train.status.success(), "{}", stderr(&train));
    let text = stdout(&train);
    assert!(text.contains("final test accuracy:"), "{text}");
    assert!(text.contains("best test accuracy:"), "{text}");

    let history = std::fs::read_to_string(out_dir.join("history.csv")).unwrap();
    assert_eq!(history.lines().next(), Some("epoch,lr,train_loss,test_acc"));
    assert_eq!(history.lines().count(), 2);
    assert!(out_dir.join("last.ckpt").exists());
    assert!(out_dir.join("best.ckpt").exists());

    let ckpt = out_dir.join("last.ckpt");
    let eval = lgc(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--dataset",
        "synthetic",
        "--synthetic-train",
        "24",
        "--synthetic-test",
        "6",
        "--seed",
        "3",
    ]);
    assert!(eval.status.success(), "{}", stderr(&eval));
    let text = stdout(&eval);
    assert!(text.contains("accuracy:"), "{text}");
    assert!(text.contains("confusion matrix"), "{text}");
}

#[test]
fn eval_missing_checkpoint_fails() {
    let out = lgc(&[
        "eval",
        "--checkpoint",
        "/nonexistent/model.ckpt",
        "--dataset",
        "synthetic",
        "--synthetic-train",
        "6",
        "--synthetic-test",
        "6",
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("model.ckpt"), "{}", stderr(&out));
}

#[test]
fn train_missing_cifar_dir_fails_with_ingestion_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = lgc(&[
        "train",
        "--dataset",
        "cifar10",
        "--data-dir",
        dir.path().to_str().unwrap(),
        "--epochs",
        "1",
        "--out",
        dir.path().join("run").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("data_batch_1.bin"), "{}", stderr(&out));
}

#[test]
fn const_schedule_requires_epochs() {
    let out = lgc(&[
        "train",
        "--dataset",
        "synthetic",
        "--lr-schedule",
        "const:1e-3",
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("--epochs"), "{}", stderr(&out));
}

fn exists_nonempty(path: &Path) -> bool {
    std::fs::metadata(path).map(|m| m.len() > 0).unwrap_or(false)
}

#[test]
fn train_resumes_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let base = [
        "train",
        "--dataset",
        "synthetic",
        "--synthetic-train",
        "12",
        "--synthetic-test",
        "6",
        "--epochs",
        "1",
        "--batch-size",
        "6",
        "--lr-schedule",
        "const:1e-3",
        "--seed",
        "5",
    ];
    let mut args: Vec<&str> = base.to_vec();
    let first_str = first.to_str().unwrap().to_string();
    args.extend(["--out", &first_str]);
    let out = lgc(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    let ckpt = first.join("last.ckpt");
    assert!(exists_nonempty(&ckpt));

    let second = dir.path().join("second");
    let second_str = second.to_str().unwrap().to_string();
    let ckpt_str = ckpt.to_str().unwrap().to_string();
    let mut args: Vec<&str> = base.to_vec();
    args.extend(["--out", &second_str, "--checkpoint", &ckpt_str]);
    let out = lgc(&args);
    assert!(out.status.success(), "resume failed: {}", stderr(&out));
    assert!(exists_nonempty(&second.join("last.ckpt")));
}
