//! End-to-end pipeline through the installed binary: gen -> pretrain ->
//! transfer -> eval -> report, plus the error contract on bad invocations.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pott(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pott"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = pott(args);
    assert!(
        out.status.success(),
        "pott {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_json(path: &Path, body: &str) {
    fs::write(path, body).unwrap();
}

#[test]
fn the_five_stages_compose() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();

    write_json(
        &root.join("src.json"),
        r#"{"equation":"advection","subdomain":"d1","n_train":12,"n_val":3,"n_test":4,"seed":5}"#,
    );
    write_json(
        &root.join("tgt.json"),
        r#"{"equation":"advection","subdomain":"d2","n_train":8,"n_val":3,"n_test":4,"seed":5}"#,
    );
    let gen_out = ok(&["gen", "--spec", &p("src.json"), "--out", &p("src")]);
    assert!(gen_out.contains("12 train / 3 val / 4 test"), "{}", gen_out);
    ok(&["gen", "--spec", &p("tgt.json"), "--out", &p("tgt")]);
    assert!(root.join("src/train/manifest.json").exists());
    assert!(root.join("src/gen_spec.json").exists());
    assert!(root.join("src/provenance.json").exists());

    ok(&[
        "pretrain",
        "--data",
        &p("src"),
        "--model",
        "deeponet",
        "--out",
        &p("src_model.pott"),
        "--epochs",
        "1",
    ]);
    assert!(root.join("src_model.pott").exists());

    write_json(
        &root.join("transfer.json"),
        r#"{"transfer":{"epochs":1,"batch":4},"seed":0}"#,
    );
    let t_out = ok(&[
        "transfer",
        "--method",
        "finetune",
        "--src",
        &p("src"),
        "--tgt",
        &p("tgt"),
        "--ckpt",
        &p("src_model.pott"),
        "--config",
        &p("transfer.json"),
        "--out",
        &p("runs/finetune_0"),
    ]);
    assert!(t_out.contains("test rMSE"), "{}", t_out);
    assert!(root.join("runs/finetune_0/record.json").exists());
    assert!(root.join("runs/finetune_0/model.pott").exists());

    // pooled baseline goes through the same front door
    ok(&[
        "transfer",
        "--method",
        "srctgt",
        "--src",
        &p("src"),
        "--tgt",
        &p("tgt"),
        "--ckpt",
        &p("src_model.pott"),
        "--config",
        &p("transfer.json"),
        "--out",
        &p("runs/srctgt_0"),
    ]);

    // eval prints one scalar; a split root falls back to its test split
    let scalar = ok(&["eval", "--ckpt", &p("src_model.pott"), "--data", &p("tgt")]);
    let rmse: f64 = scalar.trim().parse().expect("bare scalar on stdout");
    assert!(rmse.is_finite() && rmse >= 0.0);
    let direct = ok(&[
        "eval",
        "--ckpt",
        &p("src_model.pott"),
        "--data",
        &p("tgt/test"),
    ]);
    assert_eq!(scalar, direct);

    ok(&["report", "--runs", &p("runs"), "--out", &p("table.csv")]);
    let csv = fs::read_to_string(root.join("table.csv")).unwrap();
    assert!(csv.starts_with("task,method,n_target,mean_rmse,std_rmse,runs"));
    assert!(csv.contains("finetune,8,"), "{}", csv);
    assert!(csv.contains("srctgt,8,"), "{}", csv);

    ok(&["report", "--runs", &p("runs"), "--out", &p("panels.svg")]);
    let svg = fs::read_to_string(root.join("panels.svg")).unwrap();
    assert!(svg.starts_with("<svg"));

    // records are append-only even through the CLI
    let again = pott(&[
        "transfer",
        "--method",
        "finetune",
        "--src",
        &p("src"),
        "--tgt",
        &p("tgt"),
        "--ckpt",
        &p("src_model.pott"),
        "--config",
        &p("transfer.json"),
        "--out",
        &p("runs/finetune_0"),
    ]);
    assert!(!again.status.success());
    assert!(String::from_utf8_lossy(&again.stderr).contains("append-only"));
}

#[test]
fn failures_exit_nonzero_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_string_lossy().into_owned();

    let unknown = pott(&["gen", "--bogus", "x"]);
    assert!(!unknown.status.success());

    let missing = pott(&["eval", "--ckpt", &p("nope.pott"), "--data", &p("nowhere")]);
    assert!(!missing.status.success());
    assert!(!String::from_utf8_lossy(&missing.stderr).trim().is_empty());

    fs::write(dir.path().join("bad.json"), "{\"equation\":\"heat\"}").unwrap();
    let bad_spec = pott(&["gen", "--spec", &p("bad.json"), "--out", &p("out")]);
    assert!(!bad_spec.status.success());
    assert!(String::from_utf8_lossy(&bad_spec.stderr).contains("bad.json"));

    let bad_tag = pott(&["report", "--runs", &p("runs"), "--out", &p("table.txt")]);
    assert!(!bad_tag.status.success());
    assert!(String::from_utf8_lossy(&bad_tag.stderr).contains(".csv or .svg"));
}
