use std::path::Path;
use std::process::{Command, Output};

use a2dmn::train::Checkpoint;

fn a2dmn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_a2dmn")).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_data_writes_pairs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    let o = a2dmn(&["gen-data", "--n", "40", "--seed", "7", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_dir(out.join("images")).unwrap().count(), 40);
    assert_eq!(std::fs::read_dir(out.join("masks")).unwrap().count(), 40);
    let manifest = std::fs::read_to_string(out.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 41);
    assert!(manifest.starts_with("id,image_path,mask_path,seed\n"));
}

#[test]
fn unknown_flag_prints_usage_and_exits_2() {
    let o = a2dmn(&["train", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn failure_is_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let o = a2dmn(&["eval", "--data", p(&dir.path().join("missing")), "--pred", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error: "));
}

#[test]
fn train_one_epoch_writes_reloadable_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    assert!(a2dmn(&["gen-data", "--n", "10", "--seed", "1", "--out", p(&data)]).status.success());
    let out = dir.path().join("m");
    let o = a2dmn(&[
        "train", "--data", p(&data), "--out", p(&out), "--epochs", "1", "--scale", "0.125", "--image-size", "32",
        "--batch-size", "4", "--fold", "1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ck = Checkpoint::load(out.join("fold1.a2dm")).unwrap();
    assert_eq!(ck.meta.config.arch.channel_scale, 0.125);
    assert_eq!(ck.meta.config.epochs, 1);
    assert!(out.join("fold1.json").exists());
    assert!(out.join("fold1_history.csv").exists());
    assert!(!out.join("fold2.a2dm").exists());
}

#[test]
fn eval_of_ground_truth_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    assert!(a2dmn(&["gen-data", "--n", "15", "--seed", "2", "--out", p(&data)]).status.success());
    let pred = dir.path().join("pred");
    std::fs::create_dir(&pred).unwrap();
    for e in std::fs::read_dir(data.join("masks")).unwrap() {
        let e = e.unwrap();
        std::fs::copy(e.path(), pred.join(e.file_name())).unwrap();
    }
    let o = a2dmn(&["eval", "--data", p(&data), "--pred", p(&pred)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "fold,class,iou,hd,aad,defined");
    assert_eq!(lines.len(), 1 + 30);
    for l in &lines[1..] {
        assert!(l.ends_with(",1,0,0,1"), "{l}");
    }
}

#[test]
fn verification_suites_pass() {
    for cmd in ["gradcheck", "oracle"] {
        let o = a2dmn(&[cmd]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stdout));
        let out = String::from_utf8(o.stdout).unwrap();
        assert!(out.lines().all(|l| l.starts_with("PASS")));
    }
}
