use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_contextloc"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = "feature_dim = 8\nnum_videos = 4\nsnippets_per_video = 36\nepochs = 4\nlr_milestones = 3\n";

#[test]
fn gen_train_infer_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, SMALL).unwrap();
    let data = dir.path().join("data");
    let model = dir.path().join("model");
    let preds = dir.path().join("preds");
    let report = dir.path().join("report");

    let o = run(&["gen", "--config", path(&cfg), "--seed", "3", "--out", path(&data)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(data.join("meta.json").exists());

    let o = run(&["train", "--config", path(&cfg), "--data", path(&data), "--out", path(&model)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log = fs::read_to_string(model.join("train_log.csv")).unwrap();
    assert!(log.starts_with("epoch,loss_cls,loss_comp,loss_reg,train_acc\n"));
    assert_eq!(log.lines().count(), 5);

    let ck = model.join("checkpoint.json");
    let o = run(&["infer", "--checkpoint", path(&ck), "--data", path(&data), "--out", path(&preds)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let dets = preds.join("detections.json");
    let o = run(&["eval", "--config", path(&cfg), "--detections", path(&dets), "--data", path(&data), "--out", path(&report)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(report.join("map.csv")).unwrap();
    assert!(csv.starts_with("threshold,map\n0.30,"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("average,"));
}

#[test]
fn training_twice_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, SMALL).unwrap();
    let data = dir.path().join("data");
    assert!(run(&["gen", "--config", path(&cfg), "--out", path(&data)]).status.success());
    let mut outputs = Vec::new();
    for k in 0..2 {
        let m = dir.path().join(format!("m{k}"));
        let p = dir.path().join(format!("p{k}"));
        assert!(run(&["train", "--config", path(&cfg), "--data", path(&data), "--out", path(&m)]).status.success());
        let ck = m.join("checkpoint.json");
        assert!(run(&["infer", "--checkpoint", path(&ck), "--data", path(&data), "--out", path(&p)]).status.success());
        outputs.push((
            fs::read(m.join("train_log.csv")).unwrap(),
            fs::read(&ck).unwrap(),
            fs::read(p.join("detections.json")).unwrap(),
        ));
    }
    assert!(outputs[0] == outputs[1]);
}

#[test]
fn gradcheck_passes_on_small_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("g.cfg");
    fs::write(&cfg, "feature_dim = 8\npnet = nonlocal\n").unwrap();
    let o = run(&["gradcheck", "--config", path(&cfg), "--out", path(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
}

#[test]
fn bad_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "lr = -1\n").unwrap();
    let o = run(&["gradcheck", "--config", path(&cfg), "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(1));

    let o = run(&["eval", "--detections", "/nonexistent.json", "--data", "/nonexistent"]);
    assert_eq!(o.status.code(), Some(1));

    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_class_in_detections_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, SMALL).unwrap();
    let data = dir.path().join("data");
    assert!(run(&["gen", "--config", path(&cfg), "--out", path(&data)]).status.success());
    let meta: String = fs::read_to_string(data.join("meta.json")).unwrap();
    let first_id = meta.split("\"videos\"").nth(1).unwrap().split('"').nth(1).unwrap().to_string();
    let dets = dir.path().join("dets.json");
    fs::write(
        &dets,
        format!(r#"[{{"video_id": "{first_id}", "duration": 36.0, "instances": [{{"start": 1.0, "end": 4.0, "class": 99, "score": 0.5}}]}}]"#),
    )
    .unwrap();
    let o = run(&["eval", "--detections", path(&dets), "--data", path(&data), "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown class"));
}
