use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mcpl(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcpl"))
        .args(args)
        .env("MCPL_RUN_ROOT", root.join("runs"))
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> PathBuf {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).expect("json on stdout");
    PathBuf::from(v["output"].as_str().unwrap())
}

fn error_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).expect("json error line");
    serde_json::from_str(line).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_flag_exits_2_without_side_effects() {
    let dir = tempfile::tempdir().unwrap();
    let out = mcpl(&["learn", "--no-such-flag", "--out", s(&dir.path().join("r"))], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["kind"], "config");
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn bad_config_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"steps": 10, "colour": "red"}"#).unwrap();
    let out = mcpl(&["learn", "--config", s(&cfg)], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = mcpl(&["learn", "--bind-adj"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("runs").exists());
}

#[test]
fn missing_dataset_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = mcpl(&["learn", "--dataset", s(&dir.path().join("nope")), "--model", "m"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_json(&out)["error"]["kind"], "runtime");
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = root.join("data");
    ok(&mcpl(&["gen-data", "--pairs", "4", "--seed", "3", "--out", s(&data)], root));
    assert!(data.join("manifest.json").exists());
    let again = mcpl(&["gen-data", "--pairs", "4", "--out", s(&data)], root);
    assert_eq!(again.status.code(), Some(2));

    let pre = ok(&mcpl(&["pretrain", "--steps", "2", "--batch", "2", "--world-scenes", "4"], root));
    assert!(pre.starts_with(root.join("runs")));
    assert!(pre.ends_with("pretrain-001"));
    let model = pre.join("model.mcpl");
    assert!(model.exists());

    let learn_args = |out: &Path| {
        vec![
            "learn".to_string(),
            "--dataset".into(),
            s(&data).into(),
            "--model".into(),
            s(&model).into(),
            "--attnmask".into(),
            "--promptcl".into(),
            "--bind-adj".into(),
            "--steps".into(),
            "3".into(),
            "--batch".into(),
            "2".into(),
            "--out".into(),
            s(out).into(),
        ]
    };
    let a = root.join("learn-a");
    let args: Vec<String> = learn_args(&a);
    ok(&mcpl(&args.iter().map(String::as_str).collect::<Vec<_>>(), root));
    let bundle = a.join("bundle.mcpl");
    assert!(bundle.exists());
    let resolved: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("resolved_config.json")).unwrap()).unwrap();
    assert_eq!(resolved["steps"], 3);
    assert_eq!(resolved["tau"], 0.3);

    // Replaying the persisted config reproduces the bundle exactly.
    let b = root.join("learn-b");
    ok(&mcpl(&["learn", "--config", s(&a.join("resolved_config.json")), "--out", s(&b)], root));
    assert_eq!(std::fs::read(&bundle).unwrap(), std::fs::read(b.join("bundle.mcpl")).unwrap());
    let clash = mcpl(&["learn", "--config", s(&a.join("resolved_config.json")), "--out", s(&b)], root);
    assert_eq!(clash.status.code(), Some(2));

    let base = root.join("baseline");
    ok(&mcpl(
        &["learn", "--dataset", s(&data), "--model", s(&model), "--masked-baseline", "--steps", "2", "--batch", "2", "--out", s(&base)],
        root,
    ));
    let refs: Vec<PathBuf> = ["baseline_n1.mcpl", "baseline_n2.mcpl"].iter().map(|f| base.join(f)).collect();
    assert!(refs.iter().all(|p| p.exists()));

    let seg = ok(&mcpl(&["segment", "--dataset", s(&data), "--model", s(&model), "--bundle", s(&bundle), "--timesteps", "2"], root));
    assert!(seg.join("segmentation_iou.json").exists());
    assert!(seg.join("masks/s0000/segmentation_index.json").exists());

    let smp = ok(&mcpl(
        &["sample", "--model", s(&model), "--bundle", s(&bundle), "--prompt", "a brown <n1> and a green <n2>", "--steps", "2"],
        root,
    ));
    assert!(smp.join("sample0000.png").exists());
    assert!(smp.join("masks/sample0000/sample0000_overlay.png").exists());

    let ev = root.join("eval");
    ok(&mcpl(
        &[
            "eval",
            "--model",
            s(&model),
            "--method",
            "full",
            "--learned",
            s(&bundle),
            s(&b.join("bundle.mcpl")),
            "--references",
            s(&refs[0]),
            s(&refs[1]),
            "--dataset",
            s(&data),
            "--samples",
            "1",
            "--sample-steps",
            "2",
            "--out",
            s(&ev),
        ],
        root,
    ));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(ev.join("eval_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["prompt_fidelity"]["concepts"][0]["pairs"], 2);
    assert!(summary["image_fidelity"].is_object());
    let pngs = std::fs::read_dir(ev.join("reports")).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png")).count();
    assert!(pngs >= 2);

    let rep = ok(&mcpl(&["report", "--inputs", s(&ev), "--group", &format!("2={}", s(&ev)), "--group", &format!("3={}", s(&ev))], root));
    assert!(std::fs::read_to_string(rep.join("summary.md")).unwrap().contains("| full |"));
    assert!(rep.join("scaling/scaling_image-fidelity.json").exists());
}
