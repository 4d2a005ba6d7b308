use mcpl::engine::*;
use mcpl::ldm::{BackboneConfig, PretrainedModel};
use mcpl::losses::LossConfig;
use mcpl::par::ExecMode;
use mcpl::scene::{generate_dataset, preset_concepts, CaptionedScene, GenerationConfig};
use mcpl::text::{Lexicon, Strategy, TokenId};
use mcpl::Error;

fn model() -> PretrainedModel {
    PretrainedModel::new(BackboneConfig::tiny(8), Lexicon::default(), 11).unwrap()
}

fn scenes(connectors: &[&str]) -> Vec<CaptionedScene> {
    let cfg = GenerationConfig {
        canvas_size: 16,
        connectors: connectors.iter().map(|s| s.to_string()).collect(),
        ..GenerationConfig::new(preset_concepts("two-concept").unwrap(), 2, 4, 5)
    };
    generate_dataset(&cfg).unwrap()
}

fn config(steps: usize) -> LearnConfig {
    LearnConfig { steps, batch: 2, warmup_steps: 3, ..LearnConfig::default() }
}

#[test]
fn zero_steps_returns_the_initialisation() {
    let m = model();
    let b = learn(&m, &scenes(&["and"]), &config(0), None, ExecMode::Sequential).unwrap();
    let shape = m.table.frozen_row(m.table.vocab.id("shape").unwrap());
    assert_eq!(b.tokens, vec!["<n1>", "<n2>"]);
    for v in &b.vectors {
        let expect: Vec<f32> = shape.iter().map(|&x| x as f32).collect();
        assert_eq!(v, &expect);
    }
}

#[test]
fn runs_are_deterministic_across_exec_modes() {
    let m = model();
    let data = scenes(&["and"]);
    let cfg = LearnConfig { loss: LossConfig::preset(true, true, true), ..config(6) };
    let mut a = Learner::new(&m, &data, cfg.clone(), ExecMode::Parallel).unwrap();
    let mut b = Learner::new(&m, &data, cfg, ExecMode::Sequential).unwrap();
    let ba = a.run(None).unwrap();
    let bb = b.run(None).unwrap();
    assert_eq!(ba.to_bytes().unwrap(), bb.to_bytes().unwrap());
    assert_eq!(a.state.metrics, b.state.metrics);
}

#[test]
fn only_selected_rows_move() {
    let m = model();
    let before = m.fingerprints();
    let mut l = Learner::new(&m, &scenes(&["and"]), config(5), ExecMode::Sequential).unwrap();
    l.run(None).unwrap();
    assert_eq!(m.fingerprints(), before);
    let learnable = l.learnable_ids().to_vec();
    for i in 0..m.table.vocab.len() {
        let id = TokenId(i as u32);
        let row = l.table.row(id);
        if learnable.contains(&id) {
            assert_ne!(row, m.table.frozen_row(id));
        } else {
            assert_eq!(row, m.table.frozen_row(id), "row of `{}`", m.table.vocab.word(id));
        }
    }
}

#[test]
fn zero_weight_and_all_ones_mask_match_the_plain_run() {
    let m = model();
    let data = scenes(&["and"]);
    let plain = learn(&m, &data, &config(4), None, ExecMode::Sequential).unwrap();
    let mut loss = LossConfig::preset(true, true, false);
    loss.gamma = 0.0;
    // Warm-up longer than the run keeps the mask all ones.
    let cfg = LearnConfig { loss, warmup_steps: 100, ..config(4) };
    let masked = learn(&m, &data, &cfg, None, ExecMode::Sequential).unwrap();
    assert_eq!(plain.vectors, masked.vectors);
}

#[test]
fn strategies_nest() {
    let m = model();
    let data = scenes(&["beside", "near"]);
    let words = |s: Strategy| Learner::new(&m, &data, LearnConfig { strategy: s, ..config(1) }, ExecMode::Sequential).unwrap().learnable_words();
    let one = words(Strategy::One);
    let diverse = words(Strategy::Diverse);
    let all = words(Strategy::All);
    assert_eq!(one, vec!["<n1>", "<n2>"]);
    assert!(one.iter().all(|w| diverse.contains(w) && all.contains(w)));
    assert!(diverse.contains(&"beside".to_string()) && diverse.contains(&"near".to_string()));
    assert!(!diverse.iter().any(|w| w == "a"));
    assert!(all.iter().any(|w| m.lexicon.is_adjective(w)));
}

#[test]
fn diverse_updates_follow_the_scene() {
    let m = model();
    let data = scenes(&["beside", "near"]);
    let l = Learner::new(&m, &data, LearnConfig { strategy: Strategy::Diverse, ..config(1) }, ExecMode::Sequential).unwrap();
    let mut plan = l.plan(0);
    plan.items.truncate(1);
    plan.items[0].scene = 0;
    assert!(data[0].caption.iter().any(|w| w == "beside"));
    let ev = l.evaluate(&plan, &[None]).unwrap();
    let id = |w: &str| m.table.vocab.id(w).unwrap();
    let norm = |w: &str| ev.grads.get(&id(w)).map_or(0.0, |g| g.iter().map(|v| v * v).sum::<f64>());
    assert!(norm("beside") > 0.0);
    assert_eq!(norm("near"), 0.0);
}

#[test]
fn masked_baseline_ignores_pixels_outside_the_mask() {
    let m = model();
    let data = scenes(&["and"]);
    let bg = [255, 255, 255];
    let cfg = config(3);
    let a = learn_masked_baseline(&m, &data, "<n1>", bg, &cfg, ExecMode::Sequential).unwrap();
    let mut noisy = data.clone();
    for s in &mut noisy {
        let keep = s.mask_for_token("<n1>").unwrap().clone();
        for y in 0..s.image.height {
            for x in 0..s.image.width {
                if !keep.get(x, y) {
                    s.image.set(x, y, [0.1, (x % 3) as f64 / 3.0, 0.7]);
                }
            }
        }
    }
    let b = learn_masked_baseline(&m, &noisy, "<n1>", bg, &cfg, ExecMode::Sequential).unwrap();
    assert_eq!(a.vectors, b.vectors);
    assert_eq!(a.tokens, vec!["<n1>"]);
    let all = learn_masked_baselines(&m, &data, bg, &cfg, ExecMode::Sequential).unwrap();
    assert_eq!(all.len(), 2);
    assert!(learn_masked_baseline(&m, &data, "<n9>", bg, &cfg, ExecMode::Sequential).is_err());
}

#[test]
fn bundles_round_trip_and_reject_damage() {
    let m = model();
    let cfg = LearnConfig { loss: LossConfig::preset(true, true, true), ..config(2) };
    let b = learn(&m, &scenes(&["and"]), &cfg, None, ExecMode::Sequential).unwrap();
    assert_eq!(b.adjectives.len(), 2);
    assert!(b.adjectives.iter().all(|(a, n)| m.lexicon.is_adjective(a) && n.starts_with("<n")));
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("b.mcpl");
    let n = save_bundle(&b, &p).unwrap();
    assert!(n < MAX_BUNDLE_BYTES);
    let back = load_bundle(&p).unwrap();
    assert_eq!(back, b);
    assert_eq!(back.to_bytes().unwrap(), b.to_bytes().unwrap());
    check_compatible(&m, &back).unwrap();

    let mut bytes = std::fs::read(&p).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&p, &bytes).unwrap();
    assert!(load_bundle(&p).is_err());

    let other = PretrainedModel::new(BackboneConfig::tiny(8), Lexicon::default(), 12).unwrap();
    assert!(matches!(check_compatible(&other, &b), Err(Error::FingerprintDrift(_))));
}

#[test]
fn run_directory_holds_config_metrics_and_bundle() {
    let m = model();
    let dir = tempfile::tempdir().unwrap();
    let run = RunDir::create(dir.path().join("r")).unwrap();
    let cfg = LearnConfig { loss: LossConfig::preset(true, false, false), checkpoint_every: 2, snapshot_every: 2, ..config(4) };
    learn(&m, &scenes(&["and"]), &cfg, Some(&run), ExecMode::Sequential).unwrap();
    let metrics = std::fs::read_to_string(run.file(METRICS_FILE)).unwrap();
    assert_eq!(metrics.lines().count(), 4);
    let stored: LearnConfig = serde_json::from_slice(&std::fs::read(run.file(CONFIG_FILE)).unwrap()).unwrap();
    assert_eq!(stored, cfg);
    assert!(load_bundle(run.file(BUNDLE_FILE)).is_ok());
    assert!(std::fs::read_dir(run.checkpoints()).unwrap().count() >= 2);
    let ckpt: serde_json::Value = serde_json::from_slice(&std::fs::read(run.checkpoints().join("step-00004.json")).unwrap()).unwrap();
    let state: RunState = serde_json::from_value(ckpt["state"].clone()).unwrap();
    assert_eq!(state.step, 4);
    assert!(state.ema.get("s0000", "<n1>").is_some());
    assert!(std::fs::read_dir(run.masks()).unwrap().count() >= 2);
    assert!(RunDir::create(dir.path().join("r")).is_err());
}
