use mcpl::ldm::{pretrain_backbone, report, BackboneConfig, PretrainConfig, PretrainSession, PretrainedModel};
use mcpl::par::ExecMode;
use mcpl::scene::{generate_dataset, preset_concepts, world_scenes, CaptionedScene, GenerationConfig, WorldConfig};
use mcpl::text::Lexicon;
use mcpl::Error;

fn tiny_world() -> Vec<CaptionedScene> {
    let cfg = GenerationConfig { canvas_size: 16, ..GenerationConfig::new(preset_concepts("two-concept").unwrap(), 2, 6, 1) };
    generate_dataset(&cfg).unwrap()
}

fn config(steps: usize) -> PretrainConfig {
    PretrainConfig { steps, batch: 4, lr: 5e-3, ..PretrainConfig::default() }
}

#[test]
fn loss_falls_and_the_table_is_trained() {
    let scenes = tiny_world();
    let untrained = PretrainedModel::new(BackboneConfig::tiny(8), Lexicon::default(), 0).unwrap();
    let (m, rep) = pretrain_backbone(&scenes, BackboneConfig::tiny(8), Lexicon::default(), config(150), ExecMode::Parallel).unwrap();
    assert_eq!(rep.steps, 150);
    assert!(rep.final_loss < rep.initial_loss, "{rep:?}");
    assert_ne!(m.table.frozen_fingerprint(), untrained.table.frozen_fingerprint());
    assert_eq!(rep.lineage.first().unwrap().fingerprint, untrained.backbone.fingerprint());
    assert_eq!(rep.lineage.last().unwrap().fingerprint, m.backbone.fingerprint());
}

#[test]
fn resumed_session_matches_an_uninterrupted_one() {
    let scenes = tiny_world();
    let fresh = || PretrainSession::new(PretrainedModel::new(BackboneConfig::tiny(8), Lexicon::default(), 3).unwrap(), config(6)).unwrap();
    let mut straight = fresh();
    straight.run(&scenes, 6, ExecMode::Sequential).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("session.mcpl");
    let mut first = fresh();
    first.run(&scenes, 3, ExecMode::Parallel).unwrap();
    first.save(&ckpt).unwrap();
    let mut resumed = PretrainSession::load(&ckpt).unwrap();
    assert_eq!(resumed.step, 3);
    resumed.run(&scenes, 6, ExecMode::Sequential).unwrap();
    assert_eq!(resumed.model.fingerprints(), straight.model.fingerprints());
    assert_eq!(resumed.losses, straight.losses);
    // The interrupted run records one extra entry at the save point.
    assert!(straight.lineage.iter().all(|e| resumed.lineage.contains(e)));
    assert_eq!(resumed.lineage.len(), straight.lineage.len() + 1);
    assert_eq!(report(&resumed).final_loss, report(&straight).final_loss);
}

#[test]
fn model_files_round_trip_and_detect_damage() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("model.mcpl");
    let m = PretrainedModel::new(BackboneConfig::tiny(8), Lexicon::default(), 4).unwrap();
    m.save(&p).unwrap();
    let back = PretrainedModel::load(&p).unwrap();
    assert_eq!(back.fingerprints(), m.fingerprints());
    assert_eq!(back.backbone.config, m.backbone.config);

    let mut bytes = std::fs::read(&p).unwrap();
    let mid = bytes.len() - 40;
    bytes[mid] ^= 0x10;
    std::fs::write(&p, &bytes).unwrap();
    assert!(PretrainedModel::load(&p).is_err());
    assert!(matches!(PretrainedModel::load(dir.path().join("missing.mcpl")), Err(Error::Io { .. })));
}

#[test]
fn wrong_image_size_is_rejected() {
    let scenes = world_scenes(&WorldConfig { scenes: 2, ..WorldConfig::default() }, ExecMode::Sequential).unwrap();
    let r = pretrain_backbone(&scenes, BackboneConfig::tiny(8), Lexicon::default(), config(1), ExecMode::Sequential);
    assert!(matches!(r, Err(Error::Shape(_))));
}
