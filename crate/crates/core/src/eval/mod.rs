//! Evaluation against masked single-concept references: prompt and image
//! fidelity, cluster separation of learned embeddings, mask IoU and the
//! concepts-per-image scaling table.

mod cluster;
mod encoder;
mod fidelity;
mod objects;
mod plot;
mod scaling;

pub use cluster::{cosine_distance, euclidean, project_embeddings, silhouette, ClusterReport, DEFAULT_PERPLEXITY, TSNE_EPOCHS};
pub use encoder::{ImageEncoder, ENCODER_PROMPT, ENCODER_TIMESTEP};
pub use fidelity::{image_fidelity, pairwise_fidelity, prompt_fidelity, ConceptFidelity, FidelityReport, MaskedObject};
pub use objects::{generated_objects, truth_objects};
pub use scaling::{scaling_report, ScalingReport, ScalingRow, Trend};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Mask;
use crate::ldm::PretrainedModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaceKind {
    FrozenTextTable,
    FrozenImageEncoder,
}

/// The fixed space similarities are measured in. Reports from different
/// fingerprints are not comparable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceSpace {
    pub kind: SpaceKind,
    pub fingerprint: String,
}

impl ReferenceSpace {
    pub fn text_table(model: &PretrainedModel) -> Self {
        ReferenceSpace { kind: SpaceKind::FrozenTextTable, fingerprint: model.table.frozen_fingerprint() }
    }

    pub fn image_encoder(model: &PretrainedModel) -> Self {
        ReferenceSpace { kind: SpaceKind::FrozenImageEncoder, fingerprint: model.backbone.fingerprint() }
    }

    /// Short label for file names: kind plus fingerprint prefix.
    pub fn tag(&self) -> String {
        let kind = match self.kind {
            SpaceKind::FrozenTextTable => "text",
            SpaceKind::FrozenImageEncoder => "image",
        };
        format!("{kind}-{}", &self.fingerprint[..self.fingerprint.len().min(12)])
    }
}

fn file_label(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

/// |A ∩ B| / |A ∪ B| after nearest-neighbour resampling of `predicted`
/// to the ground truth's grid; 1 when both are empty.
pub fn mask_iou(predicted: &Mask, truth: &Mask) -> Result<f64> {
    if predicted.width == 0 || predicted.height == 0 || truth.width == 0 || truth.height == 0 {
        return Err(Error::Shape("mask with a zero dimension".into()));
    }
    if predicted.width * truth.height != predicted.height * truth.width {
        return Err(Error::Shape(format!(
            "{}x{} cannot be resampled onto {}x{}",
            predicted.width, predicted.height, truth.width, truth.height
        )));
    }
    let p = if (predicted.width, predicted.height) == (truth.width, truth.height) {
        predicted.clone()
    } else {
        predicted.resize_nearest(truth.width, truth.height)
    };
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in p.data.iter().zip(&truth.data) {
        let (a, b) = (a != 0, b != 0);
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::engine::{ConceptBundle, BUNDLE_VERSION};
    use crate::grid::RgbImage;
    use crate::ldm::BackboneConfig;
    use crate::par::ExecMode;
    use crate::text::{Lexicon, Strategy};

    fn square(side: usize, x0: usize, x1: usize, y0: usize, y1: usize) -> Mask {
        let mut m = Mask::zeros(side, side);
        for y in y0..y1 {
            for x in x0..x1 {
                m.set(x, y, true);
            }
        }
        m
    }

    #[test]
    fn iou_cases() {
        let a = square(8, 0, 4, 0, 4);
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        assert_eq!(mask_iou(&a, &square(8, 4, 8, 4, 8)).unwrap(), 0.0);
        // 4x4 squares shifted by half a side: overlap 8, union 24.
        assert!((mask_iou(&a, &square(8, 2, 6, 0, 4)).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(mask_iou(&Mask::zeros(4, 4), &Mask::zeros(8, 8)).unwrap(), 1.0);
        assert_eq!(mask_iou(&square(4, 0, 2, 0, 2), &a).unwrap(), 1.0);
        assert!(matches!(mask_iou(&Mask::zeros(4, 2), &a), Err(Error::Shape(_))));
    }

    fn space() -> ReferenceSpace {
        ReferenceSpace { kind: SpaceKind::FrozenTextTable, fingerprint: "f".repeat(64) }
    }

    fn labelled(rng: &mut ChaCha8Rng, concepts: &[&str], per: usize, dim: usize) -> Vec<(String, Vec<f64>)> {
        concepts
            .iter()
            .flat_map(|c| (0..per).map(|_| (c.to_string(), (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())).collect::<Vec<_>>())
            .collect()
    }

    #[test]
    fn fidelity_identities_and_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let refs = labelled(&mut rng, &["<n1>", "<n2>"], 1, 6);
        let r = pairwise_fidelity("m", &space(), &refs, &refs).unwrap();
        for c in &r.concepts {
            assert!((c.mean - 1.0).abs() < 1e-12);
        }
        let mut neg = refs.clone();
        neg[1].1.iter_mut().for_each(|v| *v = -*v);
        let r = pairwise_fidelity("m", &space(), &neg, &refs).unwrap();
        assert!((r.get("<n1>").unwrap().mean - 1.0).abs() < 1e-12);
        assert!((r.get("<n2>").unwrap().mean + 1.0).abs() < 1e-12);

        let a = labelled(&mut rng, &["<n1>", "<n2>"], 10, 6);
        let b = labelled(&mut rng, &["<n1>", "<n2>"], 10, 6);
        let ab = pairwise_fidelity("m", &space(), &a, &b).unwrap();
        let ba = pairwise_fidelity("m", &space(), &b, &a).unwrap();
        for (x, y) in ab.concepts.iter().zip(&ba.concepts) {
            assert_eq!(x.pairs, 100);
            assert!((x.mean - y.mean).abs() < 1e-12);
            assert!((-1.0..=1.0).contains(&x.mean));
        }
    }

    #[test]
    fn fidelity_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = labelled(&mut rng, &["x"], 2, 4);
        assert!(matches!(pairwise_fidelity("m", &space(), &[], &a), Err(Error::Empty(_))));
        let short = labelled(&mut rng, &["x"], 1, 3);
        assert!(matches!(pairwise_fidelity("m", &space(), &a, &short), Err(Error::Shape(_))));
        let other = labelled(&mut rng, &["y"], 1, 4);
        assert!(matches!(pairwise_fidelity("m", &space(), &a, &other), Err(Error::InvalidArgument(_))));
    }

    fn bundle(tokens: &[&str], vectors: Vec<Vec<f32>>, table: &str) -> ConceptBundle {
        ConceptBundle {
            version: BUNDLE_VERSION,
            tokens: tokens.iter().map(|t| t.to_string()).collect(),
            dim: vectors[0].len(),
            vectors,
            adjectives: vec![],
            strategy: Strategy::One,
            backbone_fingerprint: "b".into(),
            table_fingerprint: table.into(),
            lexicon_hash: "l".into(),
            config_digest: "c".into(),
        }
    }

    #[test]
    fn prompt_fidelity_checks_the_space() {
        let s = space();
        let learned = bundle(&["<n1>", "<n2>"], vec![vec![1.0, 0.0], vec![0.0, 1.0]], &s.fingerprint);
        let refs = [bundle(&["<n1>"], vec![vec![2.0, 0.0]], &s.fingerprint), bundle(&["<n2>"], vec![vec![1.0, 1.0]], &s.fingerprint)];
        let r = prompt_fidelity("full", std::slice::from_ref(&learned), &refs, &s).unwrap();
        assert!((r.get("<n1>").unwrap().mean - 1.0).abs() < 1e-12);
        assert!((r.get("<n2>").unwrap().mean - 0.5f64.sqrt()).abs() < 1e-6);
        let foreign = bundle(&["<n1>"], vec![vec![1.0, 0.0]], "other");
        assert!(prompt_fidelity("full", &[foreign], &refs, &s).is_err());
        let img = ReferenceSpace { kind: SpaceKind::FrozenImageEncoder, ..s.clone() };
        assert!(prompt_fidelity("full", &[learned], &refs, &img).is_err());
    }

    fn blob(color: [f64; 3], x0: usize) -> MaskedObject {
        let mut image = RgbImage::filled(16, 16, [0.9, 0.9, 0.9]);
        let mask = square(16, x0, x0 + 6, 5, 11);
        for y in 5..11 {
            for x in x0..x0 + 6 {
                image.set(x, y, color);
            }
        }
        MaskedObject { concept: "c".into(), image, mask }
    }

    #[test]
    fn image_fidelity_sanity() {
        let model = PretrainedModel::new(BackboneConfig::tiny(8), Lexicon::default(), 3).unwrap();
        let enc = ImageEncoder::new(&model).unwrap();
        assert_eq!(enc.encode(&RgbImage::filled(16, 16, [0.5; 3])).unwrap().len(), enc.feature_dim());
        let set = vec![blob([0.8, 0.2, 0.1], 2), blob([0.8, 0.2, 0.1], 8)];
        let same = image_fidelity("m", &set, &set, &enc, ExecMode::Sequential).unwrap();
        // Identical sets: every self-pair is 1, the cross pairs pull the mean below.
        assert!(same.concepts[0].mean <= 1.0 + 1e-12);
        let one = image_fidelity("m", &set[..1], &set[..1], &enc, ExecMode::Parallel).unwrap();
        assert!((one.concepts[0].mean - 1.0).abs() < 1e-12);
        assert_eq!(one.space.kind, SpaceKind::FrozenImageEncoder);

        let mut empty = blob([0.1, 0.2, 0.8], 3);
        empty.mask = Mask::zeros(16, 16);
        let r = image_fidelity("m", &[set[0].clone(), empty], &set, &enc, ExecMode::Sequential).unwrap();
        assert_eq!(r.concepts[0].excluded, 1);
        assert_eq!(r.concepts[0].pairs, 2);
    }

    #[test]
    fn separated_clusters_score_high() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut pts = Vec::new();
        for (label, centre) in [("a", 10.0), ("b", -10.0)] {
            for _ in 0..8 {
                let mut v: Vec<f64> = (0..6).map(|_| rng.random_range(-0.5..0.5)).collect();
                v[0] += centre;
                v[1] += 3.0;
                pts.push((label.to_string(), v));
            }
        }
        let r = project_embeddings("synthetic", &pts, 9).unwrap();
        assert!(r.silhouette.unwrap() > 0.8, "{:?}", r.silhouette);
        assert!(r.embedding_silhouette.unwrap() > 0.8);
        assert!(!r.degenerate);
        assert_eq!(r.coords, project_embeddings("synthetic", &pts, 9).unwrap().coords);
        let dir = tempfile::tempdir().unwrap();
        let json = r.write(dir.path()).unwrap();
        assert!(json.exists() && json.with_extension("png").exists());
    }

    #[test]
    fn identical_embeddings_are_degenerate() {
        let pts: Vec<(String, Vec<f64>)> = ["a", "a", "b", "b"].iter().map(|l| (l.to_string(), vec![1.0, 2.0])).collect();
        let r = project_embeddings("same", &pts, 0).unwrap();
        assert!(r.degenerate && r.silhouette.is_none() && r.embedding_silhouette.is_none());
        assert!(project_embeddings("few", &pts[..3], 0).is_err());
    }

    #[test]
    fn silhouette_matches_hand_computation() {
        // Points 0, 1 in "a" and 4 in "b" on a line.
        let pts = [vec![0.0], vec![1.0], vec![4.0]];
        let labels: Vec<String> = ["a", "a", "b"].iter().map(|s| s.to_string()).collect();
        let s0 = (4.0 - 1.0) / 4.0;
        let s1 = (3.0 - 1.0) / 3.0;
        let got = silhouette(&pts, &labels, euclidean).unwrap();
        assert!((got - (s0 + s1 + 0.0) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn scaling_table_and_trend() {
        let g: BTreeMap<usize, Vec<f64>> = [(2, vec![0.9, 0.8]), (3, vec![0.7]), (4, vec![0.6]), (5, vec![0.5])].into_iter().collect();
        let r = scaling_report("image-fidelity", &g, &[2, 3, 4, 5]).unwrap();
        assert_eq!(r.rows.len(), 4);
        assert_eq!(r.trend, Trend::Decreasing);
        assert_eq!(r.inversions, 0);
        let mut bumpy = g.clone();
        bumpy.insert(4, vec![0.75]);
        let r = scaling_report("image-fidelity", &bumpy, &[2, 3, 4, 5]).unwrap();
        assert_eq!((r.trend, r.inversions), (Trend::Mixed, 1));
        let mut missing = g.clone();
        missing.remove(&3);
        assert!(matches!(scaling_report("x", &missing, &[2, 3, 4, 5]), Err(Error::Empty(_))));
        let dir = tempfile::tempdir().unwrap();
        let p = r.write(dir.path()).unwrap();
        assert!(p.exists() && p.with_extension("png").exists() && p.with_extension("txt").exists());
    }
}
