//! Using a learned bundle: prompt rows and attention-derived masks.

use super::bundle::ConceptBundle;
use crate::error::{Error, Result};
use crate::ldm::PretrainedModel;
use crate::losses::DEFAULT_K;
use crate::probe::{masks_from_records, probe_attention, probe_timesteps, BinaryMask};
use crate::scene::CaptionedScene;

/// Fixed neutral prefix for inference prompts.
pub const INFERENCE_PREFIX: &str = "a photo of";

/// Fails unless `bundle` was learned against `model`'s frozen state.
pub fn check_compatible(model: &PretrainedModel, bundle: &ConceptBundle) -> Result<()> {
    let (bb, table) = model.fingerprints();
    if bundle.backbone_fingerprint != bb || bundle.table_fingerprint != table {
        return Err(Error::FingerprintDrift("bundle was learned against a different backbone or table".into()));
    }
    if bundle.dim != model.table.dim {
        return Err(Error::Shape(format!("bundle dim {} vs table dim {}", bundle.dim, model.table.dim)));
    }
    Ok(())
}

/// One row per word: bundle tokens read the learned vectors, every other
/// word its frozen row.
pub fn prompt_rows(model: &PretrainedModel, bundle: &ConceptBundle, words: &[String]) -> Result<Vec<Vec<f64>>> {
    check_compatible(model, bundle)?;
    words
        .iter()
        .map(|w| match bundle.vector(w) {
            Some(v) => Ok(v),
            None => Ok(model.table.frozen_row(model.table.vocab.id(w)?).to_vec()),
        })
        .collect()
}

/// `INFERENCE_PREFIX` followed by `caption`.
pub fn inference_prompt(caption: &[String]) -> Vec<String> {
    INFERENCE_PREFIX.split_whitespace().map(str::to_string).chain(caption.iter().cloned()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentConfig {
    /// Noised copies of the image the attention is averaged over.
    pub timesteps: usize,
    pub k: f64,
    pub seed: u64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig { timesteps: 8, k: DEFAULT_K, seed: 0 }
    }
}

/// Masks of each concept token of `scene` under the bundle's vectors,
/// read from the attention over noised copies of the scene's own image.
pub fn segment_scene(model: &PretrainedModel, bundle: &ConceptBundle, scene: &CaptionedScene, cfg: &SegmentConfig) -> Result<Vec<BinaryMask>> {
    let words = inference_prompt(&scene.caption);
    let rows = prompt_rows(model, bundle, &words)?;
    let bb = &model.backbone;
    let z = bb.config.codec.encode(&scene.image)?;
    let records = probe_attention(bb, &z, &rows, &probe_timesteps(bb.schedule.steps, cfg.timesteps), cfg.seed)?;
    let tokens: Vec<(usize, String)> =
        scene.concepts.iter().filter_map(|c| words.iter().position(|w| w == &c.token).map(|p| (p, c.token.clone()))).collect();
    masks_from_records(&records, &tokens, cfg.k)
}
