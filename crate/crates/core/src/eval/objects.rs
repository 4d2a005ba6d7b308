use super::MaskedObject;
use crate::engine::{inference_prompt, prompt_rows, ConceptBundle};
use crate::error::Result;
use crate::ldm::{sample_image, PretrainedModel};
use crate::par::{self, ExecMode};
use crate::probe::masks_from_records;
use crate::scene::CaptionedScene;

/// Ground-truth crops: one object per concept of every scene.
pub fn truth_objects(scenes: &[CaptionedScene]) -> Vec<MaskedObject> {
    scenes
        .iter()
        .flat_map(|s| {
            s.concepts.iter().zip(&s.masks).map(|(c, m)| MaskedObject { concept: c.token.clone(), image: s.image.clone(), mask: m.clone() })
        })
        .collect()
}

/// Samples `caption` once per seed and cuts out each bundle token by its
/// attention mask over the sampling trajectory.
pub fn generated_objects(
    model: &PretrainedModel,
    bundle: &ConceptBundle,
    caption: &[String],
    seeds: &[u64],
    steps: usize,
    k: f64,
    mode: ExecMode,
) -> Result<Vec<MaskedObject>> {
    let words = inference_prompt(caption);
    let rows = prompt_rows(model, bundle, &words)?;
    let tokens: Vec<(usize, String)> =
        words.iter().enumerate().filter(|(_, w)| bundle.tokens.contains(w)).map(|(i, w)| (i, w.clone())).collect();
    let per_seed = par::try_map(mode, seeds, |&seed| -> Result<Vec<MaskedObject>> {
        let s = sample_image(&model.backbone, &rows, steps, seed, true)?;
        let masks = masks_from_records(&s.trace, &tokens, k)?;
        Ok(masks.into_iter().map(|m| MaskedObject { concept: m.token, image: s.image.clone(), mask: m.mask }).collect())
    })?;
    Ok(per_seed.into_iter().flatten().collect())
}
