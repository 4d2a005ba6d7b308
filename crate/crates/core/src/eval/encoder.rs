use super::ReferenceSpace;
use crate::error::Result;
use crate::grid::RgbImage;
use crate::ldm::{DenoiserBackbone, PretrainedModel};

/// Prompt the encoder conditions on; carries no concept.
pub const ENCODER_PROMPT: &str = "a photo of";
/// Denoising step at which features are read off the clean latent.
pub const ENCODER_TIMESTEP: usize = 1;

/// The frozen backbone used as an image feature extractor: the clean
/// latent goes through one forward pass under a neutral prompt and the
/// bottleneck activation is pooled per channel (mean, then max).
#[derive(Debug, Clone)]
pub struct ImageEncoder<'a> {
    backbone: &'a DenoiserBackbone,
    context: Vec<Vec<f64>>,
    space: ReferenceSpace,
}

impl<'a> ImageEncoder<'a> {
    pub fn new(model: &'a PretrainedModel) -> Result<Self> {
        let words: Vec<String> = ENCODER_PROMPT.split_whitespace().map(str::to_string).collect();
        let slots = model.table.slots(&words, |_, _| false)?;
        Ok(ImageEncoder { backbone: &model.backbone, context: model.table.encode_tokens(&slots)?, space: ReferenceSpace::image_encoder(model) })
    }

    pub fn space(&self) -> &ReferenceSpace {
        &self.space
    }

    pub fn feature_dim(&self) -> usize {
        2 * self.backbone.config.channels[2]
    }

    pub fn encode(&self, image: &RgbImage) -> Result<Vec<f64>> {
        let z = self.backbone.config.codec.encode(image)?;
        let tr = self.backbone.forward(&z, ENCODER_TIMESTEP, &self.context)?;
        let b = &tr.bottleneck;
        let hw = b.h * b.w;
        let mut out = Vec::with_capacity(2 * b.c);
        for ch in b.data.chunks(hw) {
            out.push(ch.iter().sum::<f64>() / hw as f64);
        }
        for ch in b.data.chunks(hw) {
            out.push(ch.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
        Ok(out)
    }
}
