use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;
use super::unet::{AttentionRecord, DenoiserBackbone};
use crate::error::{Error, Result};
use crate::grid::RgbImage;

/// Generated image plus, when captured, every attention record of every
/// denoising step (steps × blocks, in step order).
#[derive(Debug, Clone)]
pub struct Sample {
    pub image: RgbImage,
    pub latent: Tensor,
    pub trace: Vec<AttentionRecord>,
}

/// Evenly spaced timesteps from `T` down to 1.
pub fn sampling_timesteps(total: usize, steps: usize) -> Vec<usize> {
    let mut ts: Vec<usize> = (1..=steps).map(|i| ((i * total) as f64 / steps as f64).round().max(1.0) as usize).collect();
    ts.dedup();
    ts.reverse();
    ts
}

/// Deterministic DDIM sampling from seeded Gaussian noise.
pub fn sample_image(
    backbone: &DenoiserBackbone,
    tokens: &[Vec<f64>],
    steps: usize,
    seed: u64,
    capture: bool,
) -> Result<Sample> {
    if steps < 1 {
        return Err(Error::InvalidArgument("sampling needs at least one step".into()));
    }
    let sched = &backbone.schedule;
    let (c, h, w) = backbone.config.latent_shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = Tensor::randn(c, h, w, &mut rng);
    let ts = sampling_timesteps(sched.steps, steps.min(sched.steps));
    let mut trace = Vec::new();
    for (i, &t) in ts.iter().enumerate() {
        let (eps, records) = backbone.denoise_predict(&z, t, tokens)?;
        if capture {
            trace.extend(records);
        }
        let (a, s) = (sched.alpha(t), sched.sigma(t));
        let next = ts.get(i + 1).copied().unwrap_or(0);
        let (an, sn) = (sched.alpha(next), sched.sigma(next));
        for (zv, e) in z.data.iter_mut().zip(&eps.data) {
            let x0 = ((*zv - s * e) / a).clamp(-1.0, 1.0);
            *zv = an * x0 + sn * e;
        }
    }
    let image = backbone.config.codec.decode(&z)?;
    Ok(Sample { image, latent: z, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ldm::BackboneConfig;

    #[test]
    fn deterministic_with_full_trace() {
        let b = DenoiserBackbone::new(BackboneConfig::tiny(8), 1).unwrap();
        let toks = vec![vec![0.2; 8]; 3];
        let s1 = sample_image(&b, &toks, 5, 4, true).unwrap();
        let s2 = sample_image(&b, &toks, 5, 4, false).unwrap();
        assert_eq!(s1.image, s2.image);
        assert_eq!(s1.trace.len(), 5 * 4);
        assert!(s2.trace.is_empty());
        assert!(sample_image(&b, &toks, 0, 4, false).is_err());
    }

    #[test]
    fn timesteps_descend_to_one() {
        assert_eq!(sampling_timesteps(1000, 4), vec![1000, 750, 500, 250]);
        let ts = sampling_timesteps(10, 10);
        assert_eq!(ts.first(), Some(&10));
        assert_eq!(ts.last(), Some(&1));
    }
}
