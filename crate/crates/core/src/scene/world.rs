use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::catalog::{concept, COLORS, NOUNS};
use super::raster::generate_scene;
use super::spec::{joined_template, CaptionedScene, SceneSpec};
use crate::error::{Error, Result};
use crate::par::{self, ExecMode};

/// Random scenes over the whole catalog, captioned with real nouns; the
/// corpus the denoiser and the frozen embedding rows are trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub scenes: usize,
    pub min_concepts: usize,
    pub max_concepts: usize,
    pub connectors: Vec<String>,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            scenes: 2000,
            min_concepts: 2,
            max_concepts: 5,
            connectors: ["and", "beside", "near", "with", "on"].map(String::from).to_vec(),
            seed: 0,
        }
    }
}

/// Size range used for `n` concepts on the default canvas.
pub fn size_range_for(n: usize) -> (f64, f64) {
    if n <= 2 {
        (0.28, 0.38)
    } else {
        (0.19, 0.26)
    }
}

pub fn world_scene(config: &WorldConfig, i: usize) -> Result<CaptionedScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ i as u64);
    let n = rng.random_range(config.min_concepts..=config.max_concepts);
    let nouns: Vec<&str> = NOUNS.choose_multiple(&mut rng, n).copied().collect();
    let concepts = nouns
        .iter()
        .map(|noun| concept(COLORS.choose(&mut rng).expect("colours"), noun, size_range_for(n)))
        .collect();
    let connector = config.connectors.choose(&mut rng).ok_or_else(|| Error::Config("no connectors".into()))?;
    let spec = SceneSpec { template_caption: joined_template(n, connector), ..SceneSpec::new(concepts) };
    let mut scene = generate_scene(&spec, rng.random())?;
    scene.scene_id = format!("w{i:05}");
    Ok(scene)
}

pub fn world_scenes(config: &WorldConfig, mode: ExecMode) -> Result<Vec<CaptionedScene>> {
    if config.min_concepts > config.max_concepts {
        return Err(Error::Config("min_concepts exceeds max_concepts".into()));
    }
    par::map_range(mode, config.scenes, |i| world_scene(config, i)).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_varied() {
        let cfg = WorldConfig { scenes: 20, ..Default::default() };
        let a = world_scenes(&cfg, ExecMode::Sequential).unwrap();
        let b = world_scenes(&cfg, ExecMode::Parallel).unwrap();
        assert_eq!(a, b);
        let counts: std::collections::BTreeSet<usize> = a.iter().map(|s| s.concepts.len()).collect();
        assert!(counts.len() > 1);
        assert!(a.iter().all(|s| s.masks.iter().all(|m| !m.is_empty())));
    }
}
