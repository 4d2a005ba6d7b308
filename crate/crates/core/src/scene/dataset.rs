use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::catalog::concept;
use super::raster::generate_scene;
use super::spec::{
    joined_template, CaptionedScene, ConceptLabel, ConceptSpec, LayoutPolicy, SceneSpec, DEFAULT_BACKGROUND,
    DEFAULT_CANVAS, MAX_CONCEPTS, MIN_CONCEPTS,
};
use crate::digest;
use crate::error::{Error, Result};
use crate::grid::{Mask, RgbImage};
use crate::par::{self, ExecMode};
use crate::text::{is_pseudo_token, pseudo_token};

/// Settings for a synthetic multi-concept dataset. Scene `i` draws
/// `concepts_per_image` concepts from the pool round-robin, so every pool
/// concept appears in `pairs * concepts_per_image / pool` scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    pub concepts: Vec<ConceptSpec>,
    pub concepts_per_image: usize,
    pub pairs: usize,
    #[serde(default = "default_canvas")]
    pub canvas_size: usize,
    #[serde(default = "default_background")]
    pub background: [u8; 3],
    #[serde(default)]
    pub layout_policy: LayoutPolicy,
    /// Connector words cycled over scenes ("and", or "on"/"beside").
    #[serde(default = "default_connectors")]
    pub connectors: Vec<String>,
    pub seed: u64,
}

fn default_canvas() -> usize {
    DEFAULT_CANVAS
}
fn default_background() -> [u8; 3] {
    DEFAULT_BACKGROUND
}
fn default_connectors() -> Vec<String> {
    vec!["and".into()]
}

impl GenerationConfig {
    pub fn new(concepts: Vec<ConceptSpec>, concepts_per_image: usize, pairs: usize, seed: u64) -> Self {
        GenerationConfig {
            concepts,
            concepts_per_image,
            pairs,
            canvas_size: DEFAULT_CANVAS,
            background: DEFAULT_BACKGROUND,
            layout_policy: LayoutPolicy::NonOverlapping,
            connectors: default_connectors(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.concepts_per_image;
        if !(MIN_CONCEPTS..=MAX_CONCEPTS).contains(&k) {
            return Err(Error::Config(format!("concepts_per_image {k} outside {MIN_CONCEPTS}..={MAX_CONCEPTS}")));
        }
        if self.concepts.len() < k || self.concepts.len() > MAX_CONCEPTS {
            return Err(Error::Config(format!("pool of {} concepts for {k} per image", self.concepts.len())));
        }
        if self.connectors.is_empty() {
            return Err(Error::Config("no caption connectors".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        digest::json_digest(self)
    }

    fn scene_seed(&self, i: usize) -> u64 {
        // splitmix64 of (seed, index)
        let mut z = self.seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Pool indices used by scene `i`.
    pub fn scene_concepts(&self, i: usize) -> Vec<usize> {
        let p = self.concepts.len();
        (0..self.concepts_per_image).map(|j| (i * self.concepts_per_image + j) % p).collect()
    }

    /// Builds scene `i`. Pseudo-tokens follow the pool index so `<nK>`
    /// names the same concept in every scene.
    pub fn scene(&self, i: usize) -> Result<CaptionedScene> {
        let pool = self.scene_concepts(i);
        let connector = &self.connectors[i % self.connectors.len()];
        let spec = SceneSpec {
            concepts: pool.iter().map(|&j| self.concepts[j].clone()).collect(),
            canvas_size: self.canvas_size,
            background: self.background,
            layout_policy: self.layout_policy,
            template_caption: joined_template(pool.len(), connector),
        };
        let mut scene = generate_scene(&spec, self.scene_seed(i))?;
        let remap = |w: &str| -> String {
            match (0..pool.len()).find(|&l| pseudo_token(l) == w) {
                Some(l) => pseudo_token(pool[l]),
                None => w.to_string(),
            }
        };
        scene.caption = scene.caption.iter().map(|w| remap(w)).collect();
        for c in &mut scene.concepts {
            c.token = remap(&c.token);
        }
        scene.scene_id = format!("s{i:04}");
        Ok(scene)
    }
}

/// All scenes of `config`, in memory.
pub fn generate_dataset(config: &GenerationConfig) -> Result<Vec<CaptionedScene>> {
    generate_dataset_with(config, ExecMode::default())
}

pub fn generate_dataset_with(config: &GenerationConfig, mode: ExecMode) -> Result<Vec<CaptionedScene>> {
    config.validate()?;
    par::map_range(mode, config.pairs, |i| config.scene(i)).into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptRecord {
    pub noun: String,
    pub adjective: String,
    pub mask_file: String,
}

/// One line of `captions.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub scene_id: String,
    pub caption: String,
    pub concepts: Vec<ConceptRecord>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub scene_id: String,
    pub image_file: String,
    pub caption: CaptionRecord,
    pub mask_files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub root_path: PathBuf,
    pub generator_config_hash: String,
    pub config: GenerationConfig,
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CAPTIONS_FILE: &str = "captions.jsonl";

pub fn write_png_rgb(path: &Path, img: &RgbImage) -> Result<()> {
    let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, img.to_rgb8())
        .ok_or_else(|| Error::Image { path: path.into(), reason: "buffer size".into() })?;
    buf.save(path).map_err(|e| Error::Image { path: path.into(), reason: e.to_string() })
}

pub fn write_png_mask(path: &Path, mask: &Mask) -> Result<()> {
    let buf = image::GrayImage::from_raw(mask.width as u32, mask.height as u32, mask.to_gray8())
        .ok_or_else(|| Error::Image { path: path.into(), reason: "buffer size".into() })?;
    buf.save(path).map_err(|e| Error::Image { path: path.into(), reason: e.to_string() })
}

fn open_image(path: &Path) -> Result<image::DynamicImage> {
    if !path.exists() {
        return Err(Error::Load { path: path.into(), reason: "file not found".into() });
    }
    image::open(path).map_err(|e| Error::Image { path: path.into(), reason: e.to_string() })
}

pub fn read_png_rgb(path: &Path) -> Result<RgbImage> {
    let img = open_image(path)?.to_rgb8();
    Ok(RgbImage::from_rgb8(img.width() as usize, img.height() as usize, img.as_raw()))
}

pub fn read_png_mask(path: &Path) -> Result<Mask> {
    let img = open_image(path)?.to_luma8();
    let data = img.as_raw().iter().map(|&v| (v >= 128) as u8).collect();
    Ok(Mask { width: img.width() as usize, height: img.height() as usize, data })
}

/// Writes images, masks, `captions.jsonl` and `manifest.json` under `out`.
pub fn render_dataset(config: &GenerationConfig, out: impl AsRef<Path>) -> Result<DatasetManifest> {
    let out = out.as_ref();
    config.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let scenes = generate_dataset(config)?;
    if !scenes.is_empty() {
        for dir in ["images", "masks"] {
            let d = out.join(dir);
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
    }
    let mut entries = Vec::with_capacity(scenes.len());
    for s in &scenes {
        let image_file = format!("images/{}.png", s.scene_id);
        write_png_rgb(&out.join(&image_file), &s.image)?;
        let mut mask_files = Vec::new();
        let mut concepts = Vec::new();
        for (j, (c, m)) in s.concepts.iter().zip(&s.masks).enumerate() {
            let mask_file = format!("masks/{}_{j}.png", s.scene_id);
            write_png_mask(&out.join(&mask_file), m)?;
            concepts.push(ConceptRecord { noun: c.noun.clone(), adjective: c.adjective.clone(), mask_file: mask_file.clone() });
            mask_files.push(mask_file);
        }
        let caption = CaptionRecord { scene_id: s.scene_id.clone(), caption: s.caption.join(" "), concepts, seed: s.seed };
        entries.push(ManifestEntry { scene_id: s.scene_id.clone(), image_file, caption, mask_files });
    }
    if !entries.is_empty() {
        let path = out.join(CAPTIONS_FILE);
        let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
        for e in &entries {
            serde_json::to_writer(&mut w, &e.caption)?;
            w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    let manifest = DatasetManifest {
        root_path: out.to_path_buf(),
        generator_config_hash: config.hash(),
        config: config.clone(),
        entries,
    };
    let path = out.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

impl DatasetManifest {
    pub fn load(root: impl AsRef<Path>) -> Result<Self> {
        let path = root.as_ref().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut m: DatasetManifest = serde_json::from_str(&text)?;
        m.root_path = root.as_ref().to_path_buf();
        Ok(m)
    }

    pub fn scene_ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.scene_id.clone()).collect()
    }

    /// Reads `captions.jsonl`.
    pub fn caption_records(&self) -> Result<Vec<CaptionRecord>> {
        let path = self.root_path.join(CAPTIONS_FILE);
        if self.entries.is_empty() && !path.exists() {
            return Ok(Vec::new());
        }
        let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
        BufReader::new(f)
            .lines()
            .map(|l| {
                let l = l.map_err(|e| Error::io(&path, e))?;
                Ok(serde_json::from_str(&l)?)
            })
            .collect()
    }

    pub fn load_scene(&self, scene_id: &str) -> Result<CaptionedScene> {
        let e = self
            .entries
            .iter()
            .find(|e| e.scene_id == scene_id)
            .ok_or_else(|| Error::InvalidArgument(format!("scene `{scene_id}` not in manifest")))?;
        let image = read_png_rgb(&self.root_path.join(&e.image_file))?;
        let masks = e.mask_files.iter().map(|f| read_png_mask(&self.root_path.join(f))).collect::<Result<Vec<_>>>()?;
        let caption: Vec<String> = e.caption.caption.split_whitespace().map(str::to_string).collect();
        let tokens: Vec<&String> = caption.iter().filter(|w| is_pseudo_token(w)).collect();
        if tokens.len() != e.caption.concepts.len() {
            return Err(Error::Load {
                path: self.root_path.join(CAPTIONS_FILE),
                reason: format!("scene `{scene_id}` caption has {} slots for {} concepts", tokens.len(), e.caption.concepts.len()),
            });
        }
        let concepts = e
            .caption
            .concepts
            .iter()
            .zip(tokens)
            .map(|(c, t)| ConceptLabel { noun: c.noun.clone(), adjective: c.adjective.clone(), token: t.clone() })
            .collect();
        Ok(CaptionedScene { scene_id: e.scene_id.clone(), seed: e.caption.seed, image, caption, concepts, masks })
    }

    pub fn load_all(&self) -> Result<Vec<CaptionedScene>> {
        self.entries.iter().map(|e| self.load_scene(&e.scene_id)).collect()
    }
}

/// A loaded scene and whether it was mirrored.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneView {
    pub scene: CaptionedScene,
    pub flipped: bool,
}

/// Loads `scene_ids`; with `augment` each scene is mirrored with
/// probability 1/2 (image and masks together, caption untouched).
pub fn load_batch(manifest: &DatasetManifest, scene_ids: &[String], augment: bool, seed: u64) -> Result<Vec<SceneView>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    scene_ids
        .iter()
        .map(|id| {
            let scene = manifest.load_scene(id)?;
            let flipped = augment && rng.random_bool(0.5);
            Ok(SceneView { scene: if flipped { scene.flip_horizontal() } else { scene }, flipped })
        })
        .collect()
}

/// Named concept pools used by the CLI and the acceptance suite.
pub fn preset_concepts(name: &str) -> Option<Vec<ConceptSpec>> {
    let two = (0.28, 0.38);
    let many = (0.19, 0.26);
    Some(match name {
        "two-concept" => vec![concept("brown", "bear", two), concept("green", "box", two)],
        "three-concept" => vec![concept("brown", "bear", many), concept("green", "box", many), concept("blue", "kite", many)],
        "four-concept" => vec![
            concept("brown", "bear", many),
            concept("green", "box", many),
            concept("blue", "kite", many),
            concept("yellow", "donut", many),
        ],
        "five-concept" => vec![
            concept("brown", "bear", many),
            concept("green", "box", many),
            concept("blue", "kite", many),
            concept("yellow", "donut", many),
            concept("purple", "flag", many),
        ],
        _ => return None,
    })
}
