use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::schedule::{forward_diffuse, ScheduleKind};
use super::tensor::Tensor;
use super::unet::{BackboneConfig, DenoiserBackbone};
use crate::archive;
use crate::error::{Error, Result};
use crate::optim::{Optimizer, OptimizerKind};
use crate::par::{self, ExecMode};
use crate::scene::CaptionedScene;
use crate::text::{sample_neutral_template_with, EmbeddingTable, Lexicon, Vocabulary, CLASS_NOUN};

const MODEL_MAGIC: &[u8; 8] = b"MCPLBKB1";
const SESSION_MAGIC: &[u8; 8] = b"MCPLPRT1";
const FORMAT_VERSION: u32 = 1;

/// Frozen world every learn run works against: the denoiser, the
/// embedding table it was trained with, and the lexicon.
#[derive(Debug, Clone)]
pub struct PretrainedModel {
    pub backbone: DenoiserBackbone,
    pub table: EmbeddingTable,
    pub lexicon: Lexicon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineageEntry {
    pub step: usize,
    pub fingerprint: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScheduleHeader {
    steps: usize,
    kind: ScheduleKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelHeader {
    format_version: u32,
    architecture: BackboneConfig,
    schedule: ScheduleHeader,
    fingerprint: String,
    table_fingerprint: String,
    vocabulary: Vocabulary,
    embed_dim: usize,
    lexicon: Lexicon,
    lineage: Vec<LineageEntry>,
    param_count: usize,
}

impl PretrainedModel {
    pub fn new(config: BackboneConfig, lexicon: Lexicon, seed: u64) -> Result<Self> {
        lexicon.validate()?;
        let vocab = Vocabulary::from_lexicon(&lexicon)?;
        let table = EmbeddingTable::random(vocab, config.embed_dim, 0.5, seed ^ 0x7AB1E);
        let backbone = DenoiserBackbone::new(config, seed)?;
        Ok(PretrainedModel { backbone, table, lexicon })
    }

    fn header(&self, lineage: &[LineageEntry]) -> ModelHeader {
        ModelHeader {
            format_version: FORMAT_VERSION,
            architecture: self.backbone.config.clone(),
            schedule: ScheduleHeader { steps: self.backbone.schedule.steps, kind: self.backbone.schedule.kind },
            fingerprint: self.backbone.fingerprint(),
            table_fingerprint: self.table.frozen_fingerprint(),
            vocabulary: self.table.vocab.clone(),
            embed_dim: self.table.dim,
            lexicon: self.lexicon.clone(),
            lineage: lineage.to_vec(),
            param_count: self.backbone.params().len(),
        }
    }

    fn payload(&self, out: &mut Vec<u8>) {
        archive::f64s_to_bytes(&self.backbone.params().data, out);
        archive::f64s_to_bytes(self.table.frozen_rows(), out);
    }

    fn from_parts(h: &ModelHeader, values: &[f64], path: &Path) -> Result<(Self, usize)> {
        if h.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!("{}: format version {}", path.display(), h.format_version)));
        }
        let rows = h.vocabulary.len() * h.embed_dim;
        if values.len() < h.param_count + rows {
            return Err(Error::Load { path: path.to_path_buf(), reason: "payload shorter than header says".into() });
        }
        let mut backbone = DenoiserBackbone::uninitialized(h.architecture.clone())?;
        backbone.load_params(values[..h.param_count].to_vec())?;
        let table = EmbeddingTable::from_rows(h.vocabulary.clone(), h.embed_dim, values[h.param_count..h.param_count + rows].to_vec())?;
        if backbone.fingerprint() != h.fingerprint || table.frozen_fingerprint() != h.table_fingerprint {
            return Err(Error::FingerprintDrift(format!("{}: stored fingerprints do not match payload", path.display())));
        }
        Ok((PretrainedModel { backbone, table, lexicon: h.lexicon.clone() }, h.param_count + rows))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.save_with_lineage(path.as_ref(), &[])
    }

    fn save_with_lineage(&self, path: &Path, lineage: &[LineageEntry]) -> Result<()> {
        let mut payload = Vec::new();
        self.payload(&mut payload);
        archive::write(path, MODEL_MAGIC, &self.header(lineage), &payload)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (h, payload): (ModelHeader, _) = archive::read(path, MODEL_MAGIC)?;
        let values = archive::f64s_from_bytes(&payload)?;
        Ok(Self::from_parts(&h, &values, path)?.0)
    }

    /// Fingerprints of the backbone and of the frozen embedding rows.
    pub fn fingerprints(&self) -> (String, String) {
        (self.backbone.fingerprint(), self.table.frozen_fingerprint())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    /// Probability of replacing a noun by the class noun in a caption.
    pub class_noun_prob: f64,
    pub flip: bool,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig { steps: 6000, batch: 8, lr: 2e-3, class_noun_prob: 0.2, flip: true, seed: 0 }
    }
}

/// Training in progress; checkpoints carry the optimizer state so that a
/// resumed run continues exactly where it stopped.
#[derive(Debug, Clone)]
pub struct PretrainSession {
    pub model: PretrainedModel,
    pub config: PretrainConfig,
    pub step: usize,
    pub losses: Vec<f64>,
    pub lineage: Vec<LineageEntry>,
    opt_params: Optimizer,
    opt_table: Optimizer,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SessionHeader {
    model: ModelHeader,
    config: PretrainConfig,
    step: usize,
    losses: Vec<f64>,
    opt_params: Optimizer,
    opt_table: Optimizer,
}

fn step_rng(seed: u64, step: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step as u64 + 1);
    rng
}

struct ItemGrads {
    loss: f64,
    params: Vec<f64>,
    tokens: Vec<(usize, Vec<f64>)>,
}

impl PretrainSession {
    pub fn new(model: PretrainedModel, config: PretrainConfig) -> Result<Self> {
        if config.batch == 0 || !(config.lr > 0.0) {
            return Err(Error::Config("pretraining needs batch >= 1 and lr > 0".into()));
        }
        let opt_params = Optimizer::new(OptimizerKind::Adam, config.lr, model.backbone.params().len());
        let opt_table = Optimizer::new(OptimizerKind::Adam, config.lr, model.table.frozen_rows().len());
        let lineage = vec![LineageEntry { step: 0, fingerprint: model.backbone.fingerprint() }];
        Ok(PretrainSession { model, config, step: 0, losses: Vec::new(), lineage, opt_params, opt_table })
    }

    fn caption_words<R: Rng>(&self, scene: &CaptionedScene, rng: &mut R) -> Vec<String> {
        let mut words = sample_neutral_template_with(&self.model.lexicon, rng);
        for w in scene.caption_with_nouns() {
            let swap = self.model.lexicon.is_noun(&w) && rng.random::<f64>() < self.config.class_noun_prob;
            words.push(if swap { CLASS_NOUN.to_string() } else { w });
        }
        words
    }

    fn item(&self, scene: &CaptionedScene, z: &Tensor, seed: u64) -> Result<ItemGrads> {
        let bb = &self.model.backbone;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let words = self.caption_words(scene, &mut rng);
        let ids: Vec<usize> = words.iter().map(|w| self.model.table.vocab.id(w).map(|t| t.index())).collect::<Result<_>>()?;
        let rows: Vec<Vec<f64>> = ids.iter().map(|&i| self.model.table.frozen_row(crate::text::TokenId(i as u32)).to_vec()).collect();
        let z = if self.config.flip && rng.random::<bool>() { z.flip_horizontal() } else { z.clone() };
        let t = rng.random_range(1..=bb.schedule.steps);
        let eps = Tensor::randn(z.c, z.h, z.w, &mut rng);
        let zt = forward_diffuse(&z, t, &eps, &bb.schedule)?;
        let tr = bb.forward(&zt, t, &rows)?;
        let n = eps.len() as f64;
        let mut loss = 0.0;
        let mut d = Tensor::zeros(z.c, z.h, z.w);
        for ((g, a), b) in d.data.iter_mut().zip(&tr.output.data).zip(&eps.data) {
            loss += (a - b) * (a - b);
            *g = 2.0 * (a - b) / n;
        }
        let mut params = bb.params().zeros_like();
        let res = bb.backward(&tr, &d, Some(&mut params));
        Ok(ItemGrads { loss: loss / n, params, tokens: ids.into_iter().zip(res.token_grads).collect() })
    }

    /// Trains until `until_step` optimizer steps have been taken in total.
    pub fn run(&mut self, scenes: &[CaptionedScene], until_step: usize, mode: ExecMode) -> Result<()> {
        if scenes.is_empty() {
            return Err(Error::Empty("pretraining dataset".into()));
        }
        let codec = self.model.backbone.config.codec;
        let size = self.model.backbone.config.image_size;
        let latents: Vec<Tensor> = par::try_map(mode, scenes, |s| {
            if s.image.width != size || s.image.height != size {
                return Err(Error::Shape(format!("scene {} is {}px, model expects {size}", s.scene_id, s.image.width)));
            }
            codec.encode(&s.image)
        })?;
        let dim = self.model.table.dim;
        while self.step < until_step {
            let mut rng = step_rng(self.config.seed, self.step);
            let picks: Vec<(usize, u64)> =
                (0..self.config.batch).map(|_| (rng.random_range(0..scenes.len()), rng.random())).collect();
            let items = par::try_map(mode, &picks, |&(i, seed)| self.item(&scenes[i], &latents[i], seed))?;
            let b = items.len() as f64;
            let mut gp = vec![0.0; self.model.backbone.params().len()];
            let mut gt = vec![0.0; self.model.table.frozen_rows().len()];
            let mut loss = 0.0;
            for it in &items {
                loss += it.loss / b;
                for (g, x) in gp.iter_mut().zip(&it.params) {
                    *g += x / b;
                }
                for (id, row) in &it.tokens {
                    for (g, x) in gt[id * dim..(id + 1) * dim].iter_mut().zip(row) {
                        *g += x / b;
                    }
                }
            }
            if !loss.is_finite() {
                return Err(Error::Diverged { step: self.step, value: loss });
            }
            self.opt_params.step(&mut self.model.backbone.params_mut().data, &gp);
            self.opt_table.step(self.model.table.frozen_rows_mut(), &gt);
            self.losses.push(loss);
            self.step += 1;
            if self.step % 100 == 0 {
                log::info!("pretrain step {} loss {:.4}", self.step, crate::stats::mean(&self.losses[self.losses.len() - 100..]));
            }
        }
        let fp = self.model.backbone.fingerprint();
        if self.lineage.last().map(|e| &e.fingerprint) != Some(&fp) {
            self.lineage.push(LineageEntry { step: self.step, fingerprint: fp });
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut payload = Vec::new();
        self.model.payload(&mut payload);
        let header = SessionHeader {
            model: self.model.header(&self.lineage),
            config: self.config.clone(),
            step: self.step,
            losses: self.losses.clone(),
            opt_params: self.opt_params.clone(),
            opt_table: self.opt_table.clone(),
        };
        archive::write(path.as_ref(), SESSION_MAGIC, &header, &payload)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (h, payload): (SessionHeader, _) = archive::read(path, SESSION_MAGIC)?;
        let values = archive::f64s_from_bytes(&payload)?;
        let (model, _) = PretrainedModel::from_parts(&h.model, &values, path)?;
        Ok(PretrainSession {
            model,
            config: h.config,
            step: h.step,
            losses: h.losses,
            lineage: h.model.lineage,
            opt_params: h.opt_params,
            opt_table: h.opt_table,
        })
    }

    /// Writes the final model; its header records the fingerprint lineage.
    pub fn save_model(&self, path: impl AsRef<Path>) -> Result<()> {
        self.model.save_with_lineage(path.as_ref(), &self.lineage)
    }
}

/// Summary of a finished pretraining run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub steps: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub fingerprint: String,
    pub lineage: Vec<LineageEntry>,
}

/// Mean loss of the first few steps and window-averaged loss at the end.
pub fn report(session: &PretrainSession) -> PretrainReport {
    let l = &session.losses;
    let w = (l.len() / 10).clamp(1, 200);
    PretrainReport {
        steps: session.step,
        initial_loss: crate::stats::mean(&l[..l.len().min(10)]),
        final_loss: crate::stats::mean(&l[l.len().saturating_sub(w)..]),
        fingerprint: session.model.backbone.fingerprint(),
        lineage: session.lineage.clone(),
    }
}

/// Trains a fresh model on `scenes` for `config.steps` steps.
pub fn pretrain_backbone(
    scenes: &[CaptionedScene],
    architecture: BackboneConfig,
    lexicon: Lexicon,
    config: PretrainConfig,
    mode: ExecMode,
) -> Result<(PretrainedModel, PretrainReport)> {
    if scenes.is_empty() {
        return Err(Error::Empty("pretraining dataset".into()));
    }
    let model = PretrainedModel::new(architecture, lexicon, config.seed)?;
    let steps = config.steps;
    let mut session = PretrainSession::new(model, config)?;
    session.run(scenes, steps, mode)?;
    let rep = report(&session);
    Ok((session.model, rep))
}
