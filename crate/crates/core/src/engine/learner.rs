use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bundle::{ConceptBundle, BUNDLE_VERSION};
use super::config::LearnConfig;
use super::run_dir::RunDir;
use crate::error::{Error, Result};
use crate::grid::{Map2, Mask};
use crate::ldm::{forward_diffuse, PretrainedModel, Tensor};
use crate::losses::{
    dm_loss, dm_loss_grad, masked_dm_loss, masked_dm_loss_grad, prompt_cl, prompt_cl_adj, total_loss, EmbeddingGroupBatch,
    LossBreakdown, LossParts,
};
use crate::optim::Optimizer;
use crate::par::{self, ExecMode};
use crate::probe::{binarize, normalize_map, record_map, union_masks, EmaStore, MASK_RESOLUTION};
use crate::scene::{write_png_mask, CaptionedScene};
use crate::text::{parse_caption, sample_neutral_template_with, select_learnable, CaptionParse, LearnSelection, TokenId};

/// Independent seeds for scene order, diffusion noise and templates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSeeds {
    pub data: u64,
    pub noise: u64,
    pub template: u64,
}

impl StreamSeeds {
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        StreamSeeds { data: rng.random(), noise: rng.random(), template: rng.random() }
    }

    fn rng(seed: u64, step: usize) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(step as u64);
        r
    }
}

/// One line of `metrics.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub l_dm: f64,
    pub l_attnmask: Option<f64>,
    pub l_promptcl: f64,
    pub total: f64,
}

/// Mutable state of a learn run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunState {
    pub step: usize,
    /// Over the concatenated live rows, in token-id order.
    pub optimizer: Optimizer,
    pub ema: EmaStore,
    pub metrics: Vec<StepMetrics>,
    pub seeds: StreamSeeds,
}

/// Everything random about one batch element, fixed before evaluation.
#[derive(Debug, Clone)]
pub struct ItemPlan {
    pub scene: usize,
    pub flipped: bool,
    pub prefix: Vec<String>,
    pub t: usize,
    pub noise: Tensor,
}

#[derive(Debug, Clone)]
pub struct BatchPlan {
    pub items: Vec<ItemPlan>,
}

/// Loss, gradients with respect to live rows, and the attention maps of
/// the learnable nouns (unflipped, mask resolution) per item.
#[derive(Debug, Clone)]
pub struct StepEval {
    pub breakdown: LossBreakdown,
    pub grads: BTreeMap<TokenId, Vec<f64>>,
    pub noun_maps: Vec<Vec<(String, Map2)>>,
}

struct ItemOut {
    l_dm: f64,
    l_masked: Option<f64>,
    grads: Vec<(TokenId, Vec<f64>)>,
    maps: Vec<(String, Map2)>,
}

/// Where the regression mask comes from.
#[derive(Debug, Clone)]
pub enum MaskSource {
    /// Thresholded moving-average attention of the learnable nouns.
    Attention,
    /// Fixed masks per scene at latent resolution (ground truth).
    Fixed(Vec<Vec<f64>>),
}

/// Optimises the live rows of a copy of the frozen table against a
/// borrowed frozen backbone.
pub struct Learner<'a> {
    pub model: &'a PretrainedModel,
    pub scenes: Vec<CaptionedScene>,
    pub config: LearnConfig,
    pub table: crate::text::EmbeddingTable,
    pub state: RunState,
    pub mode: ExecMode,
    parses: Vec<CaptionParse>,
    selections: Vec<LearnSelection>,
    latents: Vec<Tensor>,
    mask_source: MaskSource,
    ids: Vec<TokenId>,
}

fn lat_mask(mask: &Mask, h: usize, w: usize) -> Result<Vec<f64>> {
    let m = if mask.width % w == 0 && mask.height % h == 0 {
        mask.downsample_majority(w, h)?
    } else {
        mask.resize_nearest(w, h)
    };
    Ok(m.data.iter().map(|&v| v as f64).collect())
}

fn flip_flat(v: &[f64], w: usize) -> Vec<f64> {
    let mut out = v.to_vec();
    for row in out.chunks_mut(w) {
        row.reverse();
    }
    out
}

impl<'a> Learner<'a> {
    pub fn new(model: &'a PretrainedModel, scenes: &[CaptionedScene], config: LearnConfig, mode: ExecMode) -> Result<Self> {
        Self::with_masks(model, scenes, config, MaskSource::Attention, mode)
    }

    pub fn with_masks(
        model: &'a PretrainedModel,
        scenes: &[CaptionedScene],
        config: LearnConfig,
        mask_source: MaskSource,
        mode: ExecMode,
    ) -> Result<Self> {
        config.validate()?;
        if scenes.is_empty() {
            return Err(Error::Empty("learning dataset".into()));
        }
        if !model.backbone.is_initialized() {
            return Err(Error::Uninitialized);
        }
        let mut parses = Vec::with_capacity(scenes.len());
        let mut selections = Vec::with_capacity(scenes.len());
        for s in scenes {
            let parse = parse_caption(&s.caption.join(" "), &model.lexicon)?;
            let sel = select_learnable(&parse, config.strategy, Some(&s.scene_id))?;
            if sel.learnable_tokens.is_empty() {
                return Err(Error::InvalidArgument(format!("scene {} has no learnable token", s.scene_id)));
            }
            if config.loss.bind_adj_enabled {
                parse.adjective_bindings()?;
            }
            parses.push(parse);
            selections.push(sel);
        }
        let mut table = model.table.clone();
        let mut ids: Vec<TokenId> = selections
            .iter()
            .flat_map(|s| s.learnable_tokens.iter())
            .map(|w| table.vocab.id(w))
            .collect::<Result<BTreeSet<_>>>()?
            .into_iter()
            .collect();
        ids.sort();
        table.mark_learnable(&ids);
        let nouns: Vec<TokenId> = ids
            .iter()
            .copied()
            .filter(|&id| parses.iter().any(|p| p.nouns.iter().any(|n| n == table.vocab.word(id))))
            .collect();
        table.init_learnable(&nouns, config.init, config.seed)?;

        let codec = model.backbone.config.codec;
        let latents = par::try_map(mode, scenes, |s| codec.encode(&s.image))?;
        if let MaskSource::Fixed(m) = &mask_source {
            if m.len() != scenes.len() {
                return Err(Error::Shape(format!("{} fixed masks for {} scenes", m.len(), scenes.len())));
            }
        }
        let optimizer = Optimizer::new(config.optimizer, config.effective_lr(), ids.len() * table.dim);
        let state = RunState {
            step: 0,
            optimizer,
            ema: EmaStore::default(),
            metrics: Vec::new(),
            seeds: StreamSeeds::from_seed(config.seed),
        };
        Ok(Learner {
            model,
            scenes: scenes.to_vec(),
            config,
            table,
            state,
            mode,
            parses,
            selections,
            latents,
            mask_source,
            ids,
        })
    }

    /// Tokens whose rows are optimised, in id order.
    pub fn learnable_ids(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn learnable_words(&self) -> Vec<String> {
        self.ids.iter().map(|&id| self.table.vocab.word(id).to_string()).collect()
    }

    /// Draws the scenes, flips, templates, timesteps and noise of `step`.
    pub fn plan(&self, step: usize) -> BatchPlan {
        let seeds = self.state.seeds;
        let mut data = StreamSeeds::rng(seeds.data, step);
        let mut noise = StreamSeeds::rng(seeds.noise, step);
        let mut tmpl = StreamSeeds::rng(seeds.template, step);
        let n = self.scenes.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut picks = Vec::with_capacity(self.config.batch);
        while picks.len() < self.config.batch {
            order.shuffle(&mut data);
            picks.extend(order.iter().copied().take(self.config.batch - picks.len()));
        }
        let (c, h, w) = self.model.backbone.config.latent_shape();
        let steps = self.model.backbone.schedule.steps;
        let items = picks
            .into_iter()
            .map(|scene| ItemPlan {
                scene,
                flipped: self.config.flip && data.random_bool(0.5),
                prefix: sample_neutral_template_with(&self.model.lexicon, &mut tmpl),
                t: noise.random_range(1..=steps),
                noise: Tensor::randn(c, h, w, &mut noise),
            })
            .collect();
        BatchPlan { items }
    }

    fn noun_tokens(&self, scene: usize) -> Vec<String> {
        let sel = &self.selections[scene];
        self.parses[scene].nouns.iter().filter(|n| sel.contains(n)).cloned().collect()
    }

    /// Regression mask of one item at latent resolution, or `None` for the
    /// plain objective.
    pub fn item_mask(&self, item: &ItemPlan, step: usize) -> Result<Option<Vec<f64>>> {
        let (_, h, w) = self.model.backbone.config.latent_shape();
        let m = match &self.mask_source {
            MaskSource::Fixed(masks) => masks[item.scene].clone(),
            MaskSource::Attention => {
                if !self.config.loss.attnmask_enabled {
                    return Ok(None);
                }
                let scene_id = &self.scenes[item.scene].scene_id;
                let maps: Vec<_> = self
                    .noun_tokens(item.scene)
                    .into_iter()
                    .filter_map(|tok| self.state.ema.get(scene_id, &tok).map(|e| (tok, e.map.clone())))
                    .collect();
                if step < self.config.warmup_steps || maps.is_empty() {
                    vec![1.0; h * w]
                } else {
                    let bins = maps
                        .iter()
                        .map(|(tok, m)| binarize(&normalize_map(m)?, tok, self.config.loss.k))
                        .collect::<Result<Vec<_>>>()?;
                    lat_mask(&union_masks(&bins)?.mask, h, w)?
                }
            }
        };
        Ok(Some(if item.flipped { flip_flat(&m, w) } else { m }))
    }

    fn eval_item(&self, item: &ItemPlan, mask: Option<&[f64]>) -> Result<ItemOut> {
        let bb = &self.model.backbone;
        let scene = &self.scenes[item.scene];
        let sel = &self.selections[item.scene];
        let np = item.prefix.len();
        let words: Vec<String> = item.prefix.iter().chain(&scene.caption).cloned().collect();
        let slots = self.table.slots(&words, |i, w| i >= np && sel.contains(w))?;
        let rows = self.table.encode_tokens(&slots)?;
        let z = if item.flipped { self.latents[item.scene].flip_horizontal() } else { self.latents[item.scene].clone() };
        let zt = forward_diffuse(&z, item.t, &item.noise, &bb.schedule)?;
        let tr = bb.forward(&zt, item.t, &rows)?;
        let l_dm = dm_loss(&item.noise, &tr.output)?;
        let (l_masked, d_out) = match mask {
            Some(m) => (Some(masked_dm_loss(&item.noise, &tr.output, m)?.value), masked_dm_loss_grad(&item.noise, &tr.output, m)?),
            None => (None, dm_loss_grad(&item.noise, &tr.output)?),
        };
        let back = bb.backward(&tr, &d_out, None);
        let grads = slots.iter().zip(back.token_grads).filter(|(s, _)| s.live).map(|(s, g)| (s.token, g)).collect();

        let mut maps = Vec::new();
        for tok in self.noun_tokens(item.scene) {
            let Some(pos) = words.iter().skip(np).position(|w| *w == tok).map(|p| p + np) else { continue };
            let mut acc = Map2::zeros(MASK_RESOLUTION, MASK_RESOLUTION);
            for r in &tr.records {
                for (a, v) in acc.data.iter_mut().zip(record_map(r, pos, MASK_RESOLUTION)?.data) {
                    *a += v / tr.records.len() as f64;
                }
            }
            maps.push((tok, if item.flipped { acc.flip_horizontal() } else { acc }));
        }
        Ok(ItemOut { l_dm, l_masked, grads, maps })
    }

    /// Contrastive term over replicated views of the batch's learnable
    /// nouns; returns (value, per-concept terms, row gradients).
    fn contrastive(&self, plan: &BatchPlan) -> Result<(f64, Vec<f64>, Vec<(TokenId, Vec<f64>)>)> {
        let b = plan.items.len();
        let mut nouns: Vec<String> = Vec::new();
        let mut adjs: BTreeMap<String, String> = BTreeMap::new();
        for it in &plan.items {
            for n in self.noun_tokens(it.scene) {
                if !nouns.contains(&n) {
                    nouns.push(n.clone());
                }
                if self.config.loss.bind_adj_enabled {
                    for (noun, a) in self.parses[it.scene].adjective_bindings()? {
                        if noun == n {
                            adjs.entry(n.clone()).or_insert(a);
                        }
                    }
                }
            }
        }
        let row = |w: &str| -> Result<(TokenId, Vec<f64>)> {
            let id = self.table.vocab.id(w)?;
            Ok((id, self.table.row(id).to_vec()))
        };
        let noun_rows: Vec<(TokenId, Vec<f64>)> = nouns.iter().map(|n| row(n)).collect::<Result<_>>()?;
        let batch = EmbeddingGroupBatch::replicated(&noun_rows.iter().map(|r| r.1.clone()).collect::<Vec<_>>(), b);
        let tau = self.config.loss.tau;
        let excl = self.config.loss.exclusive_denominator;
        let mut grads = Vec::new();
        let sum_views = |views: &[Vec<f64>]| -> Vec<f64> {
            let mut g = vec![0.0; self.table.dim];
            for v in views {
                for (a, x) in g.iter_mut().zip(v) {
                    *a += x;
                }
            }
            g
        };
        if self.config.loss.bind_adj_enabled {
            let m = self.config.loss.adjective_count;
            let adj_rows: Vec<(TokenId, Vec<f64>)> = nouns
                .iter()
                .map(|n| adjs.get(n).ok_or_else(|| Error::InvalidArgument(format!("no adjective bound to `{n}`"))).and_then(|a| row(a)))
                .collect::<Result<_>>()?;
            let abatch = EmbeddingGroupBatch::replicated(&adj_rows.iter().map(|r| r.1.clone()).collect::<Vec<_>>(), m * b);
            let (out, adj_grads) = prompt_cl_adj(&batch, &abatch, tau, m, excl)?;
            for ((id, _), g) in noun_rows.iter().zip(&out.grads) {
                grads.push((*id, sum_views(g)));
            }
            for ((id, _), g) in adj_rows.iter().zip(&adj_grads) {
                grads.push((*id, sum_views(g)));
            }
            Ok((out.value, out.per_concept, grads))
        } else {
            let out = prompt_cl(&batch, tau, excl)?;
            for ((id, _), g) in noun_rows.iter().zip(&out.grads) {
                grads.push((*id, sum_views(g)));
            }
            Ok((out.value, out.per_concept, grads))
        }
    }

    /// Objective and gradients for a fixed plan and fixed masks.
    pub fn evaluate(&self, plan: &BatchPlan, masks: &[Option<Vec<f64>>]) -> Result<StepEval> {
        if plan.items.is_empty() {
            return Err(Error::Empty("batch".into()));
        }
        let pairs: Vec<(&ItemPlan, Option<&[f64]>)> = plan.items.iter().zip(masks).map(|(i, m)| (i, m.as_deref())).collect();
        let outs = par::try_map(self.mode, &pairs, |(it, m)| self.eval_item(it, *m))?;
        let b = outs.len() as f64;
        let mut grads: BTreeMap<TokenId, Vec<f64>> = BTreeMap::new();
        let mut l_dm = 0.0;
        let mut l_masked: Option<f64> = None;
        for o in &outs {
            l_dm += o.l_dm / b;
            if let Some(v) = o.l_masked {
                *l_masked.get_or_insert(0.0) += v / b;
            }
            for (id, g) in &o.grads {
                let acc = grads.entry(*id).or_insert_with(|| vec![0.0; g.len()]);
                for (a, x) in acc.iter_mut().zip(g) {
                    *a += x / b;
                }
            }
        }
        let loss = &self.config.loss;
        let mut parts = LossParts { l_dm, l_attnmask: if loss.attnmask_enabled { l_masked } else { None }, ..Default::default() };
        if loss.promptcl_enabled {
            let (v, per, g) = self.contrastive(plan)?;
            parts.l_promptcl = Some(v);
            parts.per_concept = per;
            for (id, g) in g {
                if !self.table.is_learnable(id) {
                    continue;
                }
                let acc = grads.entry(id).or_insert_with(|| vec![0.0; g.len()]);
                for (a, x) in acc.iter_mut().zip(g) {
                    *a += loss.gamma * x;
                }
            }
        }
        let breakdown = total_loss(&parts, loss)?;
        Ok(StepEval { breakdown, grads, noun_maps: outs.into_iter().map(|o| o.maps).collect() })
    }

    /// Flat vector of the live rows in id order.
    pub fn live_vector(&self) -> Vec<f64> {
        self.ids.iter().flat_map(|&id| self.table.row(id).to_vec()).collect()
    }

    fn set_live_vector(&mut self, v: &[f64]) -> Result<()> {
        let dim = self.table.dim;
        for (k, &id) in self.ids.clone().iter().enumerate() {
            self.table.set_live(id, &v[k * dim..(k + 1) * dim])?;
        }
        Ok(())
    }

    /// One optimisation step.
    pub fn step(&mut self) -> Result<StepMetrics> {
        let step = self.state.step;
        let plan = self.plan(step);
        let masks = plan.items.iter().map(|it| self.item_mask(it, step)).collect::<Result<Vec<_>>>()?;
        let ev = self.evaluate(&plan, &masks)?;
        if !ev.breakdown.total.is_finite() {
            return Err(Error::Diverged { step, value: ev.breakdown.total });
        }
        let dim = self.table.dim;
        let mut g = vec![0.0; self.ids.len() * dim];
        for (k, id) in self.ids.iter().enumerate() {
            if let Some(row) = ev.grads.get(id) {
                g[k * dim..(k + 1) * dim].copy_from_slice(row);
            }
        }
        let mut v = self.live_vector();
        self.state.optimizer.step(&mut v, &g);
        self.set_live_vector(&v)?;
        if self.config.loss.attnmask_enabled {
            for (it, maps) in plan.items.iter().zip(&ev.noun_maps) {
                let id = self.scenes[it.scene].scene_id.clone();
                for (tok, m) in maps {
                    self.state.ema.update(&id, tok, m, self.config.ema_decay);
                }
            }
        }
        let b = &ev.breakdown;
        let metrics = StepMetrics { step, l_dm: b.l_dm, l_attnmask: b.l_attnmask, l_promptcl: b.l_promptcl, total: b.total };
        self.state.metrics.push(metrics.clone());
        self.state.step += 1;
        Ok(metrics)
    }

    /// Union mask currently used for each scene (all ones before warm-up).
    pub fn current_masks(&self) -> Result<Vec<(String, Mask)>> {
        let (_, h, w) = self.model.backbone.config.latent_shape();
        (0..self.scenes.len())
            .map(|i| {
                let item = ItemPlan { scene: i, flipped: false, prefix: vec![], t: 1, noise: Tensor::zeros(1, 1, 1) };
                let m = self.item_mask(&item, self.state.step)?.unwrap_or_else(|| vec![1.0; h * w]);
                Ok((self.scenes[i].scene_id.clone(), Mask { width: w, height: h, data: m.iter().map(|&v| v as u8).collect() }))
            })
            .collect()
    }

    pub fn bundle(&self) -> ConceptBundle {
        let mut adjectives = BTreeSet::new();
        for p in &self.parses {
            if let Ok(b) = p.adjective_bindings() {
                adjectives.extend(b.into_iter().map(|(n, a)| (a, n)).filter(|(_, n)| self.ids.iter().any(|&id| self.table.vocab.word(id) == n)));
            }
        }
        ConceptBundle {
            version: BUNDLE_VERSION,
            tokens: self.learnable_words(),
            vectors: self.ids.iter().map(|&id| self.table.row(id).iter().map(|&v| v as f32).collect()).collect(),
            adjectives: adjectives.into_iter().collect(),
            strategy: self.config.strategy,
            backbone_fingerprint: self.model.backbone.fingerprint(),
            table_fingerprint: self.model.table.frozen_fingerprint(),
            lexicon_hash: crate::digest::json_digest(&self.model.lexicon),
            config_digest: self.config.digest(),
            dim: self.table.dim,
        }
    }

    /// Runs the remaining steps, checking the frozen world afterwards and
    /// writing artifacts into `run` when given.
    pub fn run(&mut self, run: Option<&RunDir>) -> Result<ConceptBundle> {
        let before = self.model.fingerprints();
        let table_before = self.table.frozen_fingerprint();
        let mut metrics_out = run.map(RunDir::metrics_writer).transpose()?;
        while self.state.step < self.config.steps {
            let m = self.step()?;
            if let Some(w) = metrics_out.as_mut() {
                w.push(&m)?;
            }
            let done = self.state.step;
            if let Some(dir) = run {
                if self.config.checkpoint_every > 0 && done % self.config.checkpoint_every == 0 {
                    self.save_checkpoint(dir)?;
                }
                if self.config.snapshot_every > 0 && done % self.config.snapshot_every == 0 && self.config.loss.attnmask_enabled {
                    for (id, mask) in self.current_masks()? {
                        let full = mask.resize_nearest(self.model.backbone.config.image_size, self.model.backbone.config.image_size);
                        write_png_mask(&dir.masks().join(format!("step{done:05}_{id}.png")), &full)?;
                    }
                }
            }
            if done % 100 == 0 {
                log::info!("learn step {done} total {:.5}", m.total);
            }
        }
        if self.model.fingerprints() != before || self.table.frozen_fingerprint() != table_before {
            return Err(Error::FingerprintDrift("frozen backbone or embedding rows changed during learning".into()));
        }
        let bundle = self.bundle();
        if let Some(dir) = run {
            if let Some(w) = metrics_out.as_mut() {
                w.flush()?;
            }
            self.save_checkpoint(dir)?;
            super::bundle::save_bundle(&bundle, dir.file(super::run_dir::BUNDLE_FILE))?;
        }
        Ok(bundle)
    }

    fn save_checkpoint(&self, dir: &RunDir) -> Result<()> {
        #[derive(Serialize)]
        struct Ckpt<'s> {
            step: usize,
            tokens: Vec<String>,
            live: Vec<f64>,
            state: &'s RunState,
        }
        let c = Ckpt { step: self.state.step, tokens: self.learnable_words(), live: self.live_vector(), state: &self.state };
        let p = dir.checkpoints().join(format!("step-{:05}.json", self.state.step));
        std::fs::write(&p, serde_json::to_vec(&c)?).map_err(|e| Error::io(&p, e))
    }
}

/// Learns the concepts of `scenes` with `config`.
pub fn learn(model: &PretrainedModel, scenes: &[CaptionedScene], config: &LearnConfig, run: Option<&RunDir>, mode: ExecMode) -> Result<ConceptBundle> {
    let mut l = Learner::new(model, scenes, config.clone(), mode)?;
    if let Some(dir) = run {
        dir.write_json(super::run_dir::CONFIG_FILE, config)?;
    }
    l.run(run)
}

/// Single-token inversion of `token` on scenes masked to that concept
/// alone: pixels outside its ground-truth mask are replaced by the
/// background colour and the regression loss is restricted to the mask.
pub fn learn_masked_baseline(
    model: &PretrainedModel,
    scenes: &[CaptionedScene],
    token: &str,
    background: [u8; 3],
    config: &LearnConfig,
    mode: ExecMode,
) -> Result<ConceptBundle> {
    let fill = background.map(|c| c as f64 / 255.0);
    let (_, h, w) = model.backbone.config.latent_shape();
    let mut derived = Vec::new();
    let mut masks = Vec::new();
    for s in scenes {
        let Some(i) = s.concepts.iter().position(|c| c.token == token) else { continue };
        let mask = &s.masks[i];
        if mask.is_empty() {
            continue;
        }
        let c = s.concepts[i].clone();
        derived.push(CaptionedScene {
            scene_id: s.scene_id.clone(),
            seed: s.seed,
            image: s.image.masked_with(mask, fill)?,
            caption: vec!["a".into(), c.adjective.clone(), token.to_string()],
            concepts: vec![c],
            masks: vec![mask.clone()],
        });
        masks.push(lat_mask(mask, h, w)?);
    }
    if derived.is_empty() {
        return Err(Error::InvalidArgument(format!("no scene has a mask for `{token}`")));
    }
    let mut cfg = config.clone();
    cfg.strategy = crate::text::Strategy::One;
    cfg.loss.attnmask_enabled = true;
    cfg.loss.promptcl_enabled = false;
    cfg.loss.bind_adj_enabled = false;
    let mut l = Learner::with_masks(model, &derived, cfg, MaskSource::Fixed(masks), mode)?;
    l.run(None)
}

/// One masked-baseline bundle per concept token of the dataset.
pub fn learn_masked_baselines(
    model: &PretrainedModel,
    scenes: &[CaptionedScene],
    background: [u8; 3],
    config: &LearnConfig,
    mode: ExecMode,
) -> Result<Vec<ConceptBundle>> {
    let tokens: BTreeSet<String> = scenes.iter().flat_map(|s| s.concepts.iter().map(|c| c.token.clone())).collect();
    tokens.iter().map(|t| learn_masked_baseline(model, scenes, t, background, config, mode)).collect()
}
