use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mcpl::engine::{
    learn, learn_masked_baselines, load_bundle, save_bundle, segment_scene, ConceptBundle, RunDir, SegmentConfig,
};
use mcpl::eval::{
    generated_objects, image_fidelity, mask_iou, project_embeddings, prompt_fidelity, scaling_report, truth_objects,
    FidelityReport, ImageEncoder, ReferenceSpace, SpaceKind,
};
use mcpl::ldm::{report, sample_image, BackboneConfig, PretrainSession, PretrainedModel};
use mcpl::optim::OptimizerKind;
use mcpl::par::ExecMode;
use mcpl::probe::{export_segmentation, masks_from_records, AggregationMode};
use mcpl::scene::{
    preset_concepts, render_dataset, world_scenes, write_png_rgb, CaptionedScene, DatasetManifest, GenerationConfig, WorldConfig,
};
use mcpl::text::{Lexicon, Strategy};
use serde_json::json;

use crate::config::{resolve_config, Overrides, RunConfig, RESOLVED_FILE};
use crate::Failure;

/// Environment variable naming the default root for run directories.
pub const RUN_ROOT_VAR: &str = "MCPL_RUN_ROOT";
pub const MODEL_FILE: &str = "model.mcpl";
pub const SESSION_FILE: &str = "session.mcpl";

#[derive(Debug, Parser)]
#[command(name = "mcpl", version, about = "Learn several concept embeddings from captioned images against a frozen denoiser")]
pub struct Cli {
    /// Run data-parallel loops in order.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic multi-concept dataset.
    GenData(GenDataArgs),
    /// Pre-train the denoiser and embedding table on random scenes.
    Pretrain(PretrainArgs),
    /// Learn concept embeddings for a dataset.
    Learn(LearnArgs),
    /// Export attention masks of a learned bundle on a dataset.
    Segment(SegmentArgs),
    /// Sample images from a prompt using a learned bundle.
    Sample(SampleArgs),
    /// Fidelity and cluster reports for learned bundles.
    Eval(EvalArgs),
    /// Collect reports into summary tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; must not exist yet.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: Common,
    /// two-concept, three-concept, four-concept or five-concept.
    #[arg(long, default_value = "two-concept")]
    pub preset: String,
    /// Defaults to the preset's pool size.
    #[arg(long)]
    pub concepts_per_image: Option<usize>,
    #[arg(long, default_value_t = 40)]
    pub pairs: usize,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Number of random training scenes.
    #[arg(long, default_value_t = 2000)]
    pub world_scenes: usize,
    /// Continue from a saved session instead of starting fresh.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// one, all or diverse.
    #[arg(long)]
    pub strategy: Option<Strategy>,
    #[arg(long)]
    pub attnmask: bool,
    #[arg(long)]
    pub promptcl: bool,
    #[arg(long)]
    pub bind_adj: bool,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Base learning rate before device and batch scaling.
    #[arg(long)]
    pub lr: Option<f64>,
    /// adam, sgd or momentum.
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Learn one masked single-concept bundle per concept instead.
    #[arg(long)]
    pub masked_baseline: bool,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub k: Option<f64>,
    /// Noised copies of each image the attention is averaged over.
    #[arg(long, default_value_t = 8)]
    pub timesteps: usize,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub bundle: PathBuf,
    /// Caption using the bundle's tokens, e.g. "a brown <n1> and a green <n2>".
    #[arg(long)]
    pub prompt: String,
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long)]
    pub k: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: PathBuf,
    /// Label used in report file names.
    #[arg(long)]
    pub method: String,
    #[arg(long, num_args = 1.., required = true)]
    pub learned: Vec<PathBuf>,
    /// Masked single-concept bundles.
    #[arg(long, num_args = 1.., required = true)]
    pub references: Vec<PathBuf>,
    /// Dataset for image fidelity; skipped when absent.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Samples per learned bundle for image fidelity.
    #[arg(long, default_value_t = 2)]
    pub samples: usize,
    #[arg(long, default_value_t = 50)]
    pub sample_steps: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directories holding eval outputs.
    #[arg(long, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// `N=DIR`: image-fidelity reports under DIR come from N-concept images.
    #[arg(long = "group")]
    pub groups: Vec<String>,
}

pub fn run(cli: Cli) -> Result<PathBuf, Failure> {
    let mode = if cli.sequential { ExecMode::Sequential } else { ExecMode::Parallel };
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Pretrain(a) => pretrain(a, mode),
        Command::Learn(a) => learn_cmd(a, mode),
        Command::Segment(a) => segment(a),
        Command::Sample(a) => sample(a, mode),
        Command::Eval(a) => eval(a, mode),
        Command::Report(a) => report_cmd(a),
    }
}

fn common_overrides(c: &Common) -> Overrides {
    Overrides { out: c.out.clone(), seed: c.seed, ..Default::default() }
}

/// Creates the run directory (explicit or numbered under the run root) and
/// persists the resolved config into it.
fn open_run(cfg: &mut RunConfig) -> Result<RunDir, Failure> {
    let run = match &cfg.out {
        Some(p) => {
            if p.exists() {
                return Err(Failure::Config(format!("{} already exists; run directories are never reused", p.display())));
            }
            RunDir::create(p)?
        }
        None => {
            let root = std::env::var_os(RUN_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
            RunDir::create_unique(root, &cfg.command)?
        }
    };
    cfg.out = Some(run.path.clone());
    run.write_json(RESOLVED_FILE, cfg)?;
    Ok(run)
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, Failure> {
    p.as_deref().ok_or_else(|| Failure::Config(format!("--{what} is required (flag or config file)")))
}

fn load_scenes(dataset: &Path) -> Result<Vec<CaptionedScene>, Failure> {
    Ok(DatasetManifest::load(dataset)?.load_all()?)
}

fn gen_data(a: GenDataArgs) -> Result<PathBuf, Failure> {
    let concepts = preset_concepts(&a.preset).ok_or_else(|| Failure::Config(format!("unknown preset `{}`", a.preset)))?;
    let mut cfg = resolve_config("gen-data", a.common.config.as_deref(), common_overrides(&a.common))?;
    let out = required(&cfg.out, "out")?.to_path_buf();
    if out.exists() {
        return Err(Failure::Config(format!("{} already exists; datasets are never overwritten", out.display())));
    }
    let per = a.concepts_per_image.unwrap_or(concepts.len());
    let gen = GenerationConfig::new(concepts, per, a.pairs, cfg.seed);
    gen.validate()?;
    render_dataset(&gen, &out)?;
    cfg.dataset = Some(out.clone());
    std::fs::write(out.join(RESOLVED_FILE), serde_json::to_vec_pretty(&cfg).map_err(mcpl::Error::from)?)
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    std::fs::write(out.join("generation.json"), serde_json::to_vec_pretty(&gen).map_err(mcpl::Error::from)?)
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    Ok(out)
}

fn pretrain(a: PretrainArgs, mode: ExecMode) -> Result<PathBuf, Failure> {
    let flags = Overrides { steps: a.steps, lr: a.lr, batch: a.batch, ..common_overrides(&a.common) };
    let mut cfg = resolve_config("pretrain", a.common.config.as_deref(), flags)?;
    let mut session = match &a.resume {
        Some(p) => PretrainSession::load(p)?,
        None => PretrainSession::new(PretrainedModel::new(BackboneConfig::default(), Lexicon::default(), cfg.seed)?, cfg.pretrain_config())?,
    };
    let world = world_scenes(&WorldConfig { scenes: a.world_scenes, seed: cfg.seed, ..WorldConfig::default() }, mode)?;
    let run = open_run(&mut cfg)?;
    session.run(&world, cfg.steps, mode)?;
    session.save(run.file(SESSION_FILE))?;
    session.save_model(run.file(MODEL_FILE))?;
    let mut losses = run.metrics_writer()?;
    for (step, loss) in session.losses.iter().enumerate() {
        losses.push(&json!({ "step": step, "loss": loss }))?;
    }
    losses.flush()?;
    run.write_json("pretrain_report.json", &report(&session))?;
    Ok(run.path)
}

fn learn_cmd(a: LearnArgs, mode: ExecMode) -> Result<PathBuf, Failure> {
    let flags = Overrides {
        dataset: a.dataset,
        model: a.model,
        strategy: a.strategy,
        attnmask: a.attnmask.then_some(true),
        promptcl: a.promptcl.then_some(true),
        bind_adj: a.bind_adj.then_some(true),
        tau: a.tau,
        gamma: a.gamma,
        k: a.k,
        steps: a.steps,
        lr: a.lr,
        optimizer: a.optimizer,
        batch: a.batch,
        ..common_overrides(&a.common)
    };
    let mut cfg = resolve_config("learn", a.common.config.as_deref(), flags)?;
    let scenes = load_scenes(required(&cfg.dataset, "dataset")?)?;
    let model = PretrainedModel::load(required(&cfg.model, "model")?)?;
    let run = open_run(&mut cfg)?;
    let lc = cfg.learn_config();
    if a.masked_baseline {
        run.write_json(mcpl::engine::CONFIG_FILE, &lc)?;
        let bg = DatasetManifest::load(required(&cfg.dataset, "dataset")?)?.config.background;
        for b in learn_masked_baselines(&model, &scenes, bg, &lc, mode)? {
            save_bundle(&b, run.file(&format!("baseline_{}.mcpl", stem(&b.tokens[0]))))?;
        }
    } else {
        learn(&model, &scenes, &lc, Some(&run), mode)?;
    }
    Ok(run.path)
}

fn stem(token: &str) -> String {
    token.chars().filter(|c| c.is_ascii_alphanumeric()).collect()
}

fn segment(a: SegmentArgs) -> Result<PathBuf, Failure> {
    let flags = Overrides { dataset: Some(a.dataset), model: Some(a.model), k: a.k, ..common_overrides(&a.common) };
    let mut cfg = resolve_config("segment", a.common.config.as_deref(), flags)?;
    let scenes = load_scenes(required(&cfg.dataset, "dataset")?)?;
    let model = PretrainedModel::load(required(&cfg.model, "model")?)?;
    let bundle = load_bundle(&a.bundle)?;
    let run = open_run(&mut cfg)?;
    let seg = SegmentConfig { timesteps: a.timesteps, k: cfg.k, seed: cfg.seed };
    let mut ious: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    let mut all = Vec::new();
    for s in &scenes {
        let masks = segment_scene(&model, &bundle, s, &seg)?;
        export_segmentation(&masks, s, AggregationMode::MeanOverSteps, &run.masks().join(&s.scene_id))?;
        for m in &masks {
            if let Some(gt) = s.mask_for_token(&m.token) {
                let v = mask_iou(&m.mask, gt)?;
                all.push(v);
                ious.entry(s.scene_id.clone()).or_default().insert(m.token.clone(), v);
            }
        }
    }
    run.write_json("segmentation_iou.json", &json!({ "mean_iou": mcpl::stats::mean(&all), "per_scene": ious }))?;
    Ok(run.path)
}

fn sample(a: SampleArgs, mode: ExecMode) -> Result<PathBuf, Failure> {
    let flags = Overrides { model: Some(a.model), k: a.k, ..common_overrides(&a.common) };
    let mut cfg = resolve_config("sample", a.common.config.as_deref(), flags)?;
    let model = PretrainedModel::load(required(&cfg.model, "model")?)?;
    let bundle = load_bundle(&a.bundle)?;
    let caption: Vec<String> = a.prompt.split_whitespace().map(str::to_string).collect();
    if caption.is_empty() {
        return Err(Failure::Config("empty prompt".into()));
    }
    let words = mcpl::engine::inference_prompt(&caption);
    let rows = mcpl::engine::prompt_rows(&model, &bundle, &words)?;
    let tokens: Vec<(usize, String)> =
        words.iter().enumerate().filter(|(_, w)| bundle.tokens.contains(w)).map(|(i, w)| (i, w.clone())).collect();
    let run = open_run(&mut cfg)?;
    let seeds: Vec<u64> = (0..a.count as u64).map(|i| cfg.seed + i).collect();
    let samples = mcpl::par::try_map(mode, &seeds, |&seed| sample_image(&model.backbone, &rows, a.steps, seed, !tokens.is_empty()))?;
    for (seed, s) in seeds.iter().zip(&samples) {
        let scene = CaptionedScene {
            scene_id: format!("sample{seed:04}"),
            seed: *seed,
            image: s.image.clone(),
            caption: caption.clone(),
            concepts: vec![],
            masks: vec![],
        };
        write_png_rgb(&run.file(&format!("{}.png", scene.scene_id)), &s.image)?;
        if !tokens.is_empty() {
            let masks = masks_from_records(&s.trace, &tokens, cfg.k)?;
            export_segmentation(&masks, &scene, AggregationMode::MeanOverSteps, &run.masks().join(&scene.scene_id))?;
        }
    }
    Ok(run.path)
}

fn load_bundles(paths: &[PathBuf]) -> Result<Vec<ConceptBundle>, Failure> {
    paths.iter().map(|p| load_bundle(p).map_err(Failure::from)).collect()
}

fn eval(a: EvalArgs, mode: ExecMode) -> Result<PathBuf, Failure> {
    let flags = Overrides { model: Some(a.model), dataset: a.dataset, ..common_overrides(&a.common) };
    let mut cfg = resolve_config("eval", a.common.config.as_deref(), flags)?;
    let model = PretrainedModel::load(required(&cfg.model, "model")?)?;
    let learned = load_bundles(&a.learned)?;
    let references = load_bundles(&a.references)?;
    let scenes = cfg.dataset.as_deref().map(load_scenes).transpose()?;
    let run = open_run(&mut cfg)?;
    let reports = run.file("reports");

    let text = ReferenceSpace::text_table(&model);
    let pf = prompt_fidelity(&a.method, &learned, &references, &text)?;
    pf.write(&reports)?;
    let mut summary = json!({ "method": a.method, "prompt_fidelity": pf });

    let points: Vec<(String, Vec<f64>)> = learned
        .iter()
        .flat_map(|b| b.tokens.iter().filter(|t| mcpl::text::is_pseudo_token(t)).filter_map(|t| b.vector(t).map(|v| (t.clone(), v))))
        .collect();
    match project_embeddings(&a.method, &points, cfg.seed) {
        Ok(c) => {
            c.write(&reports)?;
            summary["cluster"] = serde_json::to_value(&c).map_err(mcpl::Error::from)?;
        }
        Err(e) => log::warn!("projection skipped: {e}"),
    }

    if let Some(scenes) = scenes {
        let encoder = ImageEncoder::new(&model)?;
        let seeds: Vec<u64> = (0..a.samples as u64).map(|i| cfg.seed * 1000 + i).collect();
        let caption = &scenes.first().ok_or_else(|| Failure::Config("dataset is empty".into()))?.caption;
        let mut generated = Vec::new();
        for b in &learned {
            generated.extend(generated_objects(&model, b, caption, &seeds, a.sample_steps, cfg.k, mode)?);
        }
        let imf = image_fidelity(&a.method, &generated, &truth_objects(&scenes), &encoder, mode)?;
        imf.write(&reports)?;
        summary["image_fidelity"] = serde_json::to_value(&imf).map_err(mcpl::Error::from)?;
    }
    run.write_json("eval_summary.json", &summary)?;
    Ok(run.path)
}

fn fidelity_reports(dir: &Path) -> Result<Vec<FidelityReport>, Failure> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = std::fs::read_dir(&d).map_err(|e| Failure::Runtime(format!("{}: {e}", d.display())))?;
        let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        for p in paths {
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("fidelity_") && n.ends_with(".json")) {
                let text = std::fs::read_to_string(&p).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?;
                out.push(serde_json::from_str(&text).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?);
            }
        }
    }
    Ok(out)
}

fn report_cmd(a: ReportArgs) -> Result<PathBuf, Failure> {
    let mut groups: BTreeMap<usize, PathBuf> = BTreeMap::new();
    for g in &a.groups {
        let (n, dir) = g.split_once('=').ok_or_else(|| Failure::Config(format!("--group expects N=DIR, got `{g}`")))?;
        let n: usize = n.parse().map_err(|_| Failure::Config(format!("bad group size `{n}`")))?;
        groups.insert(n, PathBuf::from(dir));
    }
    if a.inputs.is_empty() && groups.is_empty() {
        return Err(Failure::Config("report needs --inputs or --group".into()));
    }
    let mut cfg = resolve_config("report", a.common.config.as_deref(), common_overrides(&a.common))?;
    let mut reports = Vec::new();
    for d in &a.inputs {
        reports.extend(fidelity_reports(d)?);
    }
    let mut scaling = BTreeMap::new();
    for (n, d) in &groups {
        let means: Vec<f64> =
            fidelity_reports(d)?.iter().filter(|r| r.space.kind == SpaceKind::FrozenImageEncoder).map(FidelityReport::mean).collect();
        scaling.insert(*n, means);
    }
    let run = open_run(&mut cfg)?;
    let mut table = String::from("| method | space | concept | mean | pairs | excluded |\n|---|---|---|---|---|---|\n");
    for r in &reports {
        for c in &r.concepts {
            table.push_str(&format!("| {} | {} | {} | {:.4} | {} | {} |\n", r.method, r.space.tag(), c.concept, c.mean, c.pairs, c.excluded));
        }
    }
    let path = run.file("summary.md");
    std::fs::write(&path, &table).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    run.write_json("summary.json", &reports)?;
    if !scaling.is_empty() {
        let expected: Vec<usize> = groups.keys().copied().collect();
        scaling_report("image-fidelity", &scaling, &expected)?.write(run.path.join("scaling"))?;
    }
    Ok(run.path)
}
