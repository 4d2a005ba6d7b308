//! The optimisation loop: batches of scenes under random templates,
//! timesteps and noise; the composite objective; updates confined to the
//! selected embedding rows; the masked single-concept baseline; bundles and
//! run directories.

mod bundle;
mod config;
mod infer;
mod learner;
mod run_dir;

pub use bundle::{load_bundle, save_bundle, ConceptBundle, BUNDLE_VERSION, MAX_BUNDLE_BYTES};
pub use config::{LearnConfig, DESK_STEPS, FULL_STEPS};
pub use infer::{check_compatible, inference_prompt, prompt_rows, segment_scene, SegmentConfig, INFERENCE_PREFIX};
pub use learner::{
    learn, learn_masked_baseline, learn_masked_baselines, BatchPlan, ItemPlan, Learner, MaskSource, RunState, StepEval,
    StepMetrics, StreamSeeds,
};
pub use run_dir::{JsonLines, RunDir, BUNDLE_FILE, CONFIG_FILE, METRICS_FILE};
