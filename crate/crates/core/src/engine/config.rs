use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::optim::OptimizerKind;
use crate::probe::DEFAULT_EMA_DECAY;
use crate::text::{InitMode, Strategy};

/// Step count of the full-length profile.
pub const FULL_STEPS: usize = 6100;
/// Step count used by tests and the acceptance suite.
pub const DESK_STEPS: usize = 1500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnConfig {
    pub steps: usize,
    pub base_lr: f64,
    pub device_count: usize,
    pub batch: usize,
    pub strategy: Strategy,
    pub loss: LossConfig,
    pub seed: u64,
    pub ema_decay: f64,
    /// Steps during which the attention mask is all ones.
    pub warmup_steps: usize,
    pub optimizer: OptimizerKind,
    pub init: InitMode,
    pub flip: bool,
    /// Steps between optimizer-state checkpoints in a run directory (0: end only).
    pub checkpoint_every: usize,
    /// Steps between attention-mask snapshots in a run directory (0: never).
    pub snapshot_every: usize,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            steps: FULL_STEPS,
            base_lr: 0.0005,
            device_count: 1,
            batch: 4,
            strategy: Strategy::One,
            loss: LossConfig::plain(),
            seed: 0,
            ema_decay: DEFAULT_EMA_DECAY,
            warmup_steps: 500,
            optimizer: OptimizerKind::Adam,
            init: InitMode::CopyNounClass,
            flip: true,
            checkpoint_every: 500,
            snapshot_every: 500,
        }
    }
}

impl LearnConfig {
    /// Shorter run for tests and benchmarks.
    pub fn desk() -> Self {
        LearnConfig { steps: DESK_STEPS, ..Self::default() }
    }

    /// Base rate scaled by devices and batch size.
    pub fn effective_lr(&self) -> f64 {
        self.base_lr * self.device_count as f64 * self.batch as f64
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.batch == 0 || self.device_count == 0 {
            return Err(Error::Config("batch and device_count must be at least 1".into()));
        }
        if !(self.base_lr > 0.0) || !self.base_lr.is_finite() {
            return Err(Error::Config(format!("base_lr must be positive, got {}", self.base_lr)));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::Config(format!("ema_decay must lie in [0, 1), got {}", self.ema_decay)));
        }
        if self.loss.promptcl_enabled && self.batch < 2 {
            return Err(Error::Config("promptcl needs a batch of at least 2 views".into()));
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        crate::digest::json_digest(self)
    }
}
