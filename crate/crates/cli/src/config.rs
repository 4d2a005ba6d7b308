use std::path::{Path, PathBuf};

use mcpl::engine::LearnConfig;
use mcpl::ldm::PretrainConfig;
use mcpl::losses::{LossConfig, DEFAULT_K};
use mcpl::optim::OptimizerKind;
use mcpl::text::Strategy;
use serde::{Deserialize, Serialize};

use crate::Failure;

/// File name of the resolved configuration inside a run directory.
pub const RESOLVED_FILE: &str = "resolved_config.json";

/// Every knob of an invocation after defaults and overrides are applied.
/// Options that only some commands read are kept for all of them so one
/// schema covers every run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub dataset: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub strategy: Strategy,
    pub attnmask: bool,
    pub promptcl: bool,
    pub bind_adj: bool,
    pub tau: f64,
    pub gamma: f64,
    pub k: f64,
    pub steps: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub batch: usize,
    pub seed: u64,
}

/// A partial [`RunConfig`]: the shape of config files and of flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Overrides {
    pub command: Option<String>,
    pub dataset: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub strategy: Option<Strategy>,
    pub attnmask: Option<bool>,
    pub promptcl: Option<bool>,
    pub bind_adj: Option<bool>,
    pub tau: Option<f64>,
    pub gamma: Option<f64>,
    pub k: Option<f64>,
    pub steps: Option<usize>,
    pub lr: Option<f64>,
    pub optimizer: Option<OptimizerKind>,
    pub batch: Option<usize>,
    pub seed: Option<u64>,
}

impl Overrides {
    /// Fields set in `self` win over `base`.
    fn over(self, base: Overrides) -> Overrides {
        Overrides {
            command: self.command.or(base.command),
            dataset: self.dataset.or(base.dataset),
            model: self.model.or(base.model),
            out: self.out.or(base.out),
            strategy: self.strategy.or(base.strategy),
            attnmask: self.attnmask.or(base.attnmask),
            promptcl: self.promptcl.or(base.promptcl),
            bind_adj: self.bind_adj.or(base.bind_adj),
            tau: self.tau.or(base.tau),
            gamma: self.gamma.or(base.gamma),
            k: self.k.or(base.k),
            steps: self.steps.or(base.steps),
            lr: self.lr.or(base.lr),
            optimizer: self.optimizer.or(base.optimizer),
            batch: self.batch.or(base.batch),
            seed: self.seed.or(base.seed),
        }
    }
}

pub fn read_overrides(path: &Path) -> Result<Overrides, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

/// Defaults, then `file`, then `flags`. Loss temperature and weight come
/// from the preset selected by the attention-mask flag unless overridden.
pub fn resolve_config(command: &str, file: Option<&Path>, flags: Overrides) -> Result<RunConfig, Failure> {
    let from_file = file.map(read_overrides).transpose()?.unwrap_or_default();
    if let Some(c) = from_file.command.as_deref().filter(|c| *c != command) {
        return Err(Failure::Config(format!("config file is for `{c}`, not `{command}`")));
    }
    let o = flags.over(from_file);
    let attnmask = o.attnmask.unwrap_or(false);
    let promptcl = o.promptcl.unwrap_or(false);
    let bind_adj = o.bind_adj.unwrap_or(false);
    if bind_adj && !promptcl {
        return Err(Failure::Config("bind-adj extends the contrastive term and needs promptcl".into()));
    }
    let preset = LossConfig::preset(attnmask, promptcl, bind_adj);
    let (steps, lr, batch) = if command == "pretrain" {
        let p = PretrainConfig::default();
        (p.steps, p.lr, p.batch)
    } else {
        let l = LearnConfig::default();
        (l.steps, l.base_lr, l.batch)
    };
    let cfg = RunConfig {
        command: command.to_string(),
        dataset: o.dataset,
        model: o.model,
        out: o.out,
        strategy: o.strategy.unwrap_or(Strategy::One),
        attnmask,
        promptcl,
        bind_adj,
        tau: o.tau.unwrap_or(preset.tau),
        gamma: o.gamma.unwrap_or(preset.gamma),
        k: o.k.unwrap_or(DEFAULT_K),
        steps: o.steps.unwrap_or(steps),
        lr: o.lr.unwrap_or(lr),
        optimizer: o.optimizer.unwrap_or(LearnConfig::default().optimizer),
        batch: o.batch.unwrap_or(batch),
        seed: o.seed.unwrap_or(0),
    };
    if command == "learn" {
        cfg.learn_config().validate()?;
    }
    Ok(cfg)
}

impl RunConfig {
    pub fn loss(&self) -> LossConfig {
        LossConfig { tau: self.tau, gamma: self.gamma, k: self.k, ..LossConfig::preset(self.attnmask, self.promptcl, self.bind_adj) }
    }

    pub fn learn_config(&self) -> LearnConfig {
        LearnConfig {
            steps: self.steps,
            base_lr: self.lr,
            optimizer: self.optimizer,
            batch: self.batch,
            strategy: self.strategy,
            loss: self.loss(),
            seed: self.seed,
            ..LearnConfig::default()
        }
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig { steps: self.steps, lr: self.lr, batch: self.batch, seed: self.seed, ..PretrainConfig::default() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, json: &str) -> PathBuf {
        let p = dir.join("c.json");
        std::fs::write(&p, json).unwrap();
        p
    }

    #[test]
    fn defaults_follow_the_mask_flag() {
        let plain = resolve_config("learn", None, Overrides::default()).unwrap();
        assert_eq!((plain.tau, plain.gamma, plain.steps), (0.2, 0.0005, 6100));
        let masked = resolve_config("learn", None, Overrides { attnmask: Some(true), ..Default::default() }).unwrap();
        assert_eq!(plain.optimizer, OptimizerKind::Adam);
        assert_eq!((masked.tau, masked.gamma), (0.3, 0.00075));
    }

    #[test]
    fn flags_beat_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), r#"{"steps": 6100, "tau": 0.5}"#);
        let c = resolve_config("learn", Some(&p), Overrides { steps: Some(1500), ..Default::default() }).unwrap();
        assert_eq!((c.steps, c.tau), (1500, 0.5));
    }

    #[test]
    fn resolution_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let flags = Overrides { promptcl: Some(true), bind_adj: Some(true), seed: Some(4), ..Default::default() };
        let once = resolve_config("learn", None, flags).unwrap();
        let p = write(dir.path(), &serde_json::to_string(&once).unwrap());
        assert_eq!(resolve_config("learn", Some(&p), Overrides::default()).unwrap(), once);
    }

    #[test]
    fn rejects_bad_files_and_conflicts() {
        let dir = tempfile::tempdir().unwrap();
        let unknown = write(dir.path(), r#"{"stepz": 3}"#);
        assert!(matches!(resolve_config("learn", Some(&unknown), Overrides::default()), Err(Failure::Config(_))));
        let typed = write(dir.path(), r#"{"steps": "many"}"#);
        assert!(matches!(resolve_config("learn", Some(&typed), Overrides::default()), Err(Failure::Config(_))));
        let adj = Overrides { bind_adj: Some(true), ..Default::default() };
        assert!(matches!(resolve_config("learn", None, adj), Err(Failure::Config(_))));
        let other = write(dir.path(), r#"{"command": "pretrain"}"#);
        assert!(resolve_config("learn", Some(&other), Overrides::default()).is_err());
    }
}
