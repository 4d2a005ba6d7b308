//! Loss terms of the objective: plain and attention-masked noise
//! regression, the prompt-contrastive InfoNCE term (optionally with
//! adjective binding), and their weighted sum. Every term that depends on
//! learnable embeddings comes with its analytic gradient.

mod contrastive;
mod regression;

pub use contrastive::{cosine_sim, cosine_sim_grad, prompt_cl, prompt_cl_adj, ContrastiveLoss, EmbeddingGroupBatch};
pub use regression::{dm_loss, dm_loss_grad, masked_dm_loss, masked_dm_loss_grad, MaskedLoss};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default threshold applied to normalised attention maps.
pub const DEFAULT_K: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub tau: f64,
    pub gamma: f64,
    pub k: f64,
    pub attnmask_enabled: bool,
    pub promptcl_enabled: bool,
    pub bind_adj_enabled: bool,
    /// Adjective views per noun view in the bound positive group.
    pub adjective_count: usize,
    /// Drop the positive pair from its own InfoNCE denominator.
    pub exclusive_denominator: bool,
}

impl LossConfig {
    /// Temperature and weight presets; the masked objective uses the
    /// larger pair.
    pub fn preset(attnmask: bool, promptcl: bool, bind_adj: bool) -> Self {
        let (tau, gamma) = if attnmask { (0.3, 0.00075) } else { (0.2, 0.0005) };
        LossConfig {
            tau,
            gamma,
            k: DEFAULT_K,
            attnmask_enabled: attnmask,
            promptcl_enabled: promptcl,
            bind_adj_enabled: bind_adj,
            adjective_count: 1,
            exclusive_denominator: false,
        }
    }

    /// Plain regression only.
    pub fn plain() -> Self {
        Self::preset(false, false, false)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::Config(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        if !(self.k > 0.0 && self.k < 1.0) {
            return Err(Error::Config(format!("k must lie in (0, 1), got {}", self.k)));
        }
        if self.bind_adj_enabled && !self.promptcl_enabled {
            return Err(Error::Config("bind-adj requires promptcl".into()));
        }
        if self.bind_adj_enabled && self.adjective_count < 1 {
            return Err(Error::Config("adjective_count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Loss values computed for one step, before weighting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossParts {
    pub l_dm: f64,
    pub l_attnmask: Option<f64>,
    pub l_promptcl: Option<f64>,
    pub per_concept: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_dm: f64,
    pub l_attnmask: Option<f64>,
    pub l_promptcl: f64,
    pub total: f64,
    pub per_concept: Vec<f64>,
}

/// `total = (masked term if enabled, else plain term) + gamma * contrastive`.
pub fn total_loss(parts: &LossParts, config: &LossConfig) -> Result<LossBreakdown> {
    let recon = match (config.attnmask_enabled, parts.l_attnmask) {
        (true, Some(v)) => v,
        (false, _) => parts.l_dm,
        (true, None) => return Err(Error::Config("attnmask enabled but no masked loss computed".into())),
    };
    let cl = match (config.promptcl_enabled, parts.l_promptcl) {
        (true, Some(v)) => v,
        (false, None) => 0.0,
        (true, None) => return Err(Error::Config("promptcl enabled but no contrastive loss computed".into())),
        (false, Some(_)) => return Err(Error::Config("contrastive loss given while promptcl is disabled".into())),
    };
    Ok(LossBreakdown {
        l_dm: parts.l_dm,
        l_attnmask: parts.l_attnmask,
        l_promptcl: cl,
        total: recon + config.gamma * cl,
        per_concept: parts.per_concept.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let off = LossConfig::preset(false, true, false);
        assert_eq!((off.tau, off.gamma), (0.2, 0.0005));
        let on = LossConfig::preset(true, true, true);
        assert_eq!((on.tau, on.gamma), (0.3, 0.00075));
        assert_eq!(on.k, 0.5);
    }

    #[test]
    fn total_identities() {
        let mut cfg = LossConfig::preset(true, true, false);
        let parts = LossParts { l_dm: 0.7, l_attnmask: Some(0.4), l_promptcl: Some(2.0), per_concept: vec![] };
        let b = total_loss(&parts, &cfg).unwrap();
        assert_eq!(b.total, 0.4 + 0.00075 * 2.0);
        cfg.gamma = 0.0;
        assert_eq!(total_loss(&parts, &cfg).unwrap().total, 0.4);
        cfg.attnmask_enabled = false;
        assert_eq!(total_loss(&parts, &cfg).unwrap().total, 0.7);
    }

    #[test]
    fn inconsistent_flags() {
        let cfg = LossConfig::preset(true, false, false);
        let parts = LossParts { l_dm: 0.7, ..Default::default() };
        assert!(total_loss(&parts, &cfg).is_err());
        let cfg = LossConfig::plain();
        let parts = LossParts { l_dm: 0.7, l_promptcl: Some(1.0), ..Default::default() };
        assert!(total_loss(&parts, &cfg).is_err());
        let mut bad = LossConfig::plain();
        bad.bind_adj_enabled = true;
        assert!(bad.validate().is_err());
        bad = LossConfig::plain();
        bad.k = 1.0;
        assert!(bad.validate().is_err());
    }
}
