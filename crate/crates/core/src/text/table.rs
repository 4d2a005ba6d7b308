use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::lexicon::CLASS_NOUN;
use super::vocab::{TokenId, Vocabulary};
use crate::digest;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// Copy the generic class-noun row.
    CopyNounClass,
    /// Draw from N(0, s^2) with s the RMS of the frozen rows.
    RandomNormal,
}

/// One prompt position: the token and whether it reads the live row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub token: TokenId,
    pub live: bool,
}

/// Token embedding rows. The frozen rows never change after pre-training;
/// learnable tokens get a live copy that the optimizer updates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub vocab: Vocabulary,
    pub dim: usize,
    frozen: Vec<f64>,
    live: BTreeMap<TokenId, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn random(vocab: Vocabulary, dim: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, scale).expect("finite scale");
        let frozen = (0..vocab.len() * dim).map(|_| normal.sample(&mut rng)).collect();
        EmbeddingTable { vocab, dim, frozen, live: BTreeMap::new() }
    }

    pub fn from_rows(vocab: Vocabulary, dim: usize, frozen: Vec<f64>) -> Result<Self> {
        if frozen.len() != vocab.len() * dim {
            return Err(Error::Shape(format!("{} values for {}x{} table", frozen.len(), vocab.len(), dim)));
        }
        Ok(EmbeddingTable { vocab, dim, frozen, live: BTreeMap::new() })
    }

    pub fn frozen_row(&self, id: TokenId) -> &[f64] {
        &self.frozen[id.index() * self.dim..(id.index() + 1) * self.dim]
    }

    pub fn frozen_rows(&self) -> &[f64] {
        &self.frozen
    }

    /// Mutable frozen rows; only pre-training writes here.
    pub fn frozen_rows_mut(&mut self) -> &mut [f64] {
        &mut self.frozen
    }

    /// Digest of every frozen row, bit-exact.
    pub fn frozen_fingerprint(&self) -> String {
        digest::f64_digest(&self.frozen)
    }

    /// Effective row: live copy when learnable, frozen otherwise.
    pub fn row(&self, id: TokenId) -> &[f64] {
        self.live.get(&id).map(Vec::as_slice).unwrap_or_else(|| self.frozen_row(id))
    }

    pub fn is_learnable(&self, id: TokenId) -> bool {
        self.live.contains_key(&id)
    }

    pub fn learnable_ids(&self) -> Vec<TokenId> {
        self.live.keys().copied().collect()
    }

    /// Marks tokens learnable, seeding their live rows from the frozen ones.
    pub fn mark_learnable(&mut self, ids: &[TokenId]) {
        for &id in ids {
            let row = self.frozen_row(id).to_vec();
            self.live.entry(id).or_insert(row);
        }
    }

    pub fn clear_learnable(&mut self) {
        self.live.clear();
    }

    pub fn live_row(&self, id: TokenId) -> Result<&[f64]> {
        self.live.get(&id).map(Vec::as_slice).ok_or_else(|| Error::NotLearnable(self.vocab.word(id).to_string()))
    }

    pub fn live_row_mut(&mut self, id: TokenId) -> Result<&mut Vec<f64>> {
        let word = self.vocab.word(id).to_string();
        self.live.get_mut(&id).ok_or(Error::NotLearnable(word))
    }

    pub fn set_live(&mut self, id: TokenId, values: &[f64]) -> Result<()> {
        if values.len() != self.dim {
            return Err(Error::Shape(format!("row of {} for dim {}", values.len(), self.dim)));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("live row for `{}`", self.vocab.word(id))));
        }
        self.live_row_mut(id)?.copy_from_slice(values);
        Ok(())
    }

    /// Overwrites the live rows of `ids` per `mode`.
    pub fn init_learnable(&mut self, ids: &[TokenId], mode: InitMode, seed: u64) -> Result<()> {
        for &id in ids {
            if !self.is_learnable(id) {
                return Err(Error::NotLearnable(self.vocab.word(id).to_string()));
            }
        }
        match mode {
            InitMode::CopyNounClass => {
                let class = self.vocab.id(CLASS_NOUN)?;
                let row = self.frozen_row(class).to_vec();
                for &id in ids {
                    self.live.insert(id, row.clone());
                }
            }
            InitMode::RandomNormal => {
                let rms = (self.frozen.iter().map(|v| v * v).sum::<f64>() / self.frozen.len().max(1) as f64).sqrt();
                let normal = Normal::new(0.0, rms.max(1e-6)).expect("finite rms");
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for &id in ids {
                    let row: Vec<f64> = (0..self.dim).map(|_| normal.sample(&mut rng)).collect();
                    self.live.insert(id, row);
                }
            }
        }
        Ok(())
    }

    /// Looks up every slot, returning one row per position.
    pub fn encode_tokens(&self, slots: &[Slot]) -> Result<Vec<Vec<f64>>> {
        slots
            .iter()
            .map(|s| {
                if s.token.index() >= self.vocab.len() {
                    return Err(Error::UnknownToken(format!("#{}", s.token.0)));
                }
                if s.live {
                    self.live_row(s.token).map(<[f64]>::to_vec)
                } else {
                    Ok(self.frozen_row(s.token).to_vec())
                }
            })
            .collect()
    }

    /// Builds slots for `words`; positions flagged in `live` read live rows.
    pub fn slots(&self, words: &[String], live: impl Fn(usize, &str) -> bool) -> Result<Vec<Slot>> {
        words
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let token = self.vocab.id(w)?;
                Ok(Slot { token, live: live(i, w) && self.is_learnable(token) })
            })
            .collect()
    }
}
