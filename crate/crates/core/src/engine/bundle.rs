use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::archive;
use crate::error::{Error, Result};
use crate::text::Strategy;

const MAGIC: &[u8; 8] = b"MCPLBND1";
pub const BUNDLE_VERSION: u32 = 1;
/// Upper bound on the serialized size of a bundle, in bytes.
pub const MAX_BUNDLE_BYTES: usize = 100_000;

/// Learned token vectors and what they were learned against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptBundle {
    pub version: u32,
    pub tokens: Vec<String>,
    #[serde(skip)]
    pub vectors: Vec<Vec<f32>>,
    /// (adjective, noun) pairs from the training captions.
    pub adjectives: Vec<(String, String)>,
    pub strategy: Strategy,
    pub backbone_fingerprint: String,
    pub table_fingerprint: String,
    pub lexicon_hash: String,
    pub config_digest: String,
    pub dim: usize,
}

impl ConceptBundle {
    pub fn vector(&self, token: &str) -> Option<Vec<f64>> {
        let i = self.tokens.iter().position(|t| t == token)?;
        Some(self.vectors[i].iter().map(|&v| v as f64).collect())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.vectors.len() != self.tokens.len() || self.vectors.iter().any(|v| v.len() != self.dim) {
            return Err(Error::Shape("bundle vectors do not match tokens and dim".into()));
        }
        let mut payload = Vec::with_capacity(self.tokens.len() * self.dim * 4);
        for v in self.vectors.iter().flatten() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        archive::encode(MAGIC, self, &payload)
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let (mut b, payload): (ConceptBundle, _) = archive::decode(MAGIC, bytes, origin)?;
        if b.version != BUNDLE_VERSION {
            return Err(Error::Format(format!("{}: bundle version {} (expected {BUNDLE_VERSION})", origin.display(), b.version)));
        }
        if payload.len() != b.tokens.len() * b.dim * 4 {
            return Err(Error::Load { path: origin.to_path_buf(), reason: "payload size does not match header".into() });
        }
        let values: Vec<f32> = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        b.vectors = values.chunks(b.dim.max(1)).map(<[f32]>::to_vec).collect();
        b.vectors.truncate(b.tokens.len());
        Ok(b)
    }
}

/// Writes `bundle`, refusing sizes at or above [`MAX_BUNDLE_BYTES`].
/// Returns the number of bytes written.
pub fn save_bundle(bundle: &ConceptBundle, path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    let bytes = bundle.to_bytes()?;
    if bytes.len() >= MAX_BUNDLE_BYTES {
        return Err(Error::Format(format!("bundle of {} bytes exceeds the {MAX_BUNDLE_BYTES}-byte limit", bytes.len())));
    }
    std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(bytes.len())
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<ConceptBundle> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    ConceptBundle::from_bytes(&bytes, path)
}
