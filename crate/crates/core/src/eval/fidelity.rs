use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::encoder::ImageEncoder;
use super::{plot, ReferenceSpace, SpaceKind};
use crate::engine::ConceptBundle;
use crate::error::{Error, Result};
use crate::grid::{Mask, RgbImage};
use crate::losses::cosine_sim;
use crate::par::{self, ExecMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptFidelity {
    pub concept: String,
    /// Mean cosine similarity over every (a, b) pair.
    pub mean: f64,
    pub pairs: usize,
    /// Inputs dropped before pairing (empty crops).
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub method: String,
    pub space: ReferenceSpace,
    pub concepts: Vec<ConceptFidelity>,
}

impl FidelityReport {
    pub fn get(&self, concept: &str) -> Option<&ConceptFidelity> {
        self.concepts.iter().find(|c| c.concept == concept)
    }

    /// Unweighted mean over concepts.
    pub fn mean(&self) -> f64 {
        crate::stats::mean(&self.concepts.iter().map(|c| c.mean).collect::<Vec<_>>())
    }

    /// Writes `<stem>.json` and `<stem>.png` into `dir`; the stem embeds
    /// the method label and the space fingerprint.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let stem = format!("fidelity_{}_{}", super::file_label(&self.method), self.space.tag());
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&json, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(&json, e))?;
        plot::bars(&self.concepts.iter().map(|c| c.mean).collect::<Vec<_>>(), &dir.join(format!("{stem}.png")))?;
        Ok(json)
    }
}

/// Per-concept mean cosine similarity over all cross pairs of `a` × `b`.
/// Concepts present on one side only are skipped.
pub fn pairwise_fidelity(method: &str, space: &ReferenceSpace, a: &[(String, Vec<f64>)], b: &[(String, Vec<f64>)]) -> Result<FidelityReport> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("fidelity needs both sets non-empty".into()));
    }
    let dim = a[0].1.len();
    if let Some((c, v)) = a.iter().chain(b).find(|(_, v)| v.len() != dim) {
        return Err(Error::Shape(format!("`{c}` has dimension {}, expected {dim}", v.len())));
    }
    let (ga, gb) = (by_concept(a), by_concept(b));
    let mut concepts = Vec::new();
    for (c, xs) in &ga {
        let Some(ys) = gb.get(c) else { continue };
        let mut sum = 0.0;
        for x in xs {
            for y in ys {
                sum += cosine_sim(x, y)?;
            }
        }
        let pairs = xs.len() * ys.len();
        concepts.push(ConceptFidelity { concept: c.to_string(), mean: sum / pairs as f64, pairs, excluded: 0 });
    }
    if concepts.is_empty() {
        return Err(Error::InvalidArgument("the two sets share no concept label".into()));
    }
    Ok(FidelityReport { method: method.to_string(), space: space.clone(), concepts })
}

fn by_concept(xs: &[(String, Vec<f64>)]) -> BTreeMap<&str, Vec<&[f64]>> {
    let mut m: BTreeMap<&str, Vec<&[f64]>> = BTreeMap::new();
    for (c, v) in xs {
        m.entry(c.as_str()).or_default().push(v);
    }
    m
}

fn bundle_vectors(bundles: &[ConceptBundle], space: &ReferenceSpace) -> Result<Vec<(String, Vec<f64>)>> {
    let mut out = Vec::new();
    for b in bundles {
        if b.table_fingerprint != space.fingerprint {
            return Err(Error::InvalidArgument(format!(
                "bundle learned against table {}, space is {}",
                &b.table_fingerprint[..b.table_fingerprint.len().min(12)],
                space.tag()
            )));
        }
        for (t, v) in b.tokens.iter().zip(&b.vectors) {
            out.push((t.clone(), v.iter().map(|&x| x as f64).collect()));
        }
    }
    Ok(out)
}

/// Learned token vectors against reference token vectors, in the frozen
/// embedding table's space. Concepts are matched by token.
pub fn prompt_fidelity(method: &str, learned: &[ConceptBundle], references: &[ConceptBundle], space: &ReferenceSpace) -> Result<FidelityReport> {
    if space.kind != SpaceKind::FrozenTextTable {
        return Err(Error::InvalidArgument("prompt fidelity needs the frozen text-table space".into()));
    }
    pairwise_fidelity(method, space, &bundle_vectors(learned, space)?, &bundle_vectors(references, space)?)
}

/// An image region attributed to one concept.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedObject {
    pub concept: String,
    pub image: RgbImage,
    /// Any resolution with the image's aspect ratio.
    pub mask: Mask,
}

impl MaskedObject {
    fn crop(&self) -> Result<Option<RgbImage>> {
        let m = if (self.mask.width, self.mask.height) == (self.image.width, self.image.height) {
            self.mask.clone()
        } else {
            self.mask.resize_nearest(self.image.width, self.image.height)
        };
        if m.is_empty() {
            return Ok(None);
        }
        self.image.masked(&m).map(Some)
    }
}

/// Encoder features of generated crops against ground-truth crops. Empty
/// crops are dropped and counted per concept.
pub fn image_fidelity(
    method: &str,
    generated: &[MaskedObject],
    truth: &[MaskedObject],
    encoder: &ImageEncoder,
    mode: ExecMode,
) -> Result<FidelityReport> {
    let mut excluded: BTreeMap<String, usize> = BTreeMap::new();
    let mut encode = |objs: &[MaskedObject]| -> Result<Vec<(String, Vec<f64>)>> {
        let feats = par::try_map(mode, objs, |o| o.crop()?.map(|img| encoder.encode(&img)).transpose())?;
        let mut out = Vec::new();
        for (o, f) in objs.iter().zip(feats) {
            match f {
                Some(f) => out.push((o.concept.clone(), f)),
                None => *excluded.entry(o.concept.clone()).or_default() += 1,
            }
        }
        Ok(out)
    };
    let (a, b) = (encode(generated)?, encode(truth)?);
    let mut report = pairwise_fidelity(method, encoder.space(), &a, &b)?;
    for c in &mut report.concepts {
        c.excluded = excluded.get(&c.concept).copied().unwrap_or(0);
    }
    Ok(report)
}
