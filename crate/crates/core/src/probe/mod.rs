//! Per-token cross-attention turned into masks: aggregation over steps
//! and blocks, min-max normalisation, thresholding, union and export.

mod export;

pub use export::{export_segmentation, SegmentationIndex, INDEX_FILE};

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Map2, Mask};
use crate::ldm::{forward_diffuse, AttentionRecord, DenoiserBackbone, Tensor};

/// Side length of aggregated maps and of masks derived from them.
pub const MASK_RESOLUTION: usize = 16;

/// Decay of the training-time moving average.
pub const DEFAULT_EMA_DECAY: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregationMode {
    MeanOverSteps,
    Ema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationSource {
    pub blocks: Vec<usize>,
    pub timesteps: usize,
    pub mode: AggregationMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedMap {
    pub token: String,
    pub map: Map2,
    pub source: AggregationSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMask {
    pub token: String,
    pub mask: Mask,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskUnion {
    pub mask: Mask,
    pub tokens: Vec<String>,
}

/// One token's map from a record, upsampled to `res` × `res`.
pub fn record_map(record: &AttentionRecord, position: usize, res: usize) -> Result<Map2> {
    if position >= record.tokens {
        return Err(Error::InvalidArgument(format!(
            "token position {position} absent from a record of {} tokens",
            record.tokens
        )));
    }
    let m = Map2 { width: record.w, height: record.h, data: record.token_map(position).to_vec() };
    Ok(m.resize_bilinear(res, res))
}

/// Splits a record stream into forward passes: a pass ends when the block
/// id stops increasing.
fn passes(records: &[AttentionRecord]) -> Vec<&[AttentionRecord]> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..records.len() {
        if records[i].block_id <= records[i - 1].block_id {
            out.push(&records[start..i]);
            start = i;
        }
    }
    if !records.is_empty() {
        out.push(&records[start..]);
    }
    out
}

fn mean_of(records: &[AttentionRecord], position: usize, res: usize) -> Result<Map2> {
    let mut acc = Map2::zeros(res, res);
    for r in records {
        for (a, v) in acc.data.iter_mut().zip(record_map(r, position, res)?.data) {
            *a += v;
        }
    }
    let n = records.len() as f64;
    acc.data.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Aggregates the map of the token at `position`. Mean mode averages over
/// every (step, block) record; EMA mode treats each forward pass as one
/// iteration of a zero-initialised moving average with decay `rho`.
pub fn aggregate_attention(
    records: &[AttentionRecord],
    position: usize,
    token: &str,
    mode: AggregationMode,
    rho: f64,
    res: usize,
) -> Result<AggregatedMap> {
    if records.is_empty() {
        return Err(Error::Empty("attention records".into()));
    }
    let mut blocks: Vec<usize> = records.iter().map(|r| r.block_id).collect();
    blocks.sort_unstable();
    blocks.dedup();
    let mut steps: Vec<usize> = records.iter().map(|r| r.timestep).collect();
    steps.sort_unstable();
    steps.dedup();
    let map = match mode {
        AggregationMode::MeanOverSteps => mean_of(records, position, res)?,
        AggregationMode::Ema => {
            let mut ema = EmaMap::new(res, rho);
            for pass in passes(records) {
                ema.update(&mean_of(pass, position, res)?);
            }
            ema.map
        }
    };
    Ok(AggregatedMap { token: token.to_string(), map, source: AggregationSource { blocks, timesteps: steps.len(), mode } })
}

/// Zero-initialised exponential moving average of a map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmaMap {
    pub rho: f64,
    pub map: Map2,
    pub updates: usize,
}

impl EmaMap {
    pub fn new(res: usize, rho: f64) -> Self {
        EmaMap { rho, map: Map2::zeros(res, res), updates: 0 }
    }

    pub fn update(&mut self, x: &Map2) {
        for (m, v) in self.map.data.iter_mut().zip(&x.data) {
            *m = self.rho * *m + (1.0 - self.rho) * v;
        }
        self.updates += 1;
    }
}

/// Moving averages keyed by scene id, then token.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmaStore {
    pub maps: BTreeMap<String, BTreeMap<String, EmaMap>>,
}

impl EmaStore {
    pub fn update(&mut self, scene: &str, token: &str, x: &Map2, rho: f64) {
        self.maps
            .entry(scene.to_string())
            .or_default()
            .entry(token.to_string())
            .or_insert_with(|| EmaMap::new(x.width, rho))
            .update(x);
    }

    pub fn get(&self, scene: &str, token: &str) -> Option<&EmaMap> {
        self.maps.get(scene)?.get(token)
    }
}

/// Min-max normalisation to [0, 1]; a constant map becomes all zeros.
pub fn normalize_map(map: &Map2) -> Result<Map2> {
    if map.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("attention map".into()));
    }
    let lo = map.data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = map.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let data = if span > 0.0 { map.data.iter().map(|v| (v - lo) / span).collect() } else { vec![0.0; map.data.len()] };
    Ok(Map2 { width: map.width, height: map.height, data })
}

/// `[map > k]` elementwise.
pub fn binarize(map: &Map2, token: &str, k: f64) -> Result<BinaryMask> {
    if !(k > 0.0 && k < 1.0) {
        return Err(Error::InvalidArgument(format!("threshold k must lie in (0, 1), got {k}")));
    }
    let data = map.data.iter().map(|&v| (v > k) as u8).collect();
    Ok(BinaryMask { token: token.to_string(), mask: Mask { width: map.width, height: map.height, data }, k })
}

pub fn union_masks(masks: &[BinaryMask]) -> Result<MaskUnion> {
    let first = masks.first().ok_or_else(|| Error::Empty("mask list".into()))?;
    let (w, h) = (first.mask.width, first.mask.height);
    let mut out = Mask::zeros(w, h);
    for m in masks {
        if (m.mask.width, m.mask.height) != (w, h) {
            return Err(Error::Shape(format!("{}x{} mask among {w}x{h} masks", m.mask.width, m.mask.height)));
        }
        for (o, &v) in out.data.iter_mut().zip(&m.mask.data) {
            *o |= v;
        }
    }
    Ok(MaskUnion { mask: out, tokens: masks.iter().map(|m| m.token.clone()).collect() })
}

/// Timesteps at which inference-time attention is read.
pub fn probe_timesteps(total: usize, count: usize) -> Vec<usize> {
    (1..=count).map(|i| ((i * total) as f64 / (count + 1) as f64).round().max(1.0) as usize).collect()
}

/// Attention records of the clean latent `z`, noised at each of
/// `timesteps` with seeded noise.
pub fn probe_attention(
    backbone: &DenoiserBackbone,
    z: &Tensor,
    tokens: &[Vec<f64>],
    timesteps: &[usize],
    seed: u64,
) -> Result<Vec<AttentionRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for &t in timesteps {
        let eps = Tensor::randn(z.c, z.h, z.w, &mut rng);
        let zt = forward_diffuse(z, t, &eps, &backbone.schedule)?;
        out.extend(backbone.denoise_predict(&zt, t, tokens)?.1);
    }
    Ok(out)
}

/// Mean-aggregated, normalised and thresholded mask for every requested
/// `(position, token)`.
pub fn masks_from_records(records: &[AttentionRecord], tokens: &[(usize, String)], k: f64) -> Result<Vec<BinaryMask>> {
    tokens
        .iter()
        .map(|(pos, name)| {
            let agg = aggregate_attention(records, *pos, name, AggregationMode::MeanOverSteps, DEFAULT_EMA_DECAY, MASK_RESOLUTION)?;
            binarize(&normalize_map(&agg.map)?, name, k)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(block: usize, t: usize, maps: &[f64]) -> AttentionRecord {
        // two tokens on a 2x2 grid; token 1 gets the complement
        let mut map = maps.to_vec();
        map.extend(maps.iter().map(|v| 1.0 - v));
        AttentionRecord { block_id: block, timestep: t, tokens: 2, h: 2, w: 2, map }
    }

    #[test]
    fn single_record_mean_is_its_map() {
        let r = rec(0, 5, &[0.1, 0.2, 0.3, 0.4]);
        let a = aggregate_attention(&[r.clone()], 0, "x", AggregationMode::MeanOverSteps, 0.9, 2).unwrap();
        assert_eq!(a.map.data, vec![0.1, 0.2, 0.3, 0.4]);
        assert!(aggregate_attention(&[r], 2, "x", AggregationMode::MeanOverSteps, 0.9, 2).is_err());
        assert!(aggregate_attention(&[], 0, "x", AggregationMode::MeanOverSteps, 0.9, 2).is_err());
    }

    #[test]
    fn constant_maps_average() {
        let a = rec(0, 1, &[0.2; 4]);
        let b = rec(1, 1, &[0.6; 4]);
        let m = aggregate_attention(&[a, b], 0, "x", AggregationMode::MeanOverSteps, 0.9, 16).unwrap();
        assert!(m.map.data.iter().all(|v| (v - 0.4).abs() < 1e-12));
        assert_eq!(m.map.width, 16);
    }

    #[test]
    fn ema_converges_on_constant_stream() {
        let recs: Vec<_> = (0..70).map(|i| rec(0, i + 1, &[0.7; 4])).collect();
        let m = aggregate_attention(&recs, 0, "x", AggregationMode::Ema, 0.9, 2).unwrap();
        assert!(m.map.data.iter().all(|v| (v - 0.7).abs() < 1e-3));
        assert!(m.map.data.iter().all(|v| (v - 0.7 * (1.0 - 0.9f64.powi(70))).abs() < 1e-12));
    }

    #[test]
    fn normalize_and_binarize() {
        let m = Map2 { width: 2, height: 1, data: vec![0.1, 0.3] };
        let n = normalize_map(&m).unwrap();
        assert_eq!(n.data, vec![0.0, 1.0]);
        assert_eq!(normalize_map(&Map2::filled(3, 3, 0.2)).unwrap().data, vec![0.0; 9]);
        let b = binarize(&Map2 { width: 2, height: 1, data: vec![0.4, 0.6] }, "t", 0.5).unwrap();
        assert_eq!(b.mask.data, vec![0, 1]);
        assert!(binarize(&m, "t", 1.0).is_err());
        assert!(normalize_map(&Map2 { width: 1, height: 1, data: vec![f64::NAN] }).is_err());
    }

    #[test]
    fn union_counts_and_shape_errors() {
        let a = BinaryMask { token: "a".into(), mask: Mask { width: 2, height: 2, data: vec![1, 0, 0, 0] }, k: 0.5 };
        let b = BinaryMask { token: "b".into(), mask: Mask { width: 2, height: 2, data: vec![0, 0, 1, 1] }, k: 0.5 };
        assert_eq!(union_masks(&[a.clone(), b]).unwrap().mask.area(), 3);
        assert_eq!(union_masks(&[a.clone(), a.clone()]).unwrap().mask, a.mask);
        let c = BinaryMask { token: "c".into(), mask: Mask::zeros(3, 3), k: 0.5 };
        assert!(union_masks(&[a, c]).is_err());
    }
}
