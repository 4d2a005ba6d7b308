use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use bhtsne::tSNE;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::plot;
use crate::error::{Error, Result};

pub const DEFAULT_PERPLEXITY: f64 = 30.0;
pub const TSNE_EPOCHS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub method: String,
    pub labels: Vec<String>,
    pub coords: Vec<[f64; 2]>,
    /// Silhouette of the 2-D projection (Euclidean).
    pub silhouette: Option<f64>,
    /// Silhouette of the raw embeddings under cosine distance.
    pub embedding_silhouette: Option<f64>,
    /// Set when every embedding coincides; both scores are then undefined.
    pub degenerate: bool,
    pub perplexity: f64,
    pub seed: u64,
}

impl ClusterReport {
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let stem = format!("tsne_{}_seed{}", super::file_label(&self.method), self.seed);
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&json, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(&json, e))?;
        let names: Vec<&String> = {
            let mut v: Vec<&String> = self.labels.iter().collect();
            v.sort();
            v.dedup();
            v
        };
        let groups: Vec<usize> = self.labels.iter().map(|l| names.binary_search(&l).unwrap_or(0)).collect();
        plot::scatter(&self.coords, &groups, &dir.join(format!("{stem}.png")))?;
        Ok(json)
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// 1 − cos(a, b); a zero vector is at distance 1 from everything.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.iter().map(|x| x * x).sum::<f64>().sqrt(), b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - (a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)).clamp(-1.0, 1.0)
}

/// Mean silhouette coefficient. Points in singleton clusters score 0.
/// `None` with fewer than two labels or when all distances vanish.
pub fn silhouette<P: AsRef<[f64]>>(points: &[P], labels: &[String], dist: impl Fn(&[f64], &[f64]) -> f64) -> Option<f64> {
    let n = points.len();
    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        let next = ids.len();
        ids.entry(l).or_insert(next);
    }
    if n != labels.len() || ids.len() < 2 {
        return None;
    }
    let cluster: Vec<usize> = labels.iter().map(|l| ids[l.as_str()]).collect();
    let mut any = false;
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; ids.len()];
        let mut counts = vec![0usize; ids.len()];
        for j in 0..n {
            if i != j {
                let d = dist(points[i].as_ref(), points[j].as_ref());
                any |= d > 0.0;
                sums[cluster[j]] += d;
                counts[cluster[j]] += 1;
            }
        }
        let own = cluster[i];
        if counts[own] == 0 {
            continue;
        }
        let a = sums[own] / counts[own] as f64;
        let b = (0..ids.len()).filter(|&c| c != own && counts[c] > 0).map(|c| sums[c] / counts[c] as f64).fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    any.then(|| total / n as f64)
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

/// Exact t-SNE of the unit-normalised embeddings plus silhouettes.
/// Requires at least two labels with two embeddings each.
pub fn project_embeddings(method: &str, points: &[(String, Vec<f64>)], seed: u64) -> Result<ClusterReport> {
    let mut per: BTreeMap<&str, usize> = BTreeMap::new();
    for (l, _) in points {
        *per.entry(l).or_default() += 1;
    }
    if per.len() < 2 || per.values().any(|&c| c < 2) {
        return Err(Error::InvalidArgument(format!("projection needs >= 2 concepts with >= 2 embeddings each, got {per:?}")));
    }
    let dim = points[0].1.len();
    if points.iter().any(|(_, v)| v.len() != dim) {
        return Err(Error::Shape("embeddings differ in dimension".into()));
    }
    let labels: Vec<String> = points.iter().map(|(l, _)| l.clone()).collect();
    let n = points.len();
    let perplexity = DEFAULT_PERPLEXITY.min(((n - 1) / 3).max(1) as f64);
    let degenerate = points.iter().all(|(_, v)| v == &points[0].1);
    if degenerate {
        return Ok(ClusterReport {
            method: method.to_string(),
            labels,
            coords: vec![[0.0; 2]; n],
            silhouette: None,
            embedding_silhouette: None,
            degenerate,
            perplexity,
            seed,
        });
    }
    let vecs: Vec<Vec<f64>> = points.iter().map(|(_, v)| unit(v)).collect();
    let embedding_silhouette = silhouette(&vecs, &labels, cosine_distance);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1e-4).expect("valid normal");
    let init: Vec<f64> = (0..2 * n).map(|_| normal.sample(&mut rng)).collect();
    let refs: Vec<&[f64]> = vecs.iter().map(Vec::as_slice).collect();
    // One worker keeps the library's parallel reductions in a fixed order.
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let flat: Vec<f64> = pool.install(|| {
        let mut t: tSNE<f64, &[f64]> = tSNE::new(&refs);
        t.perplexity(perplexity).epochs(TSNE_EPOCHS).initial_embedding(init).exact(|a, b| {
            let d = euclidean(a, b);
            d * d
        });
        t.embedding()
    });
    let coords: Vec<[f64; 2]> = flat.chunks(2).map(|c| [c[0], c[1]]).collect();
    let silhouette = silhouette(&coords, &labels, euclidean);
    Ok(ClusterReport { method: method.to_string(), labels, coords, silhouette, embedding_silhouette, degenerate, perplexity, seed })
}
