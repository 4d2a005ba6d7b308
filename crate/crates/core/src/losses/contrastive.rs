use crate::error::{Error, Result};
use crate::ldm::linalg::dot;

/// Views of each concept's embedding: `views[concept][view]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingGroupBatch {
    pub views: Vec<Vec<Vec<f64>>>,
}

impl EmbeddingGroupBatch {
    pub fn new(views: Vec<Vec<Vec<f64>>>) -> Self {
        EmbeddingGroupBatch { views }
    }

    /// `b` identical views of every vector in `vectors`.
    pub fn replicated(vectors: &[Vec<f64>], b: usize) -> Self {
        EmbeddingGroupBatch { views: vectors.iter().map(|v| vec![v.clone(); b]).collect() }
    }

    pub fn concepts(&self) -> usize {
        self.views.len()
    }

    fn dim(&self) -> Option<usize> {
        self.views.iter().flatten().next().map(Vec::len)
    }

    fn check_dims(&self, dim: usize) -> Result<()> {
        if self.views.iter().flatten().any(|v| v.len() != dim) {
            return Err(Error::Shape("embedding views of different dimensions".into()));
        }
        Ok(())
    }
}

/// Value, per-concept share and gradient with respect to every view.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveLoss {
    pub value: f64,
    pub per_concept: Vec<f64>,
    pub grads: Vec<Vec<Vec<f64>>>,
}

pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    let (na, nb) = (dot(a, a).sqrt(), dot(b, b).sqrt());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidArgument("cosine similarity of a zero vector".into()));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// d cos(a, b) / d a.
pub fn cosine_sim_grad(a: &[f64], b: &[f64]) -> Vec<f64> {
    let (na, nb) = (dot(a, a).sqrt(), dot(b, b).sqrt());
    let c = dot(a, b) / (na * nb);
    a.iter().zip(b).map(|(x, y)| y / (na * nb) - c * x / (na * na)).collect()
}

/// InfoNCE over labelled views. For anchor `i` and each positive `j`
/// (same label, `j != i`):
/// `-log(exp(s_ij/tau) / sum_{k != i} exp(s_ik/tau))`, averaged over the
/// anchor's positives, then over the anchors of a group and over groups.
/// With `exclusive` the positive `j` is left out of its own denominator.
fn info_nce(groups: &[Vec<&[f64]>], tau: f64, exclusive: bool) -> Result<ContrastiveLoss> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    if groups.is_empty() {
        return Err(Error::Empty("contrastive batch".into()));
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(Error::InvalidArgument(format!("a concept group has {} view(s); at least 2 are needed", g.len())));
    }
    let flat: Vec<(usize, &[f64])> = groups.iter().enumerate().flat_map(|(g, vs)| vs.iter().map(move |v| (g, *v))).collect();
    let n = flat.len();
    let mut sim = vec![0.0; n * n];
    for a in 0..n {
        for b in a..n {
            let s = cosine_sim(flat[a].1, flat[b].1)?;
            sim[a * n + b] = s;
            sim[b * n + a] = s;
        }
    }
    let ngroups = groups.len() as f64;
    let mut value = 0.0;
    let mut per_concept = vec![0.0; groups.len()];
    // dL/ds for each ordered (anchor, other) pair
    let mut dsim = vec![0.0; n * n];
    for i in 0..n {
        let gi = flat[i].0;
        let weight = 1.0 / (ngroups * groups[gi].len() as f64);
        let positives: Vec<usize> = (0..n).filter(|&j| j != i && flat[j].0 == gi).collect();
        let pw = weight / positives.len() as f64;
        let logits: Vec<f64> = (0..n).map(|k| sim[i * n + k] / tau).collect();
        let mx = (0..n).filter(|&k| k != i).map(|k| logits[k]).fold(f64::NEG_INFINITY, f64::max);
        let full: f64 = (0..n).filter(|&k| k != i).map(|k| (logits[k] - mx).exp()).sum();
        for &j in &positives {
            let denom = if exclusive { full - (logits[j] - mx).exp() } else { full };
            if denom <= 0.0 {
                return Err(Error::InvalidArgument("exclusive denominator is empty (single concept)".into()));
            }
            let l = -(logits[j] - mx) + denom.ln();
            value += pw * l;
            per_concept[gi] += pw * l;
            dsim[i * n + j] -= pw / tau;
            for k in 0..n {
                if k == i || (exclusive && k == j) {
                    continue;
                }
                dsim[i * n + k] += pw * (logits[k] - mx).exp() / denom / tau;
            }
        }
    }
    let mut flat_grads = vec![vec![0.0; flat[0].1.len()]; n];
    for a in 0..n {
        for b in 0..n {
            let d = dsim[a * n + b];
            if d == 0.0 {
                continue;
            }
            let (va, vb) = (flat[a].1, flat[b].1);
            for (g, x) in flat_grads[a].iter_mut().zip(cosine_sim_grad(va, vb)) {
                *g += d * x;
            }
            for (g, x) in flat_grads[b].iter_mut().zip(cosine_sim_grad(vb, va)) {
                *g += d * x;
            }
        }
    }
    let mut it = flat_grads.into_iter();
    let grads = groups.iter().map(|g| (0..g.len()).map(|_| it.next().expect("one gradient per view")).collect()).collect();
    Ok(ContrastiveLoss { value, per_concept, grads })
}

/// Contrastive loss over the concept groups of `batch`.
pub fn prompt_cl(batch: &EmbeddingGroupBatch, tau: f64, exclusive: bool) -> Result<ContrastiveLoss> {
    let dim = batch.dim().ok_or_else(|| Error::Empty("contrastive batch".into()))?;
    batch.check_dims(dim)?;
    let groups: Vec<Vec<&[f64]>> = batch.views.iter().map(|g| g.iter().map(Vec::as_slice).collect()).collect();
    info_nce(&groups, tau, exclusive)
}

/// Contrastive loss whose positive group for concept `n` is its noun
/// views together with `m` adjective views per noun view. Gradients are
/// returned as `(noun grads, adjective grads)` in the input layout.
pub fn prompt_cl_adj(
    nouns: &EmbeddingGroupBatch,
    adjectives: &EmbeddingGroupBatch,
    tau: f64,
    m: usize,
    exclusive: bool,
) -> Result<(ContrastiveLoss, Vec<Vec<Vec<f64>>>)> {
    if m < 1 {
        return Err(Error::InvalidArgument("adjective count must be at least 1".into()));
    }
    if nouns.concepts() != adjectives.concepts() {
        return Err(Error::InvalidArgument(format!(
            "{} noun groups but {} adjective groups",
            nouns.concepts(),
            adjectives.concepts()
        )));
    }
    for (c, (nv, av)) in nouns.views.iter().zip(&adjectives.views).enumerate() {
        if av.len() != m * nv.len() {
            return Err(Error::InvalidArgument(format!(
                "concept {c}: {} adjective views for {} noun views and M = {m}",
                av.len(),
                nv.len()
            )));
        }
    }
    let dim = nouns.dim().ok_or_else(|| Error::Empty("contrastive batch".into()))?;
    nouns.check_dims(dim)?;
    adjectives.check_dims(dim)?;
    let groups: Vec<Vec<&[f64]>> = nouns
        .views
        .iter()
        .zip(&adjectives.views)
        .map(|(nv, av)| nv.iter().chain(av).map(Vec::as_slice).collect())
        .collect();
    let mut out = info_nce(&groups, tau, exclusive)?;
    let mut adj_grads = Vec::with_capacity(groups.len());
    for (g, nv) in out.grads.iter_mut().zip(&nouns.views) {
        adj_grads.push(g.split_off(nv.len()));
    }
    Ok((out, adj_grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_cases() {
        let v = [1.0, 2.0, -1.0];
        assert!((cosine_sim(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert!((cosine_sim(&v, &[-1.0, -2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!(cosine_sim(&v, &[0.0; 3]).is_err());
    }

    #[test]
    fn single_concept_pair_is_zero() {
        let b = EmbeddingGroupBatch::new(vec![vec![vec![1.0, 0.3], vec![-0.2, 0.9]]]);
        assert!(prompt_cl(&b, 0.2, false).unwrap().value.abs() < 1e-15);
        assert!(prompt_cl(&b, 0.2, true).is_err());
    }

    #[test]
    fn hand_computed_bind_adj() {
        // N=2, B=2, M=1 in 3-d: both concepts replicated, adjectives
        // orthogonal to the other concept.
        let u = vec![1.0, 0.0, 0.0];
        let w = vec![0.0, 1.0, 0.0];
        let au = vec![1.0, 0.0, 1.0];
        let aw = vec![0.0, 1.0, 1.0];
        let nouns = EmbeddingGroupBatch::replicated(&[u, w], 2);
        let adjs = EmbeddingGroupBatch::replicated(&[au, aw], 2);
        let (l, _) = prompt_cl_adj(&nouns, &adjs, 1.0, 1, false).unwrap();
        // similarities: noun-noun same 1, noun-adj same 1/sqrt2, adj-adj same 1,
        // cross noun-noun 0, noun-cross adj 0, adj-cross adj 1/2
        let r = 1.0 / 2f64.sqrt();
        let e = f64::exp;
        // noun anchor: others = 1 same noun, 2 own adj, 2 cross nouns, 2 cross adjs
        let dn = e(1.0) + 2.0 * e(r) + 2.0 + 2.0;
        let ln = ((-1.0 + dn.ln()) + 2.0 * (-r + dn.ln())) / 3.0;
        // adjective anchor: 2 own nouns, 1 own adj, 2 cross nouns, 2 cross adjs
        let da = 2.0 * e(r) + e(1.0) + 2.0 + 2.0 * e(0.5);
        let la = (2.0 * (-r + da.ln()) + (-1.0 + da.ln())) / 3.0;
        let expected = (2.0 * ln + 2.0 * la) / 4.0;
        assert!((l.value - expected).abs() < 1e-12, "{} vs {expected}", l.value);
    }

    #[test]
    fn errors() {
        let b = EmbeddingGroupBatch::new(vec![vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0], vec![0.0, 1.0]]]);
        assert!(prompt_cl(&b, 0.2, false).is_err());
        let ok = EmbeddingGroupBatch::replicated(&[vec![1.0, 0.0]], 2);
        assert!(prompt_cl(&ok, 0.0, false).is_err());
        let adj = EmbeddingGroupBatch::replicated(&[vec![1.0, 1.0]], 3);
        assert!(prompt_cl_adj(&ok, &adj, 0.2, 1, false).is_err());
        assert!(prompt_cl_adj(&ok, &adj, 0.2, 0, false).is_err());
    }
}
