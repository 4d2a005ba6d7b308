use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::plot;
use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub concepts: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trend {
    Decreasing,
    NonIncreasing,
    Increasing,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub metric: String,
    pub rows: Vec<ScalingRow>,
    pub trend: Trend,
    /// Adjacent group pairs where the mean goes up.
    pub inversions: usize,
}

/// Groups results by concepts-per-image. Every size in `expected` must be
/// present and non-empty.
pub fn scaling_report(metric: &str, results: &BTreeMap<usize, Vec<f64>>, expected: &[usize]) -> Result<ScalingReport> {
    if let Some(g) = expected.iter().find(|g| results.get(g).is_none_or(Vec::is_empty)) {
        return Err(Error::Empty(format!("no results for {g} concepts per image")));
    }
    let rows: Vec<ScalingRow> = results
        .iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(&concepts, v)| ScalingRow { concepts, mean: stats::mean(v), std_dev: stats::std_dev(v), n: v.len() })
        .collect();
    if rows.len() < 2 {
        return Err(Error::InvalidArgument("scaling needs at least two group sizes".into()));
    }
    let diffs: Vec<f64> = rows.windows(2).map(|w| w[1].mean - w[0].mean).collect();
    let inversions = diffs.iter().filter(|&&d| d > 0.0).count();
    let trend = if diffs.iter().all(|&d| d < 0.0) {
        Trend::Decreasing
    } else if inversions == 0 {
        Trend::NonIncreasing
    } else if diffs.iter().all(|&d| d > 0.0) {
        Trend::Increasing
    } else {
        Trend::Mixed
    };
    Ok(ScalingReport { metric: metric.to_string(), rows, trend, inversions })
}

impl ScalingReport {
    pub fn table(&self) -> String {
        let mut s = format!("{:>8}  {:>9}  {:>9}  {:>4}\n", "concepts", self.metric, "std", "n");
        for r in &self.rows {
            let _ = writeln!(s, "{:>8}  {:>9.4}  {:>9.4}  {:>4}", r.concepts, r.mean, r.std_dev, r.n);
        }
        let _ = writeln!(s, "trend: {:?} ({} inversions)", self.trend, self.inversions);
        s
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let stem = format!("scaling_{}", super::file_label(&self.metric));
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&json, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(&json, e))?;
        let txt = dir.join(format!("{stem}.txt"));
        std::fs::write(&txt, self.table()).map_err(|e| Error::io(&txt, e))?;
        plot::bars(&self.rows.iter().map(|r| r.mean).collect::<Vec<_>>(), &dir.join(format!("{stem}.png")))?;
        Ok(json)
    }
}
