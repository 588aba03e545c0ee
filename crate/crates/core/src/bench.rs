//! Wall-clock timing of the re-ranking pipeline on synthetic data.

use std::time::Instant;

use crate::ecn::rerank_features;
use crate::error::{Error, Result};
use crate::synth::{generate_clusters, ClusterSpec};
use crate::types::EcnParams;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub n_items: usize,
    pub runs: Vec<f64>,
}

impl BenchRow {
    pub fn mean(&self) -> f64 {
        self.runs.iter().sum::<f64>() / self.runs.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.runs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn median(&self) -> f64 {
        let mut sorted = self.runs.clone();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        if sorted.len().is_multiple_of(2) {
            (sorted[mid - 1] + sorted[mid]) / 2.0
        } else {
            sorted[mid]
        }
    }
}

/// Synthetic input used for timing: four images per identity, 32-dim.
pub fn bench_spec(n_items: usize, seed: u64) -> ClusterSpec {
    ClusterSpec {
        seed,
        n_ids: n_items.div_ceil(4),
        imgs_per_id: 4,
        dim: 32,
        intra_std: 1.0,
        inter_std: 1.0,
        n_cameras: 4,
    }
}

/// Times `rerank_features` (distances included) `runs` times per size.
/// Runs are interleaved across sizes, so slow periods on a shared machine
/// hit every size alike; [`BenchRow::min`] is the least noisy summary.
pub fn bench_rerank(sizes: &[usize], params: &EcnParams, runs: usize, seed: u64) -> Result<Vec<BenchRow>> {
    if runs == 0 {
        return Err(Error::InvalidParams("runs must be at least 1".into()));
    }
    let inputs = sizes
        .iter()
        .map(|&n| generate_clusters(&bench_spec(n, seed)))
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<BenchRow> = inputs
        .iter()
        .map(|(features, _)| BenchRow {
            n_items: features.n_items(),
            runs: Vec::with_capacity(runs),
        })
        .collect();
    for _ in 0..runs {
        for ((features, records), row) in inputs.iter().zip(&mut rows) {
            let start = Instant::now();
            let out = rerank_features(features, params, records)?;
            row.runs.push(start.elapsed().as_secs_f64());
            drop(out);
        }
    }
    Ok(rows)
}

/// Growth factor between consecutive sizes: the median over rounds of the
/// time ratio within one round. Slow periods on a shared machine tend to
/// span a whole round, so they cancel inside each ratio.
pub fn growth_ratios(rows: &[BenchRow]) -> Vec<f64> {
    rows.windows(2)
        .map(|w| {
            let ratios = w[1].runs.iter().zip(&w[0].runs).map(|(b, a)| b / a).collect();
            BenchRow {
                n_items: 0,
                runs: ratios,
            }
            .median()
        })
        .collect()
}
