//! Single-query cross-camera retrieval evaluation (CMC and mAP).
//!
//! For each query, gallery items sharing both its person id and camera id
//! are junk and removed before ranking. Person ids `0` and `-1` mark
//! distractors/junk detections: they are never relevant but stay in the
//! ranking as negatives. AP is the mean of precision at each relevant hit.

use rayon::prelude::*;
use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::{EvalRecords, Matrix};

pub const DEFAULT_RANKS: [usize; 4] = [1, 5, 10, 50];

/// Person ids that never count as a match.
pub fn is_junk_label(person_id: i64) -> bool {
    person_id == 0 || person_id == -1
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub map: f64,
    #[serde(serialize_with = "serialize_cmc")]
    pub cmc: Vec<(usize, f64)>,
    pub num_queries: usize,
    pub skipped_queries: usize,
    pub params: serde_json::Map<String, serde_json::Value>,
}

fn serialize_cmc<S: Serializer>(cmc: &[(usize, f64)], s: S) -> Result<S::Ok, S::Error> {
    let mut map = s.serialize_map(Some(cmc.len()))?;
    for (k, v) in cmc {
        map.serialize_entry(&k.to_string(), v)?;
    }
    map.end()
}

impl EvalReport {
    pub fn cmc_at(&self, rank: usize) -> Option<f64> {
        self.cmc.iter().find(|(k, _)| *k == rank).map(|&(_, v)| v)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Outcome for one query that has at least one relevant gallery item.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QueryResult {
    pub average_precision: f64,
    /// 1-based rank of the first relevant item after junk removal.
    pub first_hit: usize,
}

/// `dist` is `n_queries × n_gallery`, rows and columns in ascending item
/// index order of the query and gallery records.
pub fn evaluate(dist: &Matrix, records: &EvalRecords, ranks: &[usize]) -> Result<EvalReport> {
    let per_query = evaluate_queries(dist, records)?;
    let valid: Vec<QueryResult> = per_query.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(Error::NoValidQueries);
    }
    if let Some(&bad) = ranks.iter().find(|&&k| k == 0) {
        return Err(Error::InvalidParams(format!("CMC rank {bad} must be >= 1")));
    }
    let count = valid.len() as f64;
    let map = valid.iter().map(|r| r.average_precision).sum::<f64>() / count;
    let cmc = ranks
        .iter()
        .map(|&k| {
            let hits = valid.iter().filter(|r| r.first_hit <= k).count();
            (k, hits as f64 / count)
        })
        .collect();
    let mut params = serde_json::Map::new();
    params.insert("ranks".into(), serde_json::json!(ranks));
    Ok(EvalReport {
        map,
        cmc,
        num_queries: valid.len(),
        skipped_queries: per_query.len() - valid.len(),
        params,
    })
}

/// Per-query results; `None` marks a query with no valid match.
pub fn evaluate_queries(dist: &Matrix, records: &EvalRecords) -> Result<Vec<Option<QueryResult>>> {
    let queries = records.queries();
    let gallery = records.gallery();
    if dist.rows() != queries.len() || dist.cols() != gallery.len() {
        return Err(Error::shape(
            format!("{} x {} (queries x gallery)", queries.len(), gallery.len()),
            format!("{} x {}", dist.rows(), dist.cols()),
        ));
    }
    Ok(queries
        .par_iter()
        .enumerate()
        .map(|(qi, &q)| {
            let query = records.get(q);
            let row = dist.row(qi);
            let mut kept: Vec<usize> = (0..gallery.len())
                .filter(|&gi| {
                    let g = records.get(gallery[gi]);
                    !(g.person_id == query.person_id && g.camera_id == query.camera_id)
                })
                .collect();
            kept.sort_unstable_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));

            let relevant = |gi: usize| {
                let pid = records.get(gallery[gi]).person_id;
                pid == query.person_id && !is_junk_label(pid)
            };
            let mut hits = 0usize;
            let mut precision_sum = 0.0;
            let mut first_hit = None;
            for (rank0, &gi) in kept.iter().enumerate() {
                if relevant(gi) {
                    hits += 1;
                    precision_sum += hits as f64 / (rank0 + 1) as f64;
                    first_hit.get_or_insert(rank0 + 1);
                }
            }
            first_hit.map(|first_hit| QueryResult {
                average_precision: precision_sum / hits as f64,
                first_hit,
            })
        })
        .collect())
}
