//! Literal, slow reference for the whole re-ranking pipeline.
//!
//! Shares no code with the fast path beyond the input/output types: plain
//! nested vectors, explicit sorting, linear position searches, the
//! expanded multiset built by hand, and the similarity summed over every
//! item `b` for every pair.

#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};
use crate::types::{EcnParams, EvalRecords, FeatureMatrix, Matrix, Method};

pub const ORACLE_LIMIT: usize = 500;

pub fn oracle_ecn(features: &FeatureMatrix, params: &EcnParams, records: &EvalRecords) -> Result<Matrix> {
    let n = features.n_items();
    if n > ORACLE_LIMIT {
        return Err(Error::TooLargeForOracle {
            n_items: n,
            limit: ORACLE_LIMIT,
        });
    }
    if records.len() != n {
        return Err(Error::shape(
            format!("{n} records"),
            format!("{} records", records.len()),
        ));
    }
    let (t, q, k) = (params.t, params.q, params.k);
    if t == 0 || k == 0 {
        return Err(Error::InvalidParams("t and k must be at least 1".into()));
    }
    let uses_neighbors = params.method != Method::RankDistOnly;
    if uses_neighbors && (t + t * q > n || t + 1 > n || q + 1 > n) {
        return Err(Error::ParamsTooLarge {
            t,
            q,
            needed: t + t * q,
            n_items: n,
        });
    }

    // squared euclidean, summed term by term
    let mut dist = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for (a, b) in features.row(i).iter().zip(features.row(j)) {
                let diff = f64::from(*a) - f64::from(*b);
                s += diff * diff;
            }
            dist[i][j] = s;
        }
    }

    // L_i: self first, then everything else by (distance, index)
    let mut lists: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| dist[i][a].partial_cmp(&dist[i][b]).unwrap().then(a.cmp(&b)));
        let mut list = vec![i];
        list.extend(others);
        lists.push(list);
    }
    let position = |i: usize, b: usize| -> i64 { lists[i].iter().position(|&x| x == b).unwrap() as i64 + 1 };

    let queries = records.queries();
    let gallery = records.gallery();

    let rank_distance = if params.method == Method::EcnOrigDist {
        None
    } else {
        let pos: Vec<Vec<i64>> = (0..n).map(|i| (0..n).map(|b| position(i, b)).collect()).collect();
        let kk = k as i64;
        let mut sim = vec![vec![0.0f64; n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0i64;
                for b in 0..n {
                    let wi = (kk + 1 - pos[i][b]).max(0);
                    let wj = (kk + 1 - pos[j][b]).max(0);
                    s += wi * wj;
                }
                sim[i][j] = s as f64;
            }
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in &sim {
            for &v in row {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if hi == lo {
            return Err(Error::DegenerateSimilarity);
        }
        Some(
            sim.iter()
                .map(|row| row.iter().map(|&v| 1.0 - (v - lo) / (hi - lo)).collect::<Vec<f64>>())
                .collect::<Vec<_>>(),
        )
    };

    if params.method == Method::RankDistOnly {
        let rd = rank_distance.unwrap();
        let mut out = Vec::new();
        for &p in &queries {
            for &g in &gallery {
                out.push(rd[p][g]);
            }
        }
        return Matrix::new(queries.len(), gallery.len(), out);
    }

    // N(i, M) = top t, then top q of each of those
    let expanded: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut set = Vec::new();
            for r in 1..=t {
                set.push(lists[i][r]);
            }
            for r in 1..=t {
                let nb = lists[i][r];
                for s in 1..=q {
                    set.push(lists[nb][s]);
                }
            }
            set
        })
        .collect();

    let base = rank_distance.as_ref().unwrap_or(&dist);
    let m = t + t * q;
    let mut out = Vec::new();
    for &p in &queries {
        for &g in &gallery {
            let mut s = 0.0;
            for j in 0..m {
                s += base[expanded[p][j]][g] + base[expanded[g][j]][p];
            }
            out.push(s / (2 * m) as f64);
        }
    }
    Matrix::new(queries.len(), gallery.len(), out)
}
