//! Expanded cross neighborhood (ECN) distance and top-K rank-list
//! similarity.
//!
//! The similarity of two rank lists is
//!
//! ```text
//! R(L_i, L_j) = Σ_b [K + 1 − pos_i(b)]₊ · [K + 1 − pos_j(b)]₊
//! ```
//!
//! i.e. `W·Wᵀ` with `W[i][b] = max(K + 1 − pos_i(b), 0)`. It becomes a
//! distance through `1 − minmax(R)`, scaled over every entry of `R`.
//!
//! The ECN distance of a pair `(p, g)` averages the base distance from each
//! of the `M` expanded neighbors of `p` to `g`, and from each expanded
//! neighbor of `g` to `p`:
//!
//! ```text
//! ECN(p, g) = 1/(2M) · Σ_j d(pN_j, g) + d(gN_j, p)
//! ```

use std::borrow::Cow;

use rayon::prelude::*;

use crate::buffer::zeroed_f64;
use crate::distance::pairwise_sq_euclidean;
use crate::error::{Error, Result};
use crate::ranking::{build_rank_heads, expand_neighbors, ExpandedNeighborTable, RankLists};
use crate::types::{DistanceMatrix, EcnParams, EvalRecords, FeatureMatrix, Matrix, Method, RankListMatrix};

/// Symmetric, non-negative `n × n` rank-list similarity.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    n_items: usize,
    data: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn new(n_items: usize, data: Vec<f64>) -> Result<Self> {
        if n_items == 0 {
            return Err(Error::EmptyMatrix);
        }
        if n_items.checked_mul(n_items) != Some(data.len()) {
            return Err(Error::shape(
                format!("{n_items} x {n_items} values"),
                format!("{} values", data.len()),
            ));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if data.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidParams("similarity must be non-negative".into()));
        }
        for i in 0..n_items {
            for j in 0..i {
                if data[i * n_items + j] != data[j * n_items + i] {
                    return Err(Error::InvalidParams(format!("similarity is asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { n_items, data })
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_items + j]
    }
}

/// Top-K rank-list similarity for every pair of items.
///
/// Each row of `W` has at most `K` nonzeros, so the product is formed from
/// an inverted index over the top-K entries instead of a dense multiply:
/// `O(n·K²)` multiply-adds plus `O(n²)` to fill the output. All terms are
/// small integers, so the result is exact and equals
/// [`rank_list_similarity_dense`] bit for bit.
pub fn rank_list_similarity<R: RankLists + ?Sized>(r: &R, k: usize) -> Result<SimilarityMatrix> {
    if k == 0 {
        return Err(Error::InvalidParams("k must be at least 1".into()));
    }
    let n = r.n_items();
    let depth = k.min(n);
    if r.depth() < depth {
        return Err(Error::InvalidParams(format!(
            "rank lists hold {} entries, K = {k} needs {depth}",
            r.depth()
        )));
    }
    let weight = |rank0: usize| (k - rank0) as f64;

    // holders[b] = every (j, W[j][b]) with b in the top K of L_j
    let mut holders: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
    for j in 0..n {
        for (rank0, &b) in r.head(j)[..depth].iter().enumerate() {
            holders[b as usize].push((j as u32, weight(rank0)));
        }
    }

    let mut data = zeroed_f64(n * n);
    data.par_chunks_mut(n).enumerate().for_each(|(i, out)| {
        for (rank0, &b) in r.head(i)[..depth].iter().enumerate() {
            let wi = weight(rank0);
            for &(j, wj) in &holders[b as usize] {
                out[j as usize] += wi * wj;
            }
        }
    });
    Ok(SimilarityMatrix { n_items: n, data })
}

/// Same quantity as [`rank_list_similarity`], via a dense single-precision
/// `W` and a row-parallel `W·Wᵀ` with double-precision accumulation.
/// `O(n³)`; intended for cross-checking and small inputs.
pub fn rank_list_similarity_dense(r: &RankListMatrix, k: usize) -> Result<SimilarityMatrix> {
    if k == 0 {
        return Err(Error::InvalidParams("k must be at least 1".into()));
    }
    let n = r.n_items();
    let w: Vec<f32> = (0..n)
        .flat_map(|i| {
            r.pos_row(i)
                .iter()
                .map(move |&p| (k as i64 + 1 - p as i64).max(0) as f32)
        })
        .collect();

    let mut data = zeroed_f64(n * n);
    data.par_chunks_mut(n).enumerate().for_each(|(i, out)| {
        let wi = &w[i * n..(i + 1) * n];
        for (o, wj) in out.iter_mut().zip(w.chunks_exact(n)) {
            let mut acc = 0.0f64;
            for (&a, &b) in wi.iter().zip(wj) {
                acc += f64::from(a) * f64::from(b);
            }
            *o = acc;
        }
    });
    Ok(SimilarityMatrix { n_items: n, data })
}

/// `d = 1 − (R − min R) / (max R − min R)`, with min and max taken over the
/// whole matrix. The diagonal of `R` must be its global maximum (true for
/// any self-inclusive rank lists) so that `d` has a zero diagonal.
pub fn rank_dist(sim: SimilarityMatrix) -> Result<DistanceMatrix> {
    let n = sim.n_items;
    let (min, max) = sim
        .data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if max == min {
        return Err(Error::DegenerateSimilarity);
    }
    let range = max - min;
    let mut data = sim.data;
    data.par_iter_mut().for_each(|v| {
        let d = 1.0 - (*v - min) / range;
        *v = if d <= 0.0 { 0.0 } else { d };
    });
    if let Some(i) = (0..n).find(|&i| data[i * n + i] != 0.0) {
        return Err(Error::InvalidDistance(format!(
            "similarity diagonal at {i} is not the global maximum"
        )));
    }
    Ok(DistanceMatrix::from_raw(n, data))
}

/// Queries and gallery rows handled together in the inner loops, giving
/// independent add chains.
const QUERY_BLOCK: usize = 8;
const GALLERY_BLOCK: usize = 4;

/// ECN distance from every query to every gallery item. `base` may be the
/// original distance or the rank-list distance; both must cover the same
/// union of items as `nbrs`. Output is `queries.len() × gallery.len()`.
pub fn ecn_distance(
    base: &DistanceMatrix,
    nbrs: &ExpandedNeighborTable,
    queries: &[usize],
    gallery: &[usize],
) -> Result<Matrix> {
    let n = base.n_items();
    if nbrs.n_items() != n {
        return Err(Error::shape(
            format!("neighbor table over {n} items"),
            format!("{} items", nbrs.n_items()),
        ));
    }
    if let Some(&index) = queries.iter().chain(gallery).find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index, n_items: n });
    }
    let q_len = queries.len();
    let g_len = gallery.len();
    let m = nbrs.m();
    let scale = 2.0 * m as f64;
    if q_len == 0 || g_len == 0 {
        return Matrix::new(q_len, g_len, Vec::new());
    }

    // Both sums are gathered from a single base row, using exact symmetry:
    //   toward[g][p] = Σ_j d(pN_j, g) = Σ_j d(g, pN_j)   (row g)
    //   cross[p][g]  = Σ_j d(gN_j, p) = Σ_j d(p, gN_j)   (row p)
    // so every row of `base` streams from memory once.
    // Sum order within one multiset is ascending item index: a fixed order
    // that also walks each base row front to back.
    let sorted_rows = |items: &[usize]| -> Vec<u32> {
        let mut out: Vec<u32> = items.iter().flat_map(|&i| nbrs.row(i)).copied().collect();
        if m > 0 {
            out.chunks_exact_mut(m).for_each(|c| c.sort_unstable());
        }
        out
    };
    let query_nbrs = sorted_rows(queries);
    let gallery_nbrs = sorted_rows(gallery);
    let mut toward = zeroed_f64(g_len * q_len);
    toward
        .par_chunks_mut(GALLERY_BLOCK * q_len)
        .zip(gallery.par_chunks(GALLERY_BLOCK))
        .for_each(|(out, block)| {
            let rows: Vec<&[f64]> = block.iter().map(|&g| base.row(g)).collect();
            let mut acc = [0.0f64; GALLERY_BLOCK];
            for (p, pn) in query_nbrs.chunks_exact(m).enumerate() {
                acc.fill(0.0);
                for &a in pn {
                    for (s, row) in acc.iter_mut().zip(&rows) {
                        *s += row[a as usize];
                    }
                }
                for (r, &s) in acc.iter().take(rows.len()).enumerate() {
                    out[r * q_len + p] = s;
                }
            }
        });

    let mut out = zeroed_f64(q_len * g_len);
    out.par_chunks_mut(g_len * QUERY_BLOCK)
        .zip(queries.par_chunks(QUERY_BLOCK))
        .enumerate()
        .for_each(|(block, (out_rows, block_queries))| {
            let first = block * QUERY_BLOCK;
            let p_rows: Vec<&[f64]> = block_queries.iter().map(|&p| base.row(p)).collect();
            let mut cross = [0.0f64; QUERY_BLOCK];
            for gi in 0..g_len {
                let g_nbrs = &gallery_nbrs[gi * m..(gi + 1) * m];
                cross.fill(0.0);
                for &b in g_nbrs {
                    for (c, p_row) in cross.iter_mut().zip(&p_rows) {
                        *c += p_row[b as usize];
                    }
                }
                for (r, c) in cross.iter().take(p_rows.len()).enumerate() {
                    out_rows[r * g_len + gi] = (toward[gi * q_len + first + r] + c) / scale;
                }
            }
        });
    Matrix::new(q_len, g_len, out)
}

/// Full re-ranking over a precomputed union distance matrix. Queries and
/// gallery come from `records` (ascending item index); the result is
/// `n_queries × n_gallery`.
pub fn rerank(base: &DistanceMatrix, params: &EcnParams, records: &EvalRecords) -> Result<Matrix> {
    rerank_base(Cow::Borrowed(base), params, records)
}

/// [`rerank`] starting from features, with squared euclidean base distances.
/// The base matrix is freed as soon as the method no longer needs it.
pub fn rerank_features(features: &FeatureMatrix, params: &EcnParams, records: &EvalRecords) -> Result<Matrix> {
    let base = pairwise_sq_euclidean(features)?;
    rerank_base(Cow::Owned(base), params, records)
}

fn rerank_base(base: Cow<'_, DistanceMatrix>, params: &EcnParams, records: &EvalRecords) -> Result<Matrix> {
    let n = base.n_items();
    if records.len() != n {
        return Err(Error::shape(
            format!("{n} metadata records"),
            format!("{} records", records.len()),
        ));
    }
    if params.k == 0 {
        return Err(Error::InvalidParams("k must be at least 1".into()));
    }
    if params.method != Method::RankDistOnly {
        params.validate(n)?;
    }
    let queries = records.queries();
    let gallery = records.gallery();
    // only the heads of the lists are ever read
    let depth = match params.method {
        Method::RankDistOnly => params.k,
        Method::EcnOrigDist => params.t.max(params.q) + 1,
        Method::EcnRankDist => params.k.max(params.t.max(params.q) + 1),
    };
    let ranks = build_rank_heads(&base, depth)?;

    match params.method {
        Method::RankDistOnly => {
            drop(base);
            let rd = rank_dist(rank_list_similarity(&ranks, params.k)?)?;
            rd.select(&queries, &gallery)
        }
        Method::EcnOrigDist => {
            let nbrs = expand_neighbors(&ranks, params.t, params.q)?;
            ecn_distance(&base, &nbrs, &queries, &gallery)
        }
        Method::EcnRankDist => {
            drop(base);
            let nbrs = expand_neighbors(&ranks, params.t, params.q)?;
            let sim = rank_list_similarity(&ranks, params.k)?;
            drop(ranks);
            let rd = rank_dist(sim)?;
            ecn_distance(&rd, &nbrs, &queries, &gallery)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranking::build_rank_lists;
    use crate::synth::SplitMix64;
    use crate::types::{EvalRecord, Role};
    use proptest::prelude::*;

    fn lists(n: usize, rows: &[&[u32]]) -> RankListMatrix {
        RankListMatrix::from_order(n, rows.concat()).unwrap()
    }

    fn line_points() -> DistanceMatrix {
        let f = FeatureMatrix::from_rows(&[[0.0f32], [1.0], [3.0]]).unwrap();
        pairwise_sq_euclidean(&f).unwrap()
    }

    fn random_features(seed: u64, n: usize, dim: usize) -> FeatureMatrix {
        let mut rng = SplitMix64::new(seed);
        let data = (0..n * dim).map(|_| rng.next_normal() as f32).collect();
        FeatureMatrix::new(n, dim, data).unwrap()
    }

    fn every_third_query(n: usize) -> EvalRecords {
        EvalRecords::new(
            (0..n)
                .map(|i| EvalRecord {
                    item_index: i,
                    person_id: (i / 3) as i64,
                    camera_id: (i % 2) as i64,
                    role: if i % 3 == 0 { Role::Query } else { Role::Gallery },
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn hand_evaluated_similarity() {
        let r = lists(3, &[&[0, 1, 2], &[1, 0, 2], &[2, 1, 0]]);
        let sim = rank_list_similarity(&r, 2).unwrap();
        assert_eq!(sim.get(0, 1), 4.0);
        assert_eq!(sim.get(1, 0), 4.0);
        assert_eq!(sim.get(0, 0), 5.0);
    }

    #[test]
    fn disjoint_top_k_gives_zero() {
        let r = lists(4, &[&[0, 1, 2, 3], &[1, 0, 3, 2], &[2, 3, 0, 1], &[3, 2, 1, 0]]);
        let sim = rank_list_similarity(&r, 2).unwrap();
        assert_eq!(sim.get(0, 2), 0.0);
        assert_eq!(sim.get(1, 3), 0.0);
    }

    #[test]
    fn self_similarity_closed_form() {
        let r = build_rank_lists(&pairwise_sq_euclidean(&random_features(9, 40, 3)).unwrap());
        for k in [1, 2, 7, 25, 40] {
            let sim = rank_list_similarity(&r, k).unwrap();
            let expected: usize = (1..=k).map(|p| (k + 1 - p).pow(2)).sum();
            for i in 0..40 {
                assert_eq!(sim.get(i, i), expected as f64);
            }
        }
    }

    #[test]
    fn minmax_fixture() {
        let sim = SimilarityMatrix::new(2, vec![5.0, 4.0, 4.0, 5.0]).unwrap();
        let d = rank_dist(sim).unwrap();
        assert_eq!(d.data(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn constant_similarity_is_degenerate() {
        let sim = SimilarityMatrix::new(2, vec![3.0; 4]).unwrap();
        assert!(matches!(rank_dist(sim), Err(Error::DegenerateSimilarity)));
    }

    #[test]
    fn rank_dist_has_zero_diagonal_and_unit_range() {
        let r = build_rank_lists(&pairwise_sq_euclidean(&random_features(4, 60, 5)).unwrap());
        let d = rank_dist(rank_list_similarity(&r, 10).unwrap()).unwrap();
        for i in 0..60 {
            assert_eq!(d.get(i, i), 0.0);
        }
        assert!(d.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        DistanceMatrix::new(60, d.data().to_vec()).unwrap();
    }

    #[test]
    fn dense_and_sparse_similarity_agree() {
        let r = build_rank_lists(&pairwise_sq_euclidean(&random_features(8, 90, 6)).unwrap());
        for k in [1, 5, 25, 89, 120] {
            let sparse = rank_list_similarity(&r, k).unwrap();
            let dense = rank_list_similarity_dense(&r, k).unwrap();
            for (a, b) in sparse.data().iter().zip(dense.data()) {
                assert!((a - b).abs() <= 1e-6 * a.abs().max(b.abs()), "k={k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn line_points_ecn() {
        let d = line_points();
        let nbrs = expand_neighbors(&build_rank_lists(&d), 1, 1).unwrap();
        let out = ecn_distance(&d, &nbrs, &[0], &[2]).unwrap();
        assert_eq!(out.get(0, 0), 3.5);
    }

    #[test]
    fn q_zero_reduces_to_top_t_cross_average() {
        let d = pairwise_sq_euclidean(&random_features(12, 25, 4)).unwrap();
        let r = build_rank_lists(&d);
        let t = 4;
        let nbrs = expand_neighbors(&r, t, 0).unwrap();
        let out = ecn_distance(&d, &nbrs, &[0, 5], &[1, 2, 24]).unwrap();
        for (qi, &p) in [0usize, 5].iter().enumerate() {
            for (gi, &g) in [1usize, 2, 24].iter().enumerate() {
                let a: f64 = r.order(p)[1..=t].iter().map(|&x| d.get(x as usize, g)).sum();
                let b: f64 = r.order(g)[1..=t].iter().map(|&x| d.get(x as usize, p)).sum();
                let expected = (a + b) / (2 * t) as f64;
                assert!((out.get(qi, gi) - expected).abs() <= 1e-12 * expected);
            }
        }
    }

    #[test]
    fn ecn_rejects_bad_indices() {
        let d = line_points();
        let nbrs = expand_neighbors(&build_rank_lists(&d), 1, 1).unwrap();
        assert!(matches!(
            ecn_distance(&d, &nbrs, &[0], &[3]),
            Err(Error::IndexOutOfRange { index: 3, .. })
        ));
    }

    #[test]
    fn orig_dist_pipeline_is_a_composition() {
        let f = random_features(21, 30, 4);
        let records = every_third_query(30);
        let params = EcnParams {
            method: Method::EcnOrigDist,
            ..EcnParams::default()
        };
        let out = rerank_features(&f, &params, &records).unwrap();

        let d = pairwise_sq_euclidean(&f).unwrap();
        let nbrs = expand_neighbors(&build_rank_lists(&d), 3, 8).unwrap();
        let manual = ecn_distance(&d, &nbrs, &records.queries(), &records.gallery()).unwrap();
        assert_eq!(out, manual);
    }

    #[test]
    fn rank_dist_only_slices_the_full_matrix() {
        let f = random_features(22, 30, 4);
        let records = every_third_query(30);
        let params = EcnParams {
            method: Method::RankDistOnly,
            ..EcnParams::default()
        };
        let out = rerank_features(&f, &params, &records).unwrap();
        let d = pairwise_sq_euclidean(&f).unwrap();
        let full = rank_dist(rank_list_similarity(&build_rank_lists(&d), 25).unwrap()).unwrap();
        assert_eq!(out, full.select(&records.queries(), &records.gallery()).unwrap());
    }

    #[test]
    fn rerank_checks_record_count() {
        let f = random_features(1, 30, 4);
        let records = every_third_query(29);
        assert!(matches!(
            rerank_features(&f, &EcnParams::default(), &records),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn positive_rescaling_of_base_carries_through(seed in any::<u64>(), scale in 0.01f64..100.0) {
            let d = pairwise_sq_euclidean(&random_features(seed, 24, 3)).unwrap();
            let nbrs = expand_neighbors(&build_rank_lists(&d), 2, 3).unwrap();
            let scaled = DistanceMatrix::new(24, d.data().iter().map(|v| scale * v).collect()).unwrap();
            let queries: Vec<usize> = (0..6).collect();
            let gallery: Vec<usize> = (6..24).collect();
            let a = ecn_distance(&d, &nbrs, &queries, &gallery).unwrap();
            let b = ecn_distance(&scaled, &nbrs, &queries, &gallery).unwrap();
            for qi in 0..a.rows() {
                for gi in 0..a.cols() {
                    let expected = scale * a.get(qi, gi);
                    prop_assert!((b.get(qi, gi) - expected).abs() <= 1e-12 * expected.abs());
                }
                let rank = |m: &Matrix| {
                    let mut idx: Vec<usize> = (0..m.cols()).collect();
                    idx.sort_by(|&x, &y| m.get(qi, x).total_cmp(&m.get(qi, y)).then(x.cmp(&y)));
                    idx
                };
                // exact ties can straddle rounding, so only compare when all gaps are clear
                let ra = rank(&a);
                let clear = ra.windows(2).all(|w| a.get(qi, w[1]) - a.get(qi, w[0]) > 1e-9 * a.get(qi, w[1]));
                if clear {
                    prop_assert_eq!(ra, rank(&b));
                }
            }
        }

        #[test]
        fn ecn_ranking_is_a_gallery_permutation(seed in any::<u64>()) {
            let f = random_features(seed, 40, 4);
            let records = every_third_query(40);
            let out = rerank_features(&f, &EcnParams { t: 2, q: 4, k: 8, method: Method::EcnRankDist }, &records).unwrap();
            prop_assert_eq!(out.cols(), records.gallery().len());
            for qi in 0..out.rows() {
                let mut idx: Vec<usize> = (0..out.cols()).collect();
                idx.sort_by(|&a, &b| out.get(qi, a).total_cmp(&out.get(qi, b)));
                idx.sort_unstable();
                prop_assert_eq!(idx, (0..out.cols()).collect::<Vec<_>>());
            }
        }
    }
}
