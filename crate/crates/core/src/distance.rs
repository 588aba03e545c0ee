//! Pairwise distances over the full query ∪ gallery set.
//!
//! Rows are computed in parallel, each output row by exactly one worker, with
//! a sequential reduction order inside each dot product. The result is
//! therefore bit-identical for any thread count, and exactly symmetric:
//! `dot(i, j)` and `dot(j, i)` perform the same products in the same order.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{validate_feature_matrix, DistanceMatrix, FeatureMatrix};

/// Plain left-to-right dot product; the tiled kernel below reproduces this
/// exact order for every pair.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

const ROW_BLOCK: usize = 16;
const COL_TILE: usize = 16;

/// Fills an `n × n` matrix with `entry(i, j, x_i·x_j)` off the diagonal.
///
/// Columns are packed in tiles of `COL_TILE` items, stored dimension-major,
/// so one row of the output tile is `COL_TILE` independent dot products
/// advancing in lockstep over the dimensions. Each product still adds its
/// terms in plain index order, so the result equals [`dot`] bit for bit and
/// `dot(i, j) == dot(j, i)`. Work is split into blocks of whole rows.
fn fill_rows<F>(n: usize, dim: usize, x: &[f64], entry: F) -> Vec<f64>
where
    F: Fn(usize, usize, f64) -> f64 + Sync,
{
    let tiles = n.div_ceil(COL_TILE);
    let mut packed = vec![0.0f64; tiles * dim * COL_TILE];
    for (j, row) in x.chunks_exact(dim).enumerate() {
        let tile = &mut packed[(j / COL_TILE) * dim * COL_TILE..];
        for (c, &v) in row.iter().enumerate() {
            tile[c * COL_TILE + j % COL_TILE] = v;
        }
    }

    let mut data = crate::buffer::zeroed_f64(n * n);
    data.par_chunks_mut(n * ROW_BLOCK).enumerate().for_each(|(block, out)| {
        let first = block * ROW_BLOCK;
        let rows = out.len() / n;
        for (t, tile) in packed.chunks_exact(dim * COL_TILE).enumerate() {
            let start = t * COL_TILE;
            let width = COL_TILE.min(n - start);
            for r in 0..rows {
                let i = first + r;
                let mut acc = [0.0f64; COL_TILE];
                for (&a, col) in x[i * dim..(i + 1) * dim].iter().zip(tile.chunks_exact(COL_TILE)) {
                    for (s, &b) in acc.iter_mut().zip(col) {
                        *s += a * b;
                    }
                }
                let out_row = &mut out[r * n + start..r * n + start + width];
                for (k, (o, &d)) in out_row.iter_mut().zip(&acc).enumerate() {
                    let j = start + k;
                    if j != i {
                        *o = entry(i, j, d);
                    }
                }
            }
        }
    });
    data
}

fn widen(features: &FeatureMatrix) -> Vec<f64> {
    features.data().iter().map(|&v| f64::from(v)).collect()
}

/// Squared euclidean distances, `‖x_i‖² + ‖x_j‖² − 2·x_i·x_j`, with
/// cancellation residue clamped to zero.
pub fn pairwise_sq_euclidean(features: &FeatureMatrix) -> Result<DistanceMatrix> {
    validate_feature_matrix(features)?;
    let n = features.n_items();
    let dim = features.dim();
    let x = widen(features);
    let norms: Vec<f64> = x.chunks_exact(dim).map(|r| dot(r, r)).collect();

    let data = fill_rows(n, dim, &x, |i, j, dot_ij| {
        let v = norms[i] + norms[j] - 2.0 * dot_ij;
        if v <= 0.0 {
            0.0
        } else {
            v
        }
    });
    Ok(DistanceMatrix::from_raw(n, data))
}

/// Cosine distances `1 − cos(x_i, x_j)`, clamped to `[0, 2]`.
pub fn pairwise_cosine(features: &FeatureMatrix) -> Result<DistanceMatrix> {
    validate_feature_matrix(features)?;
    let n = features.n_items();
    let dim = features.dim();
    let mut x = widen(features);
    for (i, row) in x.chunks_exact_mut(dim).enumerate() {
        let norm = dot(row, row).sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroNormRow(i));
        }
        row.iter_mut().for_each(|v| *v /= norm);
    }

    let data = fill_rows(n, dim, &x, |_, _, dot_ij| {
        let v = 1.0 - dot_ij;
        if v <= 0.0 {
            0.0
        } else {
            v.min(2.0)
        }
    });
    Ok(DistanceMatrix::from_raw(n, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::SplitMix64;

    fn random_features(seed: u64, n: usize, dim: usize) -> FeatureMatrix {
        let mut rng = SplitMix64::new(seed);
        let data = (0..n * dim).map(|_| rng.next_normal() as f32).collect();
        FeatureMatrix::new(n, dim, data).unwrap()
    }

    fn naive_sq(f: &FeatureMatrix, i: usize, j: usize) -> f64 {
        f.row(i)
            .iter()
            .zip(f.row(j))
            .map(|(&a, &b)| (f64::from(a) - f64::from(b)).powi(2))
            .sum()
    }

    #[test]
    fn points_on_a_line() {
        let f = FeatureMatrix::from_rows(&[[0.0f32], [1.0], [3.0]]).unwrap();
        let d = pairwise_sq_euclidean(&f).unwrap();
        assert_eq!(d.data(), &[0.0, 1.0, 9.0, 1.0, 0.0, 4.0, 9.0, 4.0, 0.0]);
    }

    #[test]
    fn identical_rows_have_zero_distance() {
        let f = FeatureMatrix::from_rows(&[[0.3f32, -1.7, 2.2], [0.3, -1.7, 2.2]]).unwrap();
        let d = pairwise_sq_euclidean(&f).unwrap();
        assert_eq!(d.get(0, 1), 0.0);
        assert_eq!(d.get(1, 0), 0.0);
    }

    #[test]
    fn matches_naive_double_loop() {
        let f = random_features(7, 50, 8);
        let d = pairwise_sq_euclidean(&f).unwrap();
        for i in 0..50 {
            for j in 0..50 {
                assert!((d.get(i, j) - naive_sq(&f, i, j)).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn output_satisfies_distance_invariants() {
        let f = random_features(11, 40, 5);
        let d = pairwise_sq_euclidean(&f).unwrap();
        DistanceMatrix::new(40, d.data().to_vec()).unwrap();
    }

    #[test]
    fn cosine_basics() {
        let f = FeatureMatrix::from_rows(&[[1.0f32, 0.0], [0.0, 1.0], [2.0, 0.0]]).unwrap();
        let d = pairwise_cosine(&f).unwrap();
        assert_eq!(d.get(0, 1), 1.0);
        assert_eq!(d.get(0, 2), 0.0);
        assert_eq!(d.get(1, 1), 0.0);
    }

    #[test]
    fn cosine_matches_naive_double_loop() {
        let f = random_features(3, 20, 4);
        let d = pairwise_cosine(&f).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                let (a, b) = (f.row(i), f.row(j));
                let ab: f64 = a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum();
                let na: f64 = a.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
                let nb: f64 = b.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
                let expected = if i == j {
                    0.0
                } else {
                    (1.0 - ab / (na * nb)).clamp(0.0, 2.0)
                };
                assert!((d.get(i, j) - expected).abs() <= 1e-10, "({i},{j})");
            }
        }
    }

    #[test]
    fn cosine_rejects_zero_rows() {
        let f = FeatureMatrix::from_rows(&[[1.0f32, 0.0], [0.0, 0.0]]).unwrap();
        assert!(matches!(pairwise_cosine(&f), Err(Error::ZeroNormRow(1))));
    }

    #[test]
    fn tiled_kernel_matches_plain_dots() {
        let f = random_features(2, 37, 11);
        let x = widen(&f);
        let d = fill_rows(37, 11, &x, |_, _, v| v);
        for i in 0..37 {
            for j in 0..37 {
                if i != j {
                    let plain = dot(&x[i * 11..(i + 1) * 11], &x[j * 11..(j + 1) * 11]);
                    assert_eq!(d[i * 37 + j].to_bits(), plain.to_bits());
                }
            }
        }
    }

    #[test]
    fn exactly_symmetric_for_odd_sizes() {
        for (n, dim) in [(7, 3), (67, 9), (130, 32)] {
            let d = pairwise_sq_euclidean(&random_features(n as u64, n, dim)).unwrap();
            DistanceMatrix::new(n, d.data().to_vec()).unwrap();
        }
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let f = random_features(5, 120, 16);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| pairwise_sq_euclidean(&f).unwrap())
        };
        let one = run(1);
        assert_eq!(one, run(3));
        assert_eq!(one, run(8));
    }
}
