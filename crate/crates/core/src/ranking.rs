//! Initial rank lists and two-level neighbor expansion.

use rayon::prelude::*;

use crate::buffer::zeroed_u32;
use crate::error::{Error, Result};
use crate::types::{check_expansion, DistanceMatrix, RankListMatrix};

/// Sorts every row of `d` ascending. The item itself always takes position
/// 1; every other tie is broken by ascending item index.
pub fn build_rank_lists(d: &DistanceMatrix) -> RankListMatrix {
    let n = d.n_items();
    let mut order = zeroed_u32(n * n);
    let mut pos = zeroed_u32(n * n);
    order
        .par_chunks_mut(n)
        .zip(pos.par_chunks_mut(n))
        .enumerate()
        .for_each_init(RowSorter::default, |sorter, (i, (order_row, pos_row))| {
            order_row[0] = i as u32;
            let sorted = sorter.sort(d.row(i), i);
            for (slot, &key) in order_row[1..].iter_mut().zip(sorted) {
                *slot = key as u32;
            }
            for (r, &b) in order_row.iter().enumerate() {
                pos_row[b as usize] = r as u32 + 1;
            }
        });
    RankListMatrix::from_parts(n, order, pos)
}

/// Read access to the leading entries of every rank list.
pub trait RankLists: Sync {
    fn n_items(&self) -> usize;
    /// Entries available per list.
    fn depth(&self) -> usize;
    /// The first `depth()` entries of `L_i`, self first.
    fn head(&self, i: usize) -> &[u32];
}

impl RankLists for RankListMatrix {
    fn n_items(&self) -> usize {
        RankListMatrix::n_items(self)
    }

    fn depth(&self) -> usize {
        RankListMatrix::n_items(self)
    }

    fn head(&self, i: usize) -> &[u32] {
        self.order(i)
    }
}

/// The first `depth` entries of every rank list, in the same order
/// [`build_rank_lists`] would give.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankHeads {
    n_items: usize,
    depth: usize,
    order: Vec<u32>,
}

impl RankLists for RankHeads {
    fn n_items(&self) -> usize {
        self.n_items
    }

    fn depth(&self) -> usize {
        self.depth
    }

    fn head(&self, i: usize) -> &[u32] {
        &self.order[i * self.depth..(i + 1) * self.depth]
    }
}

/// Above this depth, rows are cut with a selection instead of an insertion
/// buffer, which degrades to `O(n · depth)` on unlucky rows.
const INSERTION_DEPTH: usize = 64;

/// Partial rank lists of length `depth` (capped at `n_items`). Each row costs
/// one pass of `O(n)` comparisons: short heads keep a sorted buffer of the
/// best candidates so far, long ones use a linear-time selection and then
/// sort the selected prefix.
pub fn build_rank_heads(d: &DistanceMatrix, depth: usize) -> Result<RankHeads> {
    if depth == 0 {
        return Err(Error::InvalidParams("rank list depth must be at least 1".into()));
    }
    let n = d.n_items();
    let depth = depth.min(n);
    let mut order = vec![0u32; n * depth];
    order
        .par_chunks_mut(depth)
        .enumerate()
        .for_each_init(Vec::new, |keys: &mut Vec<u128>, (i, out)| {
            let head = select_head(d.row(i), i, depth - 1, keys);
            out[0] = i as u32;
            for (slot, &key) in out[1..].iter_mut().zip(head) {
                *slot = key as u32;
            }
        });
    Ok(RankHeads {
        n_items: n,
        depth,
        order,
    })
}

/// The `take` smallest `(distance bits << 32) | index` keys of `row`,
/// excluding `skip`, in ascending order.
fn select_head<'a>(row: &[f64], skip: usize, take: usize, keys: &'a mut Vec<u128>) -> &'a [u128] {
    let key = |j: usize, v: f64| (u128::from(v.to_bits()) << 32) | j as u128;
    keys.clear();
    if take == 0 {
        return keys;
    }
    if take <= INSERTION_DEPTH {
        for (j, &v) in row.iter().enumerate() {
            let k = key(j, v);
            if j == skip || (keys.len() == take && k >= keys[take - 1]) {
                continue;
            }
            if keys.len() == take {
                keys.pop();
            }
            let at = keys.partition_point(|&b| b < k);
            keys.insert(at, k);
        }
        return keys;
    }
    keys.extend(
        row.iter()
            .enumerate()
            .filter(|&(j, _)| j != skip)
            .map(|(j, &v)| key(j, v)),
    );
    let take = take.min(keys.len());
    if take < keys.len() {
        keys.select_nth_unstable(take - 1);
    }
    keys[..take].sort_unstable();
    &keys[..take]
}

/// Scratch space for sorting one row by `(distance, index)`.
///
/// Entries are first scattered into `~n/8` buckets by a monotone linear map
/// of their distance, then each bucket is sorted on its own. Every bucket
/// fits in L1, which keeps the per-row cost close to linear for realistic
/// distance distributions; the result is the same total order a plain
/// comparison sort would give.
#[derive(Default)]
struct RowSorter {
    starts: Vec<u32>,
    fill: Vec<u32>,
    keyed: Vec<u128>,
}

impl RowSorter {
    /// Returns `(distance bits << 32) | index` keys in ascending order.
    /// Distances are non-negative, so their bit patterns order like the values.
    fn sort(&mut self, row: &[f64], skip: usize) -> &[u128] {
        let len = row.len().saturating_sub(1);
        let buckets = (len / 8).max(1);
        let (lo, hi) = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != skip)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, &v)| {
                (lo.min(v), hi.max(v))
            });
        let scale = if hi > lo { buckets as f64 / (hi - lo) } else { 0.0 };
        let bucket = |v: f64| (((v - lo) * scale) as usize).min(buckets - 1);

        self.starts.clear();
        self.starts.resize(buckets + 1, 0);
        for (j, &v) in row.iter().enumerate() {
            if j != skip {
                self.starts[bucket(v) + 1] += 1;
            }
        }
        for b in 1..=buckets {
            self.starts[b] += self.starts[b - 1];
        }
        self.fill.clear();
        self.fill.extend_from_slice(&self.starts[..buckets]);
        self.keyed.clear();
        self.keyed.resize(len, 0);
        for (j, &v) in row.iter().enumerate() {
            if j != skip {
                let slot = &mut self.fill[bucket(v)];
                self.keyed[*slot as usize] = (u128::from(v.to_bits()) << 32) | j as u128;
                *slot += 1;
            }
        }
        for w in self.starts.windows(2) {
            let chunk = &mut self.keyed[w[0] as usize..w[1] as usize];
            if chunk.len() > 1 {
                chunk.sort_unstable();
            }
        }
        &self.keyed
    }
}

/// The multiset `N(i, M)` for every item, `M = t + t·q` entries per row.
///
/// Row `i` holds the `t` nearest non-self neighbors of `i`, followed by the
/// `q` nearest non-self neighbors of each of those, in list order. Entries
/// may repeat, and `i` itself may appear among the second-level entries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpandedNeighborTable {
    n_items: usize,
    m: usize,
    neighbors: Vec<u32>,
}

impl ExpandedNeighborTable {
    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.neighbors[i * self.m..(i + 1) * self.m]
    }
}

pub fn expand_neighbors<R: RankLists + ?Sized>(r: &R, t: usize, q: usize) -> Result<ExpandedNeighborTable> {
    if t == 0 {
        return Err(Error::InvalidParams("t must be at least 1".into()));
    }
    let n = r.n_items();
    check_expansion(t, q, n)?;
    if r.depth() < t.max(q) + 1 {
        return Err(Error::InvalidParams(format!(
            "rank lists hold {} entries, expansion needs {}",
            r.depth(),
            t.max(q) + 1
        )));
    }
    let m = t + t * q;
    let mut neighbors = vec![0u32; n * m];
    neighbors.par_chunks_mut(m).enumerate().for_each(|(i, out)| {
        let first = &r.head(i)[1..=t];
        out[..t].copy_from_slice(first);
        for (chunk, &nb) in out[t..].chunks_exact_mut(q.max(1)).zip(first) {
            chunk.copy_from_slice(&r.head(nb as usize)[1..=q]);
        }
    });
    Ok(ExpandedNeighborTable {
        n_items: n,
        m,
        neighbors,
    })
}
