//! Matrix and metadata types shared across the crate.
//!
//! Everything here is immutable after construction. Indices are `u32`
//! internally so an `n × n` rank list stays at 4 bytes per entry.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n_items × dim` embedding matrix, row-major, one row per image.
///
/// Features are stored in single precision (the exchange format); all
/// arithmetic on them is done in `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    n_items: usize,
    dim: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(n_items: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        validate_feature_parts(n_items, dim, &data)?;
        Ok(Self { n_items, dim, data })
    }

    /// Builds a matrix from rows; all rows must have the same length.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let n_items = rows.len();
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n_items * dim);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::shape(
                    format!("row {i} of length {dim}"),
                    format!("length {}", row.len()),
                ));
            }
            data.extend_from_slice(row);
        }
        Self::new(n_items, dim, data)
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }
}

/// Checks every `FeatureMatrix` invariant without taking ownership.
pub fn validate_feature_matrix(m: &FeatureMatrix) -> Result<()> {
    validate_feature_parts(m.n_items, m.dim, &m.data)
}

fn validate_feature_parts(n_items: usize, dim: usize, data: &[f32]) -> Result<()> {
    if n_items == 0 {
        return Err(Error::EmptyMatrix);
    }
    if dim == 0 {
        return Err(Error::shape("dim >= 1", "dim = 0"));
    }
    if n_items.checked_mul(dim) != Some(data.len()) {
        return Err(Error::shape(
            format!("{n_items} x {dim} = {} values", n_items.saturating_mul(dim)),
            format!("{} values", data.len()),
        ));
    }
    if let Some(index) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(())
}

/// Dense rectangular `f64` matrix. Used for query × gallery outputs and
/// anything read from a distance file before it is known to be square.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::shape(
                format!("{rows} x {cols} values"),
                format!("{} values", data.len()),
            ));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// Symmetric `n × n` distance matrix with a zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n_items: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Validates and wraps a row-major square matrix. Negative zeros are
    /// normalised to `+0.0` so that ordering is purely by value.
    pub fn new(n_items: usize, mut data: Vec<f64>) -> Result<Self> {
        if n_items == 0 {
            return Err(Error::EmptyMatrix);
        }
        if n_items.checked_mul(n_items) != Some(data.len()) {
            return Err(Error::shape(
                format!("{n_items} x {n_items} values"),
                format!("{} values", data.len()),
            ));
        }
        for (index, v) in data.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { index });
            }
            if *v < 0.0 {
                return Err(Error::InvalidDistance(format!(
                    "negative entry {v} at flat index {index}"
                )));
            }
            *v += 0.0;
        }
        for i in 0..n_items {
            if data[i * n_items + i] != 0.0 {
                return Err(Error::InvalidDistance(format!("nonzero diagonal at {i}")));
            }
            for j in 0..i {
                if data[i * n_items + j] != data[j * n_items + i] {
                    return Err(Error::InvalidDistance(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { n_items, data })
    }

    /// Interprets a square [`Matrix`] (e.g. one read from disk) as distances.
    pub fn from_matrix(m: Matrix) -> Result<Self> {
        if m.rows != m.cols {
            return Err(Error::shape("square matrix", format!("{} x {}", m.rows, m.cols)));
        }
        Self::new(m.rows, m.data)
    }

    /// Caller guarantees the invariants.
    pub(crate) fn from_raw(n_items: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n_items * n_items);
        Self { n_items, data }
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_items..(i + 1) * self.n_items]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_items + j]
    }

    /// Copies out the `rows × cols` block selected by two index lists.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Result<Matrix> {
        let n = self.n_items;
        if let Some(&index) = rows.iter().chain(cols).find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index, n_items: n });
        }
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for &r in rows {
            let row = self.row(r);
            data.extend(cols.iter().map(|&c| row[c]));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols: cols.len(),
            data,
        })
    }

    pub fn into_matrix(self) -> Matrix {
        Matrix {
            rows: self.n_items,
            cols: self.n_items,
            data: self.data,
        }
    }
}

/// Per-item rank lists and their inverse position map.
///
/// `order(i)[r]` is the item at 1-based position `r + 1` of list `L_i`;
/// `pos(i, b)` is the 1-based position of `b` in `L_i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankListMatrix {
    n_items: usize,
    order: Vec<u32>,
    pos: Vec<u32>,
}

impl RankListMatrix {
    /// Builds from an order matrix, deriving `pos`. Each row must be a
    /// permutation of `0..n_items` starting with the row's own index.
    pub fn from_order(n_items: usize, order: Vec<u32>) -> Result<Self> {
        if n_items == 0 {
            return Err(Error::EmptyMatrix);
        }
        if n_items > u32::MAX as usize {
            return Err(Error::InvalidParams(format!("{n_items} items exceed u32 indices")));
        }
        if n_items.checked_mul(n_items) != Some(order.len()) {
            return Err(Error::shape(
                format!("{n_items} x {n_items} indices"),
                format!("{} indices", order.len()),
            ));
        }
        let mut pos = vec![0u32; order.len()];
        for (i, (row, pos_row)) in order
            .chunks_exact(n_items)
            .zip(pos.chunks_exact_mut(n_items))
            .enumerate()
        {
            if row[0] as usize != i {
                return Err(Error::InvalidParams(format!(
                    "rank list {i} does not start with itself"
                )));
            }
            for (r, &b) in row.iter().enumerate() {
                let b = b as usize;
                if b >= n_items {
                    return Err(Error::IndexOutOfRange { index: b, n_items });
                }
                if pos_row[b] != 0 {
                    return Err(Error::InvalidParams(format!("rank list {i} repeats item {b}")));
                }
                pos_row[b] = r as u32 + 1;
            }
        }
        Ok(Self { n_items, order, pos })
    }

    pub(crate) fn from_parts(n_items: usize, order: Vec<u32>, pos: Vec<u32>) -> Self {
        Self { n_items, order, pos }
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn order(&self, i: usize) -> &[u32] {
        &self.order[i * self.n_items..(i + 1) * self.n_items]
    }

    pub fn pos_row(&self, i: usize) -> &[u32] {
        &self.pos[i * self.n_items..(i + 1) * self.n_items]
    }

    /// 1-based position of `b` in `L_i`.
    pub fn pos(&self, i: usize, b: usize) -> usize {
        self.pos[i * self.n_items + b] as usize
    }

    /// Re-derives the order matrix from `pos` alone.
    pub fn order_from_pos(&self) -> Vec<u32> {
        let n = self.n_items;
        let mut order = vec![0u32; n * n];
        for (pos_row, out) in self.pos.chunks_exact(n).zip(order.chunks_exact_mut(n)) {
            for (b, &p) in pos_row.iter().enumerate() {
                out[p as usize - 1] = b as u32;
            }
        }
        order
    }

    pub fn order_data(&self) -> &[u32] {
        &self.order
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Query,
    Gallery,
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "query" => Ok(Role::Query),
            "gallery" => Ok(Role::Gallery),
            other => Err(Error::UnknownRole(other.to_string())),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Query => "query",
            Role::Gallery => "gallery",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalRecord {
    pub item_index: usize,
    pub person_id: i64,
    pub camera_id: i64,
    pub role: Role,
}

/// Metadata for every item of the union, sorted by `item_index`, which
/// covers `0..len` exactly once.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalRecords {
    records: Vec<EvalRecord>,
}

impl EvalRecords {
    /// Accepts records in any order; indices must cover `0..len` once each.
    pub fn new(mut records: Vec<EvalRecord>) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.item_index) {
                return Err(Error::DuplicateIndex(r.item_index));
            }
        }
        if let Some(missing) = (0..records.len()).find(|i| !seen.contains(i)) {
            return Err(Error::IndexGap(missing));
        }
        records.sort_by_key(|r| r.item_index);
        Ok(Self { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, index: usize) -> &EvalRecord {
        &self.records[index]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, EvalRecord> {
        self.records.iter()
    }

    /// Item indices with role `Query`, ascending.
    pub fn queries(&self) -> Vec<usize> {
        self.with_role(Role::Query)
    }

    /// Item indices with role `Gallery`, ascending.
    pub fn gallery(&self) -> Vec<usize> {
        self.with_role(Role::Gallery)
    }

    fn with_role(&self, role: Role) -> Vec<usize> {
        self.records
            .iter()
            .filter(|r| r.role == role)
            .map(|r| r.item_index)
            .collect()
    }
}

/// Which distance the re-ranker produces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// `1 − minmax(R)` from the top-K rank-list similarity alone.
    RankDistOnly,
    /// Cross-neighborhood aggregation over the original distances.
    EcnOrigDist,
    /// Cross-neighborhood aggregation over the rank-list distances.
    EcnRankDist,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::RankDistOnly, Method::EcnOrigDist, Method::EcnRankDist];

    pub fn name(self) -> &'static str {
        match self {
            Method::RankDistOnly => "rank-dist",
            Method::EcnOrigDist => "ecn-orig",
            Method::EcnRankDist => "ecn-rank",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown method {s:?}")))
    }
}

/// Re-ranking parameters: `t` first-level neighbors, `q` second-level
/// neighbors per first-level neighbor, and rank-list depth `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EcnParams {
    pub t: usize,
    pub q: usize,
    pub k: usize,
    pub method: Method,
}

impl Default for EcnParams {
    fn default() -> Self {
        Self {
            t: 3,
            q: 8,
            k: 25,
            method: Method::EcnRankDist,
        }
    }
}

impl EcnParams {
    /// Size of the expanded neighbor multiset, `t + t·q`.
    pub fn m(&self) -> usize {
        self.t + self.t * self.q
    }

    pub fn validate(&self, n_items: usize) -> Result<()> {
        if self.t == 0 {
            return Err(Error::InvalidParams("t must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidParams("k must be at least 1".into()));
        }
        check_expansion(self.t, self.q, n_items)
    }
}

/// Neighbor picks come from positions `2..=t+1` and `2..=q+1`, so both
/// must fit below `n_items`, as must the whole multiset.
pub(crate) fn check_expansion(t: usize, q: usize, n_items: usize) -> Result<()> {
    let needed = t + t * q;
    if needed > n_items || t >= n_items || q >= n_items {
        return Err(Error::ParamsTooLarge {
            t,
            q,
            needed: needed.max(t + 1).max(q + 1),
            n_items,
        });
    }
    Ok(())
}
