//! Expanded cross neighborhood (ECN) re-ranking for retrieval.
//!
//! The pipeline runs over the union of query and gallery items:
//!
//! 1. [`distance`]: pairwise squared euclidean (or cosine) distances.
//! 2. [`ranking`]: one rank list per item (in full, or only the leading
//!    entries the later steps read), plus the two-level expanded neighbor
//!    multiset of size `t + t·q`.
//! 3. [`ecn`]: top-K rank-list similarity, its minmax distance, and the
//!    cross-neighborhood aggregation producing query × gallery distances.
//! 4. [`eval`]: CMC and mAP under the single-query cross-camera protocol.
//!
//! [`io`] holds the binary/CSV file formats and [`synth`] the synthetic
//! data generator and a brute-force reference of the whole pipeline.

pub mod bench;
mod buffer;
pub mod distance;
pub mod ecn;
pub mod error;
pub mod eval;
pub mod io;
pub mod ranking;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    validate_feature_matrix, DistanceMatrix, EcnParams, EvalRecord, EvalRecords, FeatureMatrix, Matrix, Method,
    RankListMatrix, Role,
};
