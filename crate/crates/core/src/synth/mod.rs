//! Synthetic data and brute-force references for verification.

mod clusters;
mod oracle;
mod rng;

pub use clusters::{generate_clusters, ClusterSpec};
pub use oracle::{oracle_ecn, ORACLE_LIMIT};
pub use rng::SplitMix64;
