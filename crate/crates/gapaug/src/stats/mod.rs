//! Statistical estimators: per-class PCA embeddings, KSG mutual
//! information with permutation correction, Kozachenko–Leonenko entropy,
//! and Jensen–Shannon histogram similarity.
//!
//! All operations are pure given their seed; nothing here holds shared
//! mutable state, so estimation can run data-parallel across classes and
//! generators.

pub mod embedding;
pub mod entropy;
pub mod histogram;
pub mod mi;
pub mod neighbors;

pub use embedding::{fit_class_embedding, ClassEmbedding};
pub use entropy::{digamma, kl_entropy};
pub use histogram::{histogram_on_edges, js_similarity, reference_edges, Histogram};
pub use mi::{ksg_mi, permutation_corrected_mi, MiEstimate, PairingMode};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Estimator constants shared by capability modeling and gap computation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StatsConfig {
    /// Neighbor count for KSG and Kozachenko–Leonenko.
    pub k: usize,
    /// Number of permutations (and re-pairings) for baseline correction.
    pub n_perm: usize,
    /// Histogram bins per embedding coordinate.
    pub bins: usize,
    /// PCA explained-variance threshold.
    pub variance_threshold: f64,
    /// Cap on the embedding dimension.
    pub d_max: usize,
    /// Samples generated per (generator, class) capability probe.
    pub probe_count: usize,
    /// Stability constant used wherever a denominator could vanish.
    pub eps: f64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            k: 3,
            n_perm: 10,
            bins: histogram::DEFAULT_BINS,
            variance_threshold: 0.95,
            d_max: 10,
            probe_count: 200,
            eps: 1e-8,
        }
    }
}

impl StatsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("stats.k must be >= 1".into()));
        }
        if self.n_perm == 0 {
            return Err(Error::Config("stats.n_perm must be >= 1".into()));
        }
        if self.bins == 0 {
            return Err(Error::Config("stats.bins must be >= 1".into()));
        }
        if !(self.variance_threshold > 0.0 && self.variance_threshold <= 1.0) {
            return Err(Error::Config(
                "stats.variance_threshold must be in (0, 1]".into(),
            ));
        }
        if self.d_max == 0 {
            return Err(Error::Config("stats.d_max must be >= 1".into()));
        }
        if self.probe_count < self.k + 2 {
            return Err(Error::Config(format!(
                "stats.probe_count must be >= k+2 = {}",
                self.k + 2
            )));
        }
        if self.eps <= 0.0 {
            return Err(Error::Config("stats.eps must be positive".into()));
        }
        Ok(())
    }
}
