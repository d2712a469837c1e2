//! Fixed-edge histograms and Jensen–Shannon similarity.
//!
//! Bin edges are frozen from the reference (real-data) coordinate range so
//! the distribution gap stays comparable across augmentation rounds:
//! equal-width bins over the reference range expanded 1% per side,
//! out-of-range mass clamped into the boundary bins, Laplace smoothing
//! before normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 16;
pub const DEFAULT_SMOOTHING: f64 = 1e-6;
const EDGE_PAD_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` ascending edges.
    pub edges: Vec<f64>,
    /// Normalized bin probabilities (sum 1).
    pub probs: Vec<f64>,
}

/// Equal-width edges covering the reference values, padded 1% per side.
pub fn reference_edges(values: &[f64], bins: usize) -> Result<Vec<f64>> {
    if bins == 0 {
        return Err(Error::invalid("bins must be >= 1"));
    }
    if values.is_empty() {
        return Err(Error::invalid("cannot derive edges from no values"));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        if !v.is_finite() {
            return Err(Error::invalid("non-finite value in histogram input"));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = hi - lo;
    let pad = if span > 0.0 {
        span * EDGE_PAD_FRACTION
    } else {
        // Degenerate range: open a symmetric window around the point.
        lo.abs().max(1.0) * EDGE_PAD_FRACTION
    };
    let (lo, hi) = (lo - pad, hi + pad);
    let width = (hi - lo) / bins as f64;
    Ok((0..=bins).map(|i| lo + width * i as f64).collect())
}

/// Histogram of `values` on pre-built edges with Laplace smoothing.
/// Values outside the edge range are counted into the boundary bins.
pub fn histogram_on_edges(values: &[f64], edges: &[f64], smoothing: f64) -> Result<Histogram> {
    if edges.len() < 2 {
        return Err(Error::invalid("need at least two edges"));
    }
    let bins = edges.len() - 1;
    let lo = edges[0];
    let width = (edges[bins] - lo) / bins as f64;
    if width <= 0.0 {
        return Err(Error::invalid("edges must be strictly increasing"));
    }
    let mut counts = vec![smoothing; bins];
    for &v in values {
        if !v.is_finite() {
            return Err(Error::invalid("non-finite value in histogram input"));
        }
        let raw = ((v - lo) / width).floor();
        let idx = (raw.max(0.0) as usize).min(bins - 1);
        counts[idx] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    Ok(Histogram {
        edges: edges.to_vec(),
        probs: counts.iter().map(|c| c / total).collect(),
    })
}

fn check_histogram(h: &Histogram) -> Result<()> {
    let sum: f64 = h.probs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("histogram sums to {sum}, not 1")));
    }
    if h.probs.len() + 1 != h.edges.len() {
        return Err(Error::invalid("histogram bin/edge count mismatch"));
    }
    Ok(())
}

/// Jensen–Shannon similarity: `1 - JSD(p, q)` where JSD is the
/// Jensen–Shannon *distance* (square root of the base-2 divergence), so the
/// result lies in [0, 1] with 1 iff the histograms are bin-wise equal.
pub fn js_similarity(p: &Histogram, q: &Histogram) -> Result<f64> {
    if p.edges.len() != q.edges.len() || p.edges.iter().zip(&q.edges).any(|(a, b)| a != b) {
        return Err(Error::invalid("histograms do not share bin edges"));
    }
    check_histogram(p)?;
    check_histogram(q)?;

    let mut divergence = 0.0;
    for (&a, &b) in p.probs.iter().zip(&q.probs) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            divergence += 0.5 * a * (a / m).log2();
        }
        if b > 0.0 {
            divergence += 0.5 * b * (b / m).log2();
        }
    }
    let divergence = divergence.clamp(0.0, 1.0);
    Ok(1.0 - divergence.sqrt())
}
