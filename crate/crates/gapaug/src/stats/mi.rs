//! Kraskov–Stögbauer–Grassberger mutual information (variant 1) and its
//! permutation-corrected form.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::{derive_seed, rng_from, tag};
use crate::stats::entropy::{digamma, has_duplicates, jittered};
use crate::stats::neighbors::MaxNormIndex;

/// How real and generated samples are joined for MI estimation.
///
/// Sample-anchored generation strategies keep an explicit correspondence to
/// their source sample (`Aligned`); distribution-level generators are paired
/// by independent random shuffles within the class (`Independent`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingMode {
    Aligned,
    Independent,
}

/// Outcome of a permutation-corrected MI estimation (all values in nats).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MiEstimate {
    pub raw: f64,
    pub baseline: f64,
    /// `max(0, raw - baseline)`.
    pub corrected: f64,
    pub k: usize,
    pub n_pairs: usize,
    pub n_permutations: usize,
}

/// KSG estimator #1 under the max norm, in nats.
///
/// For each joint point the distance to its k-th joint neighbor is taken
/// (the joint metric is the max of the two marginal max-norm distances) and
/// the marginal neighbors strictly inside that radius are counted. Tied
/// points in either marginal are separated by deterministic jitter first.
/// The raw value may be negative; clamping happens downstream.
pub fn ksg_mi(pairs: &[(Vec<f64>, Vec<f64>)], k: usize) -> Result<f64> {
    let n = pairs.len();
    if k == 0 {
        return Err(Error::invalid("neighbor count k must be >= 1"));
    }
    if n <= k {
        return Err(Error::invalid(format!("need more than k={k} pairs, got {n}")));
    }
    let dx = pairs[0].0.len();
    let dy = pairs[0].1.len();
    if dx == 0 || dy == 0 {
        return Err(Error::invalid("marginal dimensions must be positive"));
    }
    for (x, y) in pairs {
        if x.len() != dx || y.len() != dy {
            return Err(Error::invalid("inconsistent marginal dimensions"));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("pairs must be finite"));
        }
    }

    let xs: Vec<Vec<f64>> = pairs.iter().map(|(x, _)| x.clone()).collect();
    let ys: Vec<Vec<f64>> = pairs.iter().map(|(_, y)| y.clone()).collect();
    // Jitter is keyed by the content of each marginal, not by its role, so
    // the estimator stays exactly symmetric under swapping x and y.
    let xs = if has_duplicates(&xs) { jittered(&xs) } else { xs };
    let ys = if has_duplicates(&ys) { jittered(&ys) } else { ys };

    // Chebyshev distance on the concatenation equals the max of the two
    // marginal Chebyshev distances, so one joint index suffices.
    let joint: Vec<Vec<f64>> = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let mut v = Vec::with_capacity(dx + dy);
            v.extend_from_slice(x);
            v.extend_from_slice(y);
            v
        })
        .collect();

    let joint_index = MaxNormIndex::new(joint);
    let x_index = MaxNormIndex::new(xs);
    let y_index = MaxNormIndex::new(ys);

    let mut acc = 0.0;
    for i in 0..n {
        let eps = joint_index.kth_neighbor_dist(i, k);
        let nx = x_index.count_within(i, eps);
        let ny = y_index.count_within(i, eps);
        acc += digamma((nx + 1) as f64) + digamma((ny + 1) as f64);
    }
    Ok(digamma(k as f64) + digamma(n as f64) - acc / n as f64)
}

/// Permutation-corrected MI per the pairing mode.
///
/// * raw: for aligned pairing, one KSG run on the positionally aligned
///   lists; for independent pairing, the mean of `n_perm` KSG runs over
///   fresh random re-pairings.
/// * baseline: mean KSG over `n_perm` random permutations of the y side of
///   the canonical pairing.
/// * corrected: `max(0, raw - baseline)`.
pub fn permutation_corrected_mi(
    x_set: &[Vec<f64>],
    y_set: &[Vec<f64>],
    pairing: PairingMode,
    k: usize,
    n_perm: usize,
    seed: u64,
) -> Result<MiEstimate> {
    if n_perm == 0 {
        return Err(Error::invalid("n_perm must be >= 1"));
    }
    let (canonical_x, canonical_y): (Vec<Vec<f64>>, Vec<Vec<f64>>) = match pairing {
        PairingMode::Aligned => {
            if x_set.len() != y_set.len() {
                return Err(Error::invalid(format!(
                    "aligned pairing needs equal set sizes ({} vs {})",
                    x_set.len(),
                    y_set.len()
                )));
            }
            (x_set.to_vec(), y_set.to_vec())
        }
        PairingMode::Independent => independent_pairing(x_set, y_set, derive_seed(seed, &[tag("pairing"), 0])),
    };
    if canonical_x.len() < k + 2 {
        return Err(Error::invalid(format!(
            "need at least k+2={} pairs after pairing, got {}",
            k + 2,
            canonical_x.len()
        )));
    }

    let zip = |xs: &[Vec<f64>], ys: &[Vec<f64>]| -> Vec<(Vec<f64>, Vec<f64>)> {
        xs.iter().cloned().zip(ys.iter().cloned()).collect()
    };

    let raw = match pairing {
        PairingMode::Aligned => ksg_mi(&zip(&canonical_x, &canonical_y), k)?,
        PairingMode::Independent => {
            let mut sum = 0.0;
            for rep in 0..n_perm {
                let (px, py) =
                    independent_pairing(x_set, y_set, derive_seed(seed, &[tag("pairing"), rep as u64]));
                sum += ksg_mi(&zip(&px, &py), k)?;
            }
            sum / n_perm as f64
        }
    };

    let mut baseline_sum = 0.0;
    for rep in 0..n_perm {
        let mut order: Vec<usize> = (0..canonical_y.len()).collect();
        let mut rng = rng_from(derive_seed(seed, &[tag("perm"), rep as u64]));
        order.shuffle(&mut rng);
        let permuted: Vec<(Vec<f64>, Vec<f64>)> = canonical_x
            .iter()
            .cloned()
            .zip(order.iter().map(|&j| canonical_y[j].clone()))
            .collect();
        baseline_sum += ksg_mi(&permuted, k)?;
    }
    let baseline = baseline_sum / n_perm as f64;

    Ok(MiEstimate {
        raw,
        baseline,
        corrected: (raw - baseline).max(0.0),
        k,
        n_pairs: canonical_x.len(),
        n_permutations: n_perm,
    })
}

/// Shuffle both sets independently, truncate to the shorter length, zip.
fn independent_pairing(
    x_set: &[Vec<f64>],
    y_set: &[Vec<f64>],
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut xi: Vec<usize> = (0..x_set.len()).collect();
    let mut yi: Vec<usize> = (0..y_set.len()).collect();
    let mut rng_x = rng_from(derive_seed(seed, &[tag("x")]));
    let mut rng_y = rng_from(derive_seed(seed, &[tag("y")]));
    xi.shuffle(&mut rng_x);
    yi.shuffle(&mut rng_y);
    let n = x_set.len().min(y_set.len());
    (
        xi[..n].iter().map(|&i| x_set[i].clone()).collect(),
        yi[..n].iter().map(|&i| y_set[i].clone()).collect(),
    )
}
