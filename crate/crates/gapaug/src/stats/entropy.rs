//! Kozachenko–Leonenko differential entropy and the digamma function.

use rand::Rng;

use crate::error::{Error, Result};
use crate::seeding::{hash_vectors, rng_from};
use crate::stats::neighbors::MaxNormIndex;

/// Digamma via the ascending recurrence plus the asymptotic series.
/// Accurate to ~1e-12 for x > 0, which is all the estimators need.
pub fn digamma(x: f64) -> f64 {
    assert!(x > 0.0, "digamma requires positive argument");
    let mut x = x;
    let mut result = 0.0;
    while x < 6.0 {
        result -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    result += x.ln() - 0.5 * inv
        - inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)));
    result
}

/// Amplitude of the deterministic tie-breaking jitter.
pub(crate) const JITTER_AMPLITUDE: f64 = 1e-10;

/// True if the set contains two bitwise-identical vectors.
pub(crate) fn has_duplicates(points: &[Vec<f64>]) -> bool {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&points[a], &points[b]);
        for (x, y) in pa.iter().zip(pb) {
            match x.partial_cmp(y) {
                Some(std::cmp::Ordering::Equal) | None => continue,
                Some(o) => return o,
            }
        }
        std::cmp::Ordering::Equal
    });
    order.windows(2).any(|w| points[w[0]] == points[w[1]])
}

/// Add uniform jitter in (-amplitude, amplitude) seeded purely by the data
/// content, so the perturbation is a deterministic function of the inputs.
pub(crate) fn jittered(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut rng = rng_from(hash_vectors(points));
    points
        .iter()
        .map(|p| {
            p.iter()
                .map(|&x| x + rng.gen_range(-JITTER_AMPLITUDE..JITTER_AMPLITUDE))
                .collect()
        })
        .collect()
}

/// Kozachenko–Leonenko k-NN differential entropy in nats under the max norm.
///
/// H = psi(n) - psi(k) + d ln 2 + (d/n) sum_i ln r_i, where r_i is the
/// distance to the k-th nearest neighbor and 2^d is the volume of the unit
/// max-norm ball. Tied points are separated by deterministic jitter first.
pub fn kl_entropy(points: &[Vec<f64>], k: usize) -> Result<f64> {
    let n = points.len();
    if k == 0 {
        return Err(Error::invalid("entropy neighbor count k must be >= 1"));
    }
    if n <= k {
        return Err(Error::invalid(format!(
            "need more than k={k} points, got {n}"
        )));
    }
    let dims = points[0].len();
    if dims == 0 || points.iter().any(|p| p.len() != dims) {
        return Err(Error::invalid("points must share a positive dimension"));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("points must be finite"));
    }

    let owned;
    let pts: &[Vec<f64>] = if has_duplicates(points) {
        owned = jittered(points);
        &owned
    } else {
        points
    };

    let index = MaxNormIndex::new(pts.to_vec());
    let mut log_sum = 0.0;
    for i in 0..n {
        let r = index.kth_neighbor_dist(i, k);
        if r <= 0.0 {
            return Err(Error::invalid(
                "zero k-NN distance survived jitter; inputs are pathological",
            ));
        }
        log_sum += r.ln();
    }
    let d = dims as f64;
    let h = digamma(n as f64) - digamma(k as f64)
        + d * std::f64::consts::LN_2
        + d * log_sum / n as f64;
    if !h.is_finite() {
        return Err(Error::invalid("entropy estimate is not finite"));
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    #[test]
    fn digamma_matches_known_values() {
        assert!((digamma(1.0) + EULER_GAMMA).abs() < 1e-10);
        assert!((digamma(2.0) - (1.0 - EULER_GAMMA)).abs() < 1e-10);
        assert!((digamma(0.5) + EULER_GAMMA + 2.0 * std::f64::consts::LN_2).abs() < 1e-10);
        // psi(x+1) = psi(x) + 1/x
        for x in [0.3, 1.7, 4.2, 11.0] {
            assert!((digamma(x + 1.0) - digamma(x) - 1.0 / x).abs() < 1e-10);
        }
    }

    #[test]
    fn uniform_entropy_near_zero() {
        let mut rng = crate::seeding::rng_from(5);
        let pts: Vec<Vec<f64>> = (0..2000).map(|_| vec![rng.gen_range(0.0..1.0)]).collect();
        let h = kl_entropy(&pts, 3).unwrap();
        assert!(h.abs() <= 0.1, "H(U(0,1)) estimate {h}");
    }

    #[test]
    fn gaussian_entropy_near_analytic() {
        let mut rng = crate::seeding::rng_from(6);
        let mut normal = || {
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };
        let pts: Vec<Vec<f64>> = (0..2000).map(|_| vec![normal()]).collect();
        let h = kl_entropy(&pts, 3).unwrap();
        let expected = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        assert!((h - expected).abs() <= 0.1, "H(N(0,1)) estimate {h}");
    }

    #[test]
    fn scaling_adds_log_of_scale() {
        let mut rng = crate::seeding::rng_from(7);
        let base: Vec<Vec<f64>> = (0..2000).map(|_| vec![rng.gen_range(0.0..1.0)]).collect();
        let scaled: Vec<Vec<f64>> = base.iter().map(|p| vec![p[0] * 2.0]).collect();
        let h1 = kl_entropy(&base, 3).unwrap();
        let h2 = kl_entropy(&scaled, 3).unwrap();
        assert!(
            (h2 - h1 - std::f64::consts::LN_2).abs() <= 0.1,
            "scaling law violated: {h1} vs {h2}"
        );
    }

    #[test]
    fn duplicates_take_the_jitter_path_and_stay_finite() {
        let pts: Vec<Vec<f64>> = (0..50).map(|i| vec![(i % 5) as f64]).collect();
        let h = kl_entropy(&pts, 3).unwrap();
        assert!(h.is_finite());
        // Deterministic across calls.
        assert_eq!(h, kl_entropy(&pts, 3).unwrap());
    }

    #[test]
    fn too_few_points_is_an_error() {
        let pts = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(kl_entropy(&pts, 3).is_err());
    }
}
