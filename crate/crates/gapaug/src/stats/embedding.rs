//! Per-class embedding: PCA-based dimensionality reduction followed by
//! per-coordinate standardization, fitted on real data only.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::TimeWindow;
use crate::error::{Error, Result};

/// Eigenvalues below `max_eig * RANK_TOL` are treated as zero rank.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassEmbedding {
    pub class_id: usize,
    /// Mean of the flattened training windows (length T*F).
    pub mean: Vec<f64>,
    /// Orthonormal principal axes, one row per retained component.
    pub basis: Vec<Vec<f64>>,
    /// Per-component standard deviation of the projected training data.
    pub scale: Vec<f64>,
    /// Set when the class had zero variance (all windows identical).
    pub degenerate: bool,
}

impl ClassEmbedding {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    /// Map a window into the embedding space:
    /// `scale^-1 ⊙ (basis · (vec(window) − mean))`.
    pub fn transform(&self, window: &TimeWindow) -> Result<Vec<f64>> {
        self.transform_flat(window.flat())
    }

    pub fn transform_flat(&self, flat: &[f64]) -> Result<Vec<f64>> {
        if flat.len() != self.mean.len() {
            return Err(Error::invalid(format!(
                "window has {} values, embedding expects {}",
                flat.len(),
                self.mean.len()
            )));
        }
        Ok(self
            .basis
            .iter()
            .zip(&self.scale)
            .map(|(axis, s)| {
                let proj: f64 = axis
                    .iter()
                    .zip(flat)
                    .zip(&self.mean)
                    .map(|((a, x), m)| a * (x - m))
                    .sum();
                proj / s
            })
            .collect())
    }

    /// Minimum-norm preimage of an embedding-space point:
    /// `mean + basisᵀ · (scale ⊙ z)`.
    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for ((axis, s), &zq) in self.basis.iter().zip(&self.scale).zip(z) {
            for (o, a) in out.iter_mut().zip(axis) {
                *o += a * s * zq;
            }
        }
        out
    }
}

/// Fit a class embedding on same-class windows.
///
/// The retained dimensionality is the smallest that captures at least
/// `variance_threshold` of the variance, capped at `d_max` and at the data
/// rank. Zero-variance input yields a degenerate single-axis embedding with
/// unit scale.
pub fn fit_class_embedding(
    windows: &[&TimeWindow],
    variance_threshold: f64,
    d_max: usize,
) -> Result<ClassEmbedding> {
    if windows.len() < 2 {
        return Err(Error::invalid("need at least 2 windows to fit an embedding"));
    }
    if !(variance_threshold > 0.0 && variance_threshold <= 1.0) {
        return Err(Error::invalid("variance_threshold must be in (0, 1]"));
    }
    if d_max == 0 {
        return Err(Error::invalid("d_max must be >= 1"));
    }
    let class_id = windows[0].label;
    let dim = windows[0].flat().len();
    if windows
        .iter()
        .any(|w| w.label != class_id || w.flat().len() != dim)
    {
        return Err(Error::invalid(
            "embedding inputs must share class and shape",
        ));
    }

    let n = windows.len();
    let mut mean = vec![0.0f64; dim];
    for w in windows {
        for (m, v) in mean.iter_mut().zip(w.flat()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    // Centered data matrix, n x dim.
    let centered = DMatrix::from_fn(n, dim, |i, j| windows[i].flat()[j] - mean[j]);

    // Eigendecompose whichever Gram form is smaller: X^T X (dim x dim) or
    // X X^T (n x n); both yield the principal axes.
    let use_feature_space = dim <= n;
    let (eigvals, axes): (Vec<f64>, Vec<Vec<f64>>) = if use_feature_space {
        let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
        let eig = cov.symmetric_eigen();
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let vals = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let axes = order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
            .collect();
        (vals, axes)
    } else {
        let gram = &centered * centered.transpose();
        let eig = gram.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let max_eig = eig.eigenvalues[order[0]].max(0.0);
        let mut vals = Vec::new();
        let mut axes: Vec<Vec<f64>> = Vec::new();
        for &i in &order {
            let sigma2 = eig.eigenvalues[i].max(0.0);
            if sigma2 <= max_eig * RANK_TOL {
                vals.push(0.0);
                continue;
            }
            // Lift the Gram eigenvector into feature space.
            let u = eig.eigenvectors.column(i);
            let mut axis = vec![0.0f64; dim];
            for r in 0..n {
                let coeff = u[r];
                for (a, x) in axis.iter_mut().zip(centered.row(r).iter()) {
                    *a += coeff * x;
                }
            }
            // Re-orthonormalize against previously accepted axes; repeated
            // eigenvalues can leave the lifted vectors slightly skew.
            for prev in &axes {
                let dot: f64 = axis.iter().zip(prev).map(|(a, b)| a * b).sum();
                for (a, b) in axis.iter_mut().zip(prev) {
                    *a -= dot * b;
                }
            }
            let norm: f64 = axis.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm <= 0.0 {
                vals.push(0.0);
                continue;
            }
            for a in &mut axis {
                *a /= norm;
            }
            vals.push(sigma2 / (n as f64 - 1.0));
            axes.push(axis);
        }
        (vals, axes)
    };

    let total: f64 = eigvals.iter().sum();
    let max_eig = eigvals.first().copied().unwrap_or(0.0);
    if total <= 0.0 || max_eig <= 0.0 {
        // All windows identical: flag degenerate, use a unit placeholder axis.
        let mut axis = vec![0.0; dim];
        axis[0] = 1.0;
        return Ok(ClassEmbedding {
            class_id,
            mean,
            basis: vec![axis],
            scale: vec![1.0],
            degenerate: true,
        });
    }

    let rank = eigvals
        .iter()
        .take_while(|&&v| v > max_eig * RANK_TOL)
        .count()
        .max(1);
    let cap = d_max.min(rank).min(axes.len().max(1));
    let mut retained = cap;
    let mut cumulative = 0.0;
    for (i, v) in eigvals.iter().take(cap).enumerate() {
        cumulative += v;
        if cumulative / total >= variance_threshold {
            retained = i + 1;
            break;
        }
    }

    let basis: Vec<Vec<f64>> = axes.into_iter().take(retained).collect();
    // Per-component sample std of the projected training data (ddof = 1);
    // recomputed from the data rather than trusting the eigenvalues.
    let mut scale = Vec::with_capacity(basis.len());
    for axis in &basis {
        let projections: Vec<f64> = (0..n)
            .map(|i| {
                axis.iter()
                    .zip(centered.row(i).iter())
                    .map(|(a, x)| a * x)
                    .sum()
            })
            .collect();
        let var: f64 =
            projections.iter().map(|p| p * p).sum::<f64>() / (n as f64 - 1.0);
        scale.push(if var > 0.0 { var.sqrt() } else { 1.0 });
    }

    Ok(ClassEmbedding {
        class_id,
        mean,
        basis,
        scale,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Provenance, TimeWindow};
    use rand::Rng;

    fn window(values: Vec<f64>, label: usize) -> TimeWindow {
        let len = values.len();
        TimeWindow::new(values, len, 1, label, "g", Provenance::Real).unwrap()
    }

    fn fit<'a>(ws: &'a [TimeWindow], thr: f64, d_max: usize) -> ClassEmbedding {
        let refs: Vec<&TimeWindow> = ws.iter().collect();
        fit_class_embedding(&refs, thr, d_max).unwrap()
    }

    /// Cyclic Jacobi eigensolver for symmetric matrices; the independent
    /// oracle for the PCA implementation.
    fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
        let n = a.len();
        for _ in 0..100 {
            let mut off = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    off += a[i][j] * a[i][j];
                }
            }
            if off < 1e-24 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[p][q].abs() < 1e-30 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut vals: Vec<f64> = (0..n).map(|i| a[i][i].max(0.0)).collect();
        vals.sort_by(|x, y| y.partial_cmp(x).unwrap());
        vals
    }

    #[test]
    fn identical_windows_are_degenerate() {
        let ws: Vec<TimeWindow> = (0..3).map(|_| window(vec![1.0, 2.0, 3.0], 0)).collect();
        let emb = fit(&ws, 0.95, 10);
        assert!(emb.degenerate);
        assert_eq!(emb.dim(), 1);
        assert_eq!(emb.scale, vec![1.0]);
        assert_eq!(emb.transform(&ws[0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn exact_planar_data_needs_two_components() {
        let mut rng = crate::seeding::rng_from(40);
        let a = [1.0, 0.0, 1.0, 0.0];
        let b = [0.0, 1.0, 0.0, -1.0];
        let ws: Vec<TimeWindow> = (0..30)
            .map(|_| {
                let (u, v): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                window(
                    (0..4).map(|j| 5.0 + u * a[j] + v * b[j]).collect(),
                    0,
                )
            })
            .collect();
        let emb = fit(&ws, 0.99, 10);
        assert_eq!(emb.dim(), 2);
    }

    #[test]
    fn class_mean_maps_to_zero_and_coords_are_standardized() {
        let mut rng = crate::seeding::rng_from(41);
        let ws: Vec<TimeWindow> = (0..80)
            .map(|_| window((0..6).map(|_| rng.gen_range(-2.0..2.0)).collect(), 1))
            .collect();
        let emb = fit(&ws, 0.95, 6);

        let mean_window = window(emb.mean.clone(), 1);
        let z0 = emb.transform(&mean_window).unwrap();
        assert!(z0.iter().all(|v| v.abs() < 1e-10));

        let coords: Vec<Vec<f64>> = ws.iter().map(|w| emb.transform(w).unwrap()).collect();
        for q in 0..emb.dim() {
            let mean: f64 = coords.iter().map(|z| z[q]).sum::<f64>() / coords.len() as f64;
            let var: f64 = coords
                .iter()
                .map(|z| (z[q] - mean) * (z[q] - mean))
                .sum::<f64>()
                / (coords.len() as f64 - 1.0);
            assert!(mean.abs() < 1e-8, "coordinate {q} mean {mean}");
            assert!((var.sqrt() - 1.0).abs() < 1e-6, "coordinate {q} std {}", var.sqrt());
        }
    }

    #[test]
    fn transform_is_deterministic_and_shape_checked() {
        let mut rng = crate::seeding::rng_from(42);
        let ws: Vec<TimeWindow> = (0..10)
            .map(|_| window((0..4).map(|_| rng.gen_range(0.0..1.0)).collect(), 0))
            .collect();
        let emb = fit(&ws, 0.9, 3);
        assert_eq!(
            emb.transform(&ws[3]).unwrap(),
            emb.transform(&ws[3]).unwrap()
        );
        let bad = window(vec![0.0; 5], 0);
        assert!(emb.transform(&bad).is_err());
    }

    #[test]
    fn basis_rows_are_orthonormal_both_routes() {
        let mut rng = crate::seeding::rng_from(43);
        // Feature-space route: n > dim.
        let wide: Vec<TimeWindow> = (0..50)
            .map(|_| window((0..6).map(|_| rng.gen_range(-1.0..1.0)).collect(), 0))
            .collect();
        // Gram route: n < dim.
        let tall: Vec<TimeWindow> = (0..12)
            .map(|_| window((0..40).map(|_| rng.gen_range(-1.0..1.0)).collect(), 0))
            .collect();
        for (ws, d_max) in [(wide, 6), (tall, 8)] {
            let emb = fit(&ws, 0.999, d_max);
            for i in 0..emb.dim() {
                for j in 0..emb.dim() {
                    let dot: f64 = emb.basis[i]
                        .iter()
                        .zip(&emb.basis[j])
                        .map(|(a, b)| a * b)
                        .sum();
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (dot - expected).abs() < 1e-8,
                        "basis[{i}]·basis[{j}] = {dot}"
                    );
                }
            }
        }
    }

    #[test]
    fn retained_dimension_matches_jacobi_oracle() {
        let mut rng = crate::seeding::rng_from(44);
        // 259 windows of shape 15x6 with correlated coordinates, like the
        // real sensor layout.
        let dim = 15 * 6;
        let ws: Vec<TimeWindow> = (0..259)
            .map(|_| {
                let drivers: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let values: Vec<f64> = (0..dim)
                    .map(|j| {
                        let mut v = 0.02 * rng.gen_range(-1.0..1.0);
                        for (a, d) in drivers.iter().enumerate() {
                            v += d * ((a + 1) as f64 * j as f64 / dim as f64).cos();
                        }
                        v
                    })
                    .collect();
                TimeWindow::new(values, 15, 6, 0, "g", Provenance::Real).unwrap()
            })
            .collect();
        let threshold = 0.95;
        let d_max = 10;
        let emb = fit(&ws, threshold, d_max);
        assert!(emb.dim() >= 1 && emb.dim() <= d_max);

        // Oracle: full covariance spectrum via Jacobi rotations.
        let n = ws.len();
        let mut mean = vec![0.0; dim];
        for w in &ws {
            for (m, v) in mean.iter_mut().zip(w.flat()) {
                *m += v / n as f64;
            }
        }
        let mut cov = vec![vec![0.0; dim]; dim];
        for w in &ws {
            let c: Vec<f64> = w.flat().iter().zip(&mean).map(|(v, m)| v - m).collect();
            for i in 0..dim {
                for j in i..dim {
                    cov[i][j] += c[i] * c[j] / (n as f64 - 1.0);
                }
            }
        }
        for i in 0..dim {
            for j in 0..i {
                cov[i][j] = cov[j][i];
            }
        }
        let spectrum = jacobi_eigenvalues(cov);
        let total: f64 = spectrum.iter().sum();
        let mut cumulative = 0.0;
        let mut oracle_d = d_max;
        for (i, v) in spectrum.iter().take(d_max).enumerate() {
            cumulative += v;
            if cumulative / total >= threshold {
                oracle_d = i + 1;
                break;
            }
        }
        assert_eq!(emb.dim(), oracle_d);

        // Captured variance must clear the threshold unless capped at d_max.
        let captured: f64 = spectrum.iter().take(emb.dim()).sum();
        assert!(captured / total >= threshold || emb.dim() == d_max);
    }

    #[test]
    fn inverse_recovers_projected_points_on_full_rank_data() {
        let mut rng = crate::seeding::rng_from(45);
        let ws: Vec<TimeWindow> = (0..30)
            .map(|_| window((0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(), 0))
            .collect();
        let emb = fit(&ws, 1.0, 3);
        assert_eq!(emb.dim(), 3);
        for w in ws.iter().take(5) {
            let z = emb.transform(w).unwrap();
            let back = emb.inverse(&z);
            for (a, b) in back.iter().zip(w.flat()) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }
}
