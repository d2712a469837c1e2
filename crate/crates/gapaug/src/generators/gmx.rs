//! Exploratory mixture generator: fit a diagonal-covariance Gaussian
//! mixture in the class PCA space, sample latent points, and map them back
//! to window space. Distribution-level by construction, so it pairs
//! independently and records no source window.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::TimeWindow;
use crate::error::{Error, Result};
use crate::generators::{check_pool, generated_window, Generator};
use crate::seeding::{derive_seed, rng_from, tag};
use crate::stats::{fit_class_embedding, PairingMode};

const EM_MAX_ITERS: usize = 100;
const EM_TOL: f64 = 1e-6;
/// Relative variance floor below which a component counts as collapsed.
const SINGULAR_VAR: f64 = 1e-10;

pub struct GmxGenerator {
    pub n_components: usize,
    pub variance_threshold: f64,
    pub d_max: usize,
}

impl Default for GmxGenerator {
    fn default() -> Self {
        GmxGenerator {
            n_components: 3,
            variance_threshold: 0.95,
            d_max: 10,
        }
    }
}

struct Mixture {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    vars: Vec<Vec<f64>>,
}

fn global_variance(points: &[Vec<f64>]) -> Vec<f64> {
    let d = points[0].len();
    let n = points.len() as f64;
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; d];
    for p in points {
        for ((v, m), x) in var.iter_mut().zip(&mean).zip(p) {
            *v += (x - m) * (x - m) / n;
        }
    }
    var
}

/// Single-Gaussian closed form; the terminal fallback.
fn single_gaussian(points: &[Vec<f64>]) -> Mixture {
    let d = points[0].len();
    let n = points.len() as f64;
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; d];
    for p in points {
        for ((v, m), x) in var.iter_mut().zip(&mean).zip(p) {
            *v += (x - m) * (x - m) / n;
        }
    }
    Mixture {
        weights: vec![1.0],
        means: vec![mean],
        vars: vec![var],
    }
}

fn log_gaussian_diag(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((xi, mi), vi) in x.iter().zip(mean).zip(var) {
        acc += -0.5 * ((xi - mi) * (xi - mi) / vi + vi.ln() + (2.0 * std::f64::consts::PI).ln());
    }
    acc
}

/// One EM attempt; `Err(())` signals a collapsed component so the caller
/// can retry with fewer components.
fn fit_em(
    points: &[Vec<f64>],
    m: usize,
    rng: &mut ChaCha8Rng,
) -> std::result::Result<Mixture, ()> {
    let n = points.len();
    let d = points[0].len();
    let gvar = global_variance(points);
    let var_scale: f64 = gvar.iter().sum::<f64>().max(1e-12) / d as f64;

    // Init: distinct data points as means, global variance everywhere.
    let mut chosen: Vec<usize> = Vec::with_capacity(m);
    while chosen.len() < m {
        let i = rng.gen_range(0..n);
        if !chosen.contains(&i) {
            chosen.push(i);
        }
    }
    let mut mix = Mixture {
        weights: vec![1.0 / m as f64; m],
        means: chosen.iter().map(|&i| points[i].clone()).collect(),
        vars: vec![gvar.iter().map(|v| v.max(var_scale * 1e-6)).collect(); m],
    };

    let mut prev_ll = f64::NEG_INFINITY;
    let mut resp = vec![vec![0.0f64; m]; n];
    for _ in 0..EM_MAX_ITERS {
        // E-step with log-sum-exp.
        let mut ll = 0.0;
        for (i, p) in points.iter().enumerate() {
            let logs: Vec<f64> = (0..m)
                .map(|j| mix.weights[j].ln() + log_gaussian_diag(p, &mix.means[j], &mix.vars[j]))
                .collect();
            let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = logs.iter().map(|l| (l - max).exp()).sum();
            ll += max + sum.ln();
            for j in 0..m {
                resp[i][j] = (logs[j] - max).exp() / sum;
            }
        }

        // M-step.
        for j in 0..m {
            let nj: f64 = resp.iter().map(|r| r[j]).sum();
            if !nj.is_finite() || nj < 1e-6 {
                return Err(()); // empty component
            }
            mix.weights[j] = nj / n as f64;
            let mut mean = vec![0.0; d];
            for (r, p) in resp.iter().zip(points) {
                for (mu, x) in mean.iter_mut().zip(p) {
                    *mu += r[j] * x / nj;
                }
            }
            let mut var = vec![0.0; d];
            for (r, p) in resp.iter().zip(points) {
                for ((v, mu), x) in var.iter_mut().zip(&mean).zip(p) {
                    *v += r[j] * (x - mu) * (x - mu) / nj;
                }
            }
            if var.iter().any(|&v| !v.is_finite() || v < var_scale * SINGULAR_VAR) {
                return Err(()); // collapsed variance
            }
            mix.means[j] = mean;
            mix.vars[j] = var;
        }

        if (ll - prev_ll).abs() < EM_TOL * (1.0 + ll.abs()) {
            break;
        }
        prev_ll = ll;
    }
    Ok(mix)
}

fn sample_standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(1e-300..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

impl Generator for GmxGenerator {
    fn id(&self) -> &str {
        "gmx"
    }

    fn pairing_mode(&self) -> PairingMode {
        PairingMode::Independent
    }

    fn generate(
        &self,
        class_id: usize,
        count: usize,
        real: &[&TimeWindow],
        round: u32,
        seed: u64,
    ) -> Result<Vec<TimeWindow>> {
        check_pool(self.id(), real, 2)?;
        if count == 0 {
            return Ok(Vec::new());
        }
        let embedding = fit_class_embedding(real, self.variance_threshold, self.d_max)
            .map_err(|e| Error::Generator {
                id: self.id().to_string(),
                msg: e.to_string(),
            })?;
        let coords: Vec<Vec<f64>> = real
            .iter()
            .map(|w| embedding.transform(w))
            .collect::<Result<_>>()?;

        let mut m = self.n_components.min(real.len().saturating_sub(1)).max(1);
        if m < self.n_components {
            log::warn!(
                "gmx: class {class_id} has {} windows, reducing components {} -> {m}",
                real.len(),
                self.n_components
            );
        }
        let mut fit_rng = rng_from(derive_seed(seed, &[tag("gmx-fit")]));
        let mix = loop {
            if m <= 1 {
                break single_gaussian(&coords);
            }
            match fit_em(&coords, m, &mut fit_rng) {
                Ok(mix) => break mix,
                Err(()) => {
                    log::warn!("gmx: singular component at m={m}, retrying with {}", m - 1);
                    m -= 1;
                }
            }
        };

        let mut rng = rng_from(derive_seed(seed, &[tag("gmx-sample")]));
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let u: f64 = rng.gen_range(0.0..1.0);
            let mut acc = 0.0;
            let mut comp = mix.weights.len() - 1;
            for (j, w) in mix.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    comp = j;
                    break;
                }
            }
            let z: Vec<f64> = mix.means[comp]
                .iter()
                .zip(&mix.vars[comp])
                .map(|(mu, v)| mu + v.sqrt() * sample_standard_normal(&mut rng))
                .collect();
            let values = embedding.inverse(&z);
            out.push(generated_window(
                real[0],
                values,
                class_id,
                self.id(),
                round,
                None,
            )?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::testutil::synthetic_dataset;
    use crate::dataset::Provenance;
    use crate::generators::testutil::assert_contract;
    use crate::stats::{permutation_corrected_mi, PairingMode};

    #[test]
    fn contract_holds() {
        let ds = synthetic_dataset(2, 30, 5, 2, 16);
        let real = ds.class_windows(0);
        assert_contract(&GmxGenerator::default(), &real, 0);
    }

    #[test]
    fn empty_request_yields_empty_list() {
        let ds = synthetic_dataset(1, 10, 4, 2, 17);
        let real = ds.class_windows(0);
        let out = GmxGenerator::default().generate(0, 0, &real, 0, 1).unwrap();
        assert!(out.is_empty());
    }

    /// Law of large numbers against the closed-form single-Gaussian fit:
    /// the generated mean converges to the class sample mean.
    #[test]
    fn single_component_mean_converges_to_sample_mean() {
        let ds = synthetic_dataset(1, 60, 4, 3, 18);
        let real = ds.class_windows(0);
        let gen = GmxGenerator {
            n_components: 1,
            variance_threshold: 0.999,
            d_max: 12,
        };
        let count = 1000;
        let out = gen.generate(0, count, &real, 0, 5).unwrap();

        let d = real[0].values.len();
        let mut real_mean = vec![0.0; d];
        for w in &real {
            for (m, v) in real_mean.iter_mut().zip(&w.values) {
                *m += v / real.len() as f64;
            }
        }
        let mut gen_mean = vec![0.0; d];
        for w in &out {
            for (m, v) in gen_mean.iter_mut().zip(&w.values) {
                *m += v / count as f64;
            }
        }
        let mut real_var = vec![0.0; d];
        for w in &real {
            for ((v, m), x) in real_var.iter_mut().zip(&real_mean).zip(&w.values) {
                *v += (x - m) * (x - m) / real.len() as f64;
            }
        }
        let diff: f64 = gen_mean
            .iter()
            .zip(&real_mean)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let stderr = (real_var.iter().sum::<f64>() / count as f64).sqrt();
        assert!(diff <= 3.0 * stderr + 1e-9, "mean diff {diff} > 3x stderr {stderr}");
    }

    /// Outputs carry no dependence on any real-sample ordering: the
    /// permutation-corrected MI under independent pairing stays near zero.
    #[test]
    fn outputs_are_decorrelated_from_sample_order() {
        let ds = synthetic_dataset(1, 120, 5, 2, 19);
        let real = ds.class_windows(0);
        let out = GmxGenerator::default().generate(0, 120, &real, 0, 6).unwrap();

        let emb = fit_class_embedding(&real, 0.95, 10).unwrap();
        let real_z: Vec<Vec<f64>> = real.iter().map(|w| emb.transform(w).unwrap()).collect();
        let gen_z: Vec<Vec<f64>> = out.iter().map(|w| emb.transform(w).unwrap()).collect();
        let est =
            permutation_corrected_mi(&real_z, &gen_z, PairingMode::Independent, 3, 10, 7)
                .unwrap();
        assert!(est.corrected <= 0.05, "{est:?}");
    }

    #[test]
    fn identical_windows_degrade_gracefully() {
        let w = TimeWindow::new(vec![1.0; 6], 3, 2, 0, "g", Provenance::Real).unwrap();
        let pool: Vec<TimeWindow> = (0..5).map(|_| w.clone()).collect();
        let real: Vec<&TimeWindow> = pool.iter().collect();
        let out = GmxGenerator::default().generate(0, 4, &real, 0, 8).unwrap();
        assert_eq!(out.len(), 4);
        for o in &out {
            assert!(o.values.iter().all(|v| v.is_finite()));
        }
    }
}
