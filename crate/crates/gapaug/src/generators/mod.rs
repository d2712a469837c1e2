//! Generation strategies behind a uniform contract.
//!
//! Sample-anchored strategies (recursive interpolation, segment warping,
//! alignment warping, plain copying) declare aligned pairing and record the
//! source window they were anchored to. The exploratory mixture generator
//! declares independent pairing and records no source.

mod dtw_warp;
mod gmx;
mod rim;
mod subprocess;
mod tsw;

pub use dtw_warp::{dtw_path, DtwWarpGenerator};
pub use gmx::GmxGenerator;
pub use rim::RimGenerator;
pub use subprocess::SubprocessGenerator;
pub use tsw::TswGenerator;

pub(crate) use subprocess::run_with_timeout;

use crate::dataset::{Provenance, TimeWindow};
use crate::error::{Error, Result};
use crate::stats::PairingMode;

/// Uniform generation contract.
///
/// Implementations must honor the requested count exactly, be deterministic
/// per seed, produce finite values of the input shape, label outputs with
/// the requested class, and stamp provenance (generator id, round, and the
/// source index for aligned generators).
pub trait Generator: Send + Sync {
    fn id(&self) -> &str;
    fn pairing_mode(&self) -> PairingMode;
    fn generate(
        &self,
        class_id: usize,
        count: usize,
        real: &[&TimeWindow],
        round: u32,
        seed: u64,
    ) -> Result<Vec<TimeWindow>>;
}

pub(crate) fn check_pool(id: &str, real: &[&TimeWindow], min: usize) -> Result<()> {
    if real.len() < min {
        return Err(Error::Generator {
            id: id.to_string(),
            msg: format!("needs at least {min} real windows, got {}", real.len()),
        });
    }
    let (t, f) = (real[0].steps, real[0].features);
    if real.iter().any(|w| w.steps != t || w.features != f) {
        return Err(Error::Generator {
            id: id.to_string(),
            msg: "real windows disagree on shape".into(),
        });
    }
    Ok(())
}

pub(crate) fn generated_window(
    template: &TimeWindow,
    values: Vec<f64>,
    class_id: usize,
    generator_id: &str,
    round: u32,
    source_index: Option<usize>,
) -> Result<TimeWindow> {
    TimeWindow::new(
        values,
        template.steps,
        template.features,
        class_id,
        format!("gen:{generator_id}:r{round}"),
        Provenance::Generated {
            generator_id: generator_id.to_string(),
            round,
            source_index,
        },
    )
    .map_err(|e| Error::Generator {
        id: generator_id.to_string(),
        msg: e.to_string(),
    })
}

/// Fallback for degenerate single-window classes: copies of the lone window
/// with per-feature jitter at 1% of its per-feature std over time.
pub(crate) fn jittered_copies(
    id: &str,
    class_id: usize,
    count: usize,
    window: &TimeWindow,
    round: u32,
    seed: u64,
) -> Result<Vec<TimeWindow>> {
    use rand::Rng;
    log::warn!("generator '{id}': single-window class {class_id}, falling back to jittered copies");
    let (t, f) = (window.steps, window.features);
    let mut sigma = vec![0.0f64; f];
    for j in 0..f {
        let mean: f64 = (0..t).map(|i| window.value(i, j)).sum::<f64>() / t as f64;
        let var: f64 = (0..t)
            .map(|i| (window.value(i, j) - mean).powi(2))
            .sum::<f64>()
            / t as f64;
        sigma[j] = 0.01 * var.sqrt();
    }
    let mut rng = crate::seeding::rng_from(seed);
    (0..count)
        .map(|_| {
            let values: Vec<f64> = (0..t * f)
                .map(|idx| {
                    let j = idx % f;
                    let noise = if sigma[j] > 0.0 {
                        rng.gen_range(-sigma[j]..sigma[j])
                    } else {
                        0.0
                    };
                    window.values[idx] + noise
                })
                .collect();
            generated_window(window, values, class_id, id, round, Some(0))
        })
        .collect()
}

/// Baseline generator that returns exact copies of randomly chosen real
/// windows. Useful as a capability-modeling control: its similarity score
/// should saturate.
pub struct CopyGenerator;

impl Generator for CopyGenerator {
    fn id(&self) -> &str {
        "copy"
    }

    fn pairing_mode(&self) -> PairingMode {
        PairingMode::Aligned
    }

    fn generate(
        &self,
        class_id: usize,
        count: usize,
        real: &[&TimeWindow],
        round: u32,
        seed: u64,
    ) -> Result<Vec<TimeWindow>> {
        use rand::Rng;
        check_pool(self.id(), real, 1)?;
        let mut rng = crate::seeding::rng_from(seed);
        (0..count)
            .map(|_| {
                let src = rng.gen_range(0..real.len());
                generated_window(
                    real[src],
                    real[src].values.clone(),
                    class_id,
                    self.id(),
                    round,
                    Some(src),
                )
            })
            .collect()
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::testutil::synthetic_dataset;

    #[test]
    fn copy_generator_satisfies_the_contract_and_copies() {
        let ds = synthetic_dataset(2, 20, 4, 2, 8);
        let real = ds.class_windows(1);
        testutil::assert_contract(&CopyGenerator, &real, 1);
        let out = CopyGenerator.generate(1, 5, &real, 0, 77).unwrap();
        for w in &out {
            let src = match &w.provenance {
                Provenance::Generated { source_index, .. } => source_index.unwrap(),
                _ => unreachable!(),
            };
            assert_eq!(w.values, real[src].values);
        }
    }
}
