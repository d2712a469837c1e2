//! Recursive interpolation: repeated midpoints against fresh same-class
//! windows. Outputs stay inside the per-coordinate convex hull of the pool.

use rand::Rng;

use crate::dataset::TimeWindow;
use crate::error::Result;
use crate::generators::{check_pool, generated_window, jittered_copies, Generator};
use crate::seeding::rng_from;
use crate::stats::PairingMode;

pub struct RimGenerator {
    /// Number of midpoint iterations; depth 1 is a plain pairwise midpoint.
    pub depth: usize,
}

impl Default for RimGenerator {
    fn default() -> Self {
        RimGenerator { depth: 2 }
    }
}

impl Generator for RimGenerator {
    fn id(&self) -> &str {
        "rim"
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
        check_pool(self.id(), real, 1)?;
        if count == 0 {
            return Ok(Vec::new());
        }
        if real.len() == 1 {
            return jittered_copies(self.id(), class_id, count, real[0], round, seed);
        }
        assert!(self.depth >= 1, "rim depth must be >= 1");

        let mut rng = rng_from(seed);
        (0..count)
            .map(|_| {
                let first = rng.gen_range(0..real.len());
                let mut second = rng.gen_range(0..real.len() - 1);
                if second >= first {
                    second += 1;
                }
                let mut values: Vec<f64> = real[first]
                    .values
                    .iter()
                    .zip(&real[second].values)
                    .map(|(a, b)| 0.5 * (a + b))
                    .collect();
                for _ in 1..self.depth {
                    let fresh = rng.gen_range(0..real.len());
                    for (v, b) in values.iter_mut().zip(&real[fresh].values) {
                        *v = 0.5 * (*v + b);
                    }
                }
                generated_window(real[0], values, class_id, self.id(), round, Some(first))
            })
            .collect()
    }
}
