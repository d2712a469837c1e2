//! Time-segment warping: alternately compress and stretch equal time
//! segments, then resample back to the original length.

use rand::Rng;

use crate::dataset::TimeWindow;
use crate::error::{Error, Result};
use crate::generators::{check_pool, generated_window, Generator};
use crate::seeding::rng_from;
use crate::stats::PairingMode;

pub struct TswGenerator {
    /// Even number of equal time segments.
    pub n_segments: usize,
    /// Compression factor in (0, 1); stretch segments use its reciprocal.
    pub warp_ratio: f64,
}

impl Default for TswGenerator {
    fn default() -> Self {
        TswGenerator {
            n_segments: 4,
            warp_ratio: 0.8,
        }
    }
}

impl TswGenerator {
    fn validate(&self, steps: usize) -> Result<()> {
        if self.n_segments < 2 || self.n_segments % 2 != 0 {
            return Err(Error::Generator {
                id: "tsw".into(),
                msg: format!("n_segments must be even and >= 2, got {}", self.n_segments),
            });
        }
        if !(self.warp_ratio > 0.0 && self.warp_ratio < 1.0) {
            return Err(Error::Generator {
                id: "tsw".into(),
                msg: format!("warp_ratio must be in (0, 1), got {}", self.warp_ratio),
            });
        }
        if steps < 2 * self.n_segments {
            return Err(Error::Generator {
                id: "tsw".into(),
                msg: format!(
                    "window length {steps} too short for {} segments (need >= {})",
                    self.n_segments,
                    2 * self.n_segments
                ),
            });
        }
        Ok(())
    }

    /// Warp one window: piecewise-linear time map with alternating segment
    /// speeds, normalized to fix both endpoints, then linear resampling.
    fn warp(&self, window: &TimeWindow) -> Vec<f64> {
        let t = window.steps;
        let f = window.features;
        let n_seg = self.n_segments;
        let span = (t - 1) as f64;
        let seg_len = span / n_seg as f64;

        // Cumulative warped time at segment boundaries.
        let mut warped_bounds = Vec::with_capacity(n_seg + 1);
        warped_bounds.push(0.0);
        for s in 0..n_seg {
            let factor = if s % 2 == 0 {
                self.warp_ratio
            } else {
                1.0 / self.warp_ratio
            };
            warped_bounds.push(warped_bounds[s] + seg_len * factor);
        }
        let total = warped_bounds[n_seg];

        let mut out = vec![0.0f64; t * f];
        for j in 0..t {
            // Position in warped time, then back to source time through the
            // piecewise-linear inverse.
            let tau = total * j as f64 / span;
            let seg = match warped_bounds
                .windows(2)
                .position(|w| tau >= w[0] && tau <= w[1])
            {
                Some(s) => s,
                None => n_seg - 1,
            };
            let local = (tau - warped_bounds[seg]) / (warped_bounds[seg + 1] - warped_bounds[seg]);
            let src = (seg as f64 + local) * seg_len;
            let src = src.clamp(0.0, span);

            let lo = src.floor() as usize;
            let hi = (lo + 1).min(t - 1);
            let frac = src - lo as f64;
            for c in 0..f {
                let a = window.value(lo, c);
                let b = window.value(hi, c);
                out[j * f + c] = a + frac * (b - a);
            }
        }
        out
    }
}

impl Generator for TswGenerator {
    fn id(&self) -> &str {
        "tsw"
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
        self.validate(real[0].steps)?;
        if count == 0 {
            return Ok(Vec::new());
        }
        let mut rng = rng_from(seed);
        (0..count)
            .map(|_| {
                let src = rng.gen_range(0..real.len());
                let values = self.warp(real[src]);
                generated_window(real[src], values, class_id, self.id(), round, Some(src))
            })
            .collect()
    }
}
