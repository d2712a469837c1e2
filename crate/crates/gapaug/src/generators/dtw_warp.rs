//! Alignment-guided warping: align a source window to a same-class
//! reference with dynamic time warping, retime the source along the path,
//! and blend the warped version with the original.

use rand::Rng;

use crate::dataset::TimeWindow;
use crate::error::Result;
use crate::generators::{check_pool, generated_window, jittered_copies, Generator};
use crate::seeding::rng_from;
use crate::stats::PairingMode;

pub struct DtwWarpGenerator {
    /// Mixing weight of the warped signal in (0, 1]; 0 would be the source.
    pub blend: f64,
}

impl Default for DtwWarpGenerator {
    fn default() -> Self {
        DtwWarpGenerator { blend: 0.5 }
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// DTW cost and alignment path between two frame sequences.
///
/// Standard dynamic-programming recurrence with Euclidean local cost; the
/// traceback prefers diagonal, then vertical, then horizontal moves on
/// ties. The path runs from (0, 0) to (|a|-1, |b|-1) as (a-index, b-index)
/// pairs.
pub fn dtw_path(a: &[Vec<f64>], b: &[Vec<f64>]) -> (f64, Vec<(usize, usize)>) {
    let (n, m) = (a.len(), b.len());
    assert!(n > 0 && m > 0, "dtw needs nonempty sequences");
    let mut acc = vec![vec![f64::INFINITY; m]; n];
    for i in 0..n {
        for j in 0..m {
            let cost = euclidean(&a[i], &b[j]);
            let best_prev = if i == 0 && j == 0 {
                0.0
            } else {
                let mut best = f64::INFINITY;
                if i > 0 && j > 0 {
                    best = best.min(acc[i - 1][j - 1]);
                }
                if i > 0 {
                    best = best.min(acc[i - 1][j]);
                }
                if j > 0 {
                    best = best.min(acc[i][j - 1]);
                }
                best
            };
            acc[i][j] = cost + best_prev;
        }
    }

    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while i > 0 || j > 0 {
        let diag = if i > 0 && j > 0 {
            acc[i - 1][j - 1]
        } else {
            f64::INFINITY
        };
        let up = if i > 0 { acc[i - 1][j] } else { f64::INFINITY };
        let left = if j > 0 { acc[i][j - 1] } else { f64::INFINITY };
        if diag <= up && diag <= left {
            i -= 1;
            j -= 1;
        } else if up <= left {
            i -= 1;
        } else {
            j -= 1;
        }
        path.push((i, j));
    }
    path.reverse();
    (acc[n - 1][m - 1], path)
}

impl DtwWarpGenerator {
    /// Retime `source` to the reference's clock: for each reference step,
    /// average the source frames the path aligns to it, then blend.
    fn warp_toward(&self, source: &TimeWindow, reference: &TimeWindow) -> Vec<f64> {
        let frames = |w: &TimeWindow| -> Vec<Vec<f64>> {
            (0..w.steps).map(|t| w.frame(t).to_vec()).collect()
        };
        let (_, path) = dtw_path(&frames(source), &frames(reference));
        let f = source.features;
        let t = reference.steps;
        let mut warped = vec![0.0f64; t * f];
        let mut hits = vec![0usize; t];
        for (i, j) in path {
            for c in 0..f {
                warped[j * f + c] += source.value(i, c);
            }
            hits[j] += 1;
        }
        for j in 0..t {
            for c in 0..f {
                warped[j * f + c] /= hits[j] as f64;
            }
        }
        source
            .values
            .iter()
            .zip(&warped)
            .map(|(orig, w)| (1.0 - self.blend) * orig + self.blend * w)
            .collect()
    }
}

impl Generator for DtwWarpGenerator {
    fn id(&self) -> &str {
        "dtw-warp"
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
        assert!(
            self.blend > 0.0 && self.blend <= 1.0,
            "dtw-warp blend must be in (0, 1]"
        );
        if count == 0 {
            return Ok(Vec::new());
        }
        if real.len() == 1 {
            return jittered_copies(self.id(), class_id, count, real[0], round, seed);
        }
        let mut rng = rng_from(seed);
        (0..count)
            .map(|_| {
                let src = rng.gen_range(0..real.len());
                let mut reference = rng.gen_range(0..real.len() - 1);
                if reference >= src {
                    reference += 1;
                }
                let values = self.warp_toward(real[src], real[reference]);
                generated_window(real[src], values, class_id, self.id(), round, Some(src))
            })
            .collect()
    }
}
