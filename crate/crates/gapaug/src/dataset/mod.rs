//! Dataset representation, ingestion and leakage-safe splitting.
//!
//! The atom of every dataset is a [`TimeWindow`]: a `T x F` block of sensor
//! values with a class label, a group key used for split disjointness
//! (typically the acquisition date), and a provenance record saying whether
//! the window was measured or generated.

mod csv;
mod split;
mod ucr;

pub use csv::{ingest_windows_csv, write_windows_csv};
pub use split::split_by_group;
pub use ucr::ingest_ucr_tsv;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Origin of a window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    /// Measured data.
    Real,
    /// Produced by a generator in a given closed-loop round.
    Generated {
        generator_id: String,
        round: u32,
        /// Index into the real window pool the sample was anchored to;
        /// present only for sample-anchored (aligned-pairing) generators.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        source_index: Option<usize>,
    },
}

impl Provenance {
    pub fn is_real(&self) -> bool {
        matches!(self, Provenance::Real)
    }
}

/// One `T x F` real-valued sample with a class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    /// Row-major values: `values[t * features + f]`.
    pub values: Vec<f64>,
    /// Number of time steps (T).
    pub steps: usize,
    /// Number of features per step (F).
    pub features: usize,
    /// Class index in `[0, C)`.
    pub label: usize,
    /// Opaque grouping key used for leakage-safe splitting.
    pub group_key: String,
    pub provenance: Provenance,
}

impl TimeWindow {
    pub fn new(
        values: Vec<f64>,
        steps: usize,
        features: usize,
        label: usize,
        group_key: impl Into<String>,
        provenance: Provenance,
    ) -> Result<Self> {
        if steps == 0 || features == 0 {
            return Err(Error::invalid("window shape must be positive"));
        }
        if values.len() != steps * features {
            return Err(Error::invalid(format!(
                "window holds {} values, expected {}x{}={}",
                values.len(),
                steps,
                features,
                steps * features
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("window contains non-finite values"));
        }
        Ok(TimeWindow {
            values,
            steps,
            features,
            label,
            group_key: group_key.into(),
            provenance,
        })
    }

    pub fn value(&self, t: usize, f: usize) -> f64 {
        self.values[t * self.features + f]
    }

    /// One time step as a feature slice.
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.features..(t + 1) * self.features]
    }

    /// Flattened view in row-major order (the vectorization used by the
    /// embedding and the classifiers).
    pub fn flat(&self) -> &[f64] {
        &self.values
    }
}

/// A collection of windows sharing shape and label space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub windows: Vec<TimeWindow>,
    pub steps: usize,
    pub features: usize,
    pub num_classes: usize,
}

impl LabeledDataset {
    pub fn new(
        windows: Vec<TimeWindow>,
        steps: usize,
        features: usize,
        num_classes: usize,
    ) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::invalid("num_classes must be positive"));
        }
        for w in &windows {
            if w.steps != steps || w.features != features {
                return Err(Error::invalid(format!(
                    "window shape {}x{} differs from dataset shape {}x{}",
                    w.steps, w.features, steps, features
                )));
            }
            if w.label >= num_classes {
                return Err(Error::invalid(format!(
                    "label {} out of range for {} classes",
                    w.label, num_classes
                )));
            }
        }
        Ok(LabeledDataset {
            windows,
            steps,
            features,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Per-class window counts, recomputed on every call so they can never
    /// go stale relative to `windows`.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for w in &self.windows {
            counts[w.label] += 1;
        }
        counts
    }

    /// Borrowed views of all windows with the given label.
    pub fn class_windows(&self, class_id: usize) -> Vec<&TimeWindow> {
        self.windows
            .iter()
            .filter(|w| w.label == class_id)
            .collect()
    }

    /// Borrowed views of the measured (provenance = real) windows of a class.
    pub fn real_class_windows(&self, class_id: usize) -> Vec<&TimeWindow> {
        self.windows
            .iter()
            .filter(|w| w.label == class_id && w.provenance.is_real())
            .collect()
    }

    /// New dataset extended with additional windows (shape-checked).
    pub fn with_appended(&self, extra: Vec<TimeWindow>) -> Result<Self> {
        let mut windows = self.windows.clone();
        windows.extend(extra);
        LabeledDataset::new(windows, self.steps, self.features, self.num_classes)
    }
}

/// Ratio + seed specification for a train/validation/test split.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSpec {
    /// (train, val, test) fractions; must be positive and sum to 1.
    pub ratios: (f64, f64, f64),
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(ratios: (f64, f64, f64), seed: u64) -> Result<Self> {
        let spec = SplitSpec { ratios, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b, c) = self.ratios;
        if a <= 0.0 || b <= 0.0 || c <= 0.0 {
            return Err(Error::invalid("split ratios must be positive"));
        }
        if (a + b + c - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "split ratios must sum to 1 (got {})",
                a + b + c
            )));
        }
        Ok(())
    }
}
