//! Downstream classifiers with probability outputs, plus evaluation
//! metrics. Two native models (multinomial logistic regression and a small
//! MLP) cover desk-scale runs; external models plug in through the
//! subprocess adapter.

mod logistic;
mod metrics;
mod mlp;
mod subprocess;

pub use logistic::LogisticClassifier;
pub use metrics::{evaluate, EvalReport};
pub use mlp::MlpClassifier;
pub use subprocess::SubprocessClassifier;

use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, TimeWindow};
use crate::error::{Error, Result};

/// A trained model: immutable, shareable, and able to score windows.
pub trait TrainedModel: Send + Sync {
    /// Class-probability vector; nonnegative entries summing to 1.
    fn predict_proba(&self, window: &TimeWindow) -> Result<Vec<f64>>;

    fn num_classes(&self) -> usize;

    /// Serializable form for persistence and post-hoc evaluation.
    fn artifact(&self) -> Result<ModelArtifact>;
}

/// Trainer contract. Training must be deterministic per seed.
pub trait Classifier: Send + Sync {
    fn id(&self) -> &str;
    fn train(&self, dataset: &LabeledDataset, seed: u64) -> Result<Box<dyn TrainedModel>>;
}

/// Serialized model: a kind tag plus a kind-specific payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub kind: String,
    pub payload: serde_json::Value,
}

impl ModelArtifact {
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref()).map_err(|e| {
            Error::Config(format!(
                "model artifact {}: {e}",
                path.as_ref().display()
            ))
        })?;
        Ok(serde_json::from_reader(file)?)
    }

    /// Rehydrate a trained model from its artifact.
    pub fn into_model(self) -> Result<Box<dyn TrainedModel>> {
        match self.kind.as_str() {
            logistic::ARTIFACT_KIND => logistic::from_payload(self.payload),
            mlp::ARTIFACT_KIND => mlp::from_payload(self.payload),
            other => Err(Error::Config(format!("unknown model artifact kind '{other}'"))),
        }
    }
}

/// Per-coordinate standardization fitted on the training split and stored
/// inside the model, so evaluation-time inputs see the same transform.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Standardizer {
    pub(crate) fn fit(dataset: &LabeledDataset) -> Self {
        let d = dataset.steps * dataset.features;
        let n = dataset.len() as f64;
        let mut mean = vec![0.0; d];
        for w in &dataset.windows {
            for (m, v) in mean.iter_mut().zip(w.flat()) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for w in &dataset.windows {
            for ((s, m), v) in var.iter_mut().zip(&mean).zip(w.flat()) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = v.sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub(crate) fn apply(&self, flat: &[f64]) -> Result<Vec<f64>> {
        if flat.len() != self.mean.len() {
            return Err(Error::Classifier(format!(
                "window has {} values, model expects {}",
                flat.len(),
                self.mean.len()
            )));
        }
        Ok(flat
            .iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }
}

/// Inverse-frequency class weights (total / (C * count)); classes absent
/// from the training split get weight 0.
pub(crate) fn balanced_class_weights(dataset: &LabeledDataset) -> Vec<f64> {
    let counts = dataset.class_counts();
    let total = dataset.len() as f64;
    let c = dataset.num_classes as f64;
    counts
        .iter()
        .map(|&n| if n > 0 { total / (c * n as f64) } else { 0.0 })
        .collect()
}

pub(crate) fn require_multiclass(dataset: &LabeledDataset) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::Classifier("training set is empty".into()));
    }
    let present = dataset.class_counts().iter().filter(|&&n| n > 0).count();
    if present < 2 {
        return Err(Error::Classifier(format!(
            "training needs >= 2 classes present, got {present}"
        )));
    }
    Ok(())
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
