//! Multinomial logistic regression on flattened standardized windows:
//! balanced class weights, L2 penalty, full-batch gradient descent.

use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, TimeWindow};
use crate::error::{Error, Result};
use crate::model::{
    balanced_class_weights, require_multiclass, softmax, Classifier, ModelArtifact,
    Standardizer, TrainedModel,
};

pub(crate) const ARTIFACT_KIND: &str = "logistic";

pub struct LogisticClassifier {
    /// Ridge penalty coefficient (0.5 * l2 * ||W||^2 / n added to the loss).
    pub l2: f64,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for LogisticClassifier {
    fn default() -> Self {
        LogisticClassifier {
            l2: 1.0,
            epochs: 500,
            lr: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct LogisticModel {
    /// One weight row per class; the last column is the bias.
    weights: Vec<Vec<f64>>,
    standardizer: Standardizer,
    num_classes: usize,
}

impl LogisticModel {
    fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|row| {
                let mut z = row[row.len() - 1];
                for (w, v) in row[..row.len() - 1].iter().zip(x) {
                    z += w * v;
                }
                z
            })
            .collect()
    }
}

impl TrainedModel for LogisticModel {
    fn predict_proba(&self, window: &TimeWindow) -> Result<Vec<f64>> {
        let x = self.standardizer.apply(window.flat())?;
        Ok(softmax(&self.logits(&x)))
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn artifact(&self) -> Result<ModelArtifact> {
        Ok(ModelArtifact {
            kind: ARTIFACT_KIND.into(),
            payload: serde_json::to_value(self)?,
        })
    }
}

pub(crate) fn from_payload(payload: serde_json::Value) -> Result<Box<dyn TrainedModel>> {
    let model: LogisticModel = serde_json::from_value(payload)?;
    Ok(Box::new(model))
}

/// Normalized weighted cross-entropy plus the ridge term. Pulled out so the
/// loss surface itself is testable.
pub(crate) fn weighted_loss(
    weights: &[Vec<f64>],
    xs: &[Vec<f64>],
    ys: &[usize],
    sample_weights: &[f64],
    l2: f64,
) -> f64 {
    let n = xs.len() as f64;
    let mut loss = 0.0;
    let mut weight_total = 0.0;
    for ((x, &y), &sw) in xs.iter().zip(ys).zip(sample_weights) {
        let logits: Vec<f64> = weights
            .iter()
            .map(|row| {
                let mut z = row[row.len() - 1];
                for (w, v) in row[..row.len() - 1].iter().zip(x) {
                    z += w * v;
                }
                z
            })
            .collect();
        let probs = softmax(&logits);
        loss += -sw * probs[y].max(1e-300).ln();
        weight_total += sw;
    }
    let mut penalty = 0.0;
    for row in weights {
        for w in &row[..row.len() - 1] {
            penalty += w * w;
        }
    }
    loss / weight_total + 0.5 * l2 * penalty / n
}

impl Classifier for LogisticClassifier {
    fn id(&self) -> &str {
        "logistic"
    }

    fn train(&self, dataset: &LabeledDataset, _seed: u64) -> Result<Box<dyn TrainedModel>> {
        require_multiclass(dataset)?;
        if self.lr <= 0.0 || self.epochs == 0 {
            return Err(Error::Classifier("lr and epochs must be positive".into()));
        }
        let standardizer = Standardizer::fit(dataset);
        let xs: Vec<Vec<f64>> = dataset
            .windows
            .iter()
            .map(|w| standardizer.apply(w.flat()))
            .collect::<Result<_>>()?;
        let ys: Vec<usize> = dataset.windows.iter().map(|w| w.label).collect();
        let class_weights = balanced_class_weights(dataset);
        let sample_weights: Vec<f64> = ys.iter().map(|&y| class_weights[y]).collect();
        let weight_total: f64 = sample_weights.iter().sum();

        let d = dataset.steps * dataset.features;
        let c = dataset.num_classes;
        let n = xs.len() as f64;
        // The objective is convex; zero init keeps training deterministic
        // for every seed.
        let mut weights = vec![vec![0.0f64; d + 1]; c];

        for _ in 0..self.epochs {
            let mut grad = vec![vec![0.0f64; d + 1]; c];
            for (x, (&y, &sw)) in xs.iter().zip(ys.iter().zip(&sample_weights)) {
                let logits: Vec<f64> = weights
                    .iter()
                    .map(|row| {
                        let mut z = row[d];
                        for (w, v) in row[..d].iter().zip(x) {
                            z += w * v;
                        }
                        z
                    })
                    .collect();
                let probs = softmax(&logits);
                for (k, row) in grad.iter_mut().enumerate() {
                    let delta = sw * (probs[k] - if k == y { 1.0 } else { 0.0 });
                    for (g, v) in row[..d].iter_mut().zip(x) {
                        *g += delta * v;
                    }
                    row[d] += delta;
                }
            }
            for (wrow, grow) in weights.iter_mut().zip(&grad) {
                for j in 0..d {
                    let g = grow[j] / weight_total + self.l2 * wrow[j] / n;
                    wrow[j] -= self.lr * g;
                }
                wrow[d] -= self.lr * grow[d] / weight_total;
            }
        }

        Ok(Box::new(LogisticModel {
            weights,
            standardizer,
            num_classes: c,
        }))
    }
}
