//! Subprocess classifier adapter, mirroring the generator adapter: JSON
//! requests over stdin/stdout, one process per command. The external tool
//! returns an opaque model blob from `train` that is handed back verbatim
//! on every `predict`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, TimeWindow};
use crate::error::{Error, Result};
use crate::generators::run_with_timeout;
use crate::model::{Classifier, ModelArtifact, TrainedModel};

pub struct SubprocessClassifier {
    pub id: String,
    pub command: Vec<String>,
    pub timeout: Duration,
}

#[derive(Serialize)]
struct TrainRequest<'a> {
    command: &'static str,
    dataset: DatasetPayload<'a>,
    seed: u64,
}

#[derive(Serialize)]
struct DatasetPayload<'a> {
    #[serde(rename = "T")]
    steps: usize,
    #[serde(rename = "F")]
    features: usize,
    num_classes: usize,
    windows: Vec<WindowPayload<'a>>,
}

#[derive(Serialize)]
struct WindowPayload<'a> {
    values: Vec<&'a [f64]>,
    label: usize,
}

#[derive(Deserialize)]
struct TrainResponse {
    model: serde_json::Value,
}

#[derive(Serialize)]
struct PredictRequest<'a> {
    command: &'static str,
    model: &'a serde_json::Value,
    windows: Vec<Vec<&'a [f64]>>,
}

#[derive(Deserialize)]
struct PredictResponse {
    probs: Vec<Vec<f64>>,
}

struct SubprocessModel {
    command: Vec<String>,
    timeout: Duration,
    blob: serde_json::Value,
    num_classes: usize,
}

impl TrainedModel for SubprocessModel {
    fn predict_proba(&self, window: &TimeWindow) -> Result<Vec<f64>> {
        let request = PredictRequest {
            command: "predict",
            model: &self.blob,
            windows: vec![(0..window.steps).map(|t| window.frame(t)).collect()],
        };
        let payload = serde_json::to_vec(&request)?;
        let output = run_with_timeout(&self.command, &payload, self.timeout)?;
        let response: PredictResponse = serde_json::from_slice(&output)
            .map_err(|e| Error::Subprocess(format!("bad predict response: {e}")))?;
        let probs = response
            .probs
            .into_iter()
            .next()
            .ok_or_else(|| Error::Subprocess("predict returned no rows".into()))?;
        if probs.len() != self.num_classes {
            return Err(Error::Subprocess(format!(
                "predict returned {} probabilities, expected {}",
                probs.len(),
                self.num_classes
            )));
        }
        Ok(probs)
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn artifact(&self) -> Result<ModelArtifact> {
        Ok(ModelArtifact {
            kind: "subprocess".into(),
            payload: serde_json::json!({
                "command": self.command,
                "num_classes": self.num_classes,
                "model": self.blob,
            }),
        })
    }
}

impl Classifier for SubprocessClassifier {
    fn id(&self) -> &str {
        &self.id
    }

    fn train(&self, dataset: &LabeledDataset, seed: u64) -> Result<Box<dyn TrainedModel>> {
        let request = TrainRequest {
            command: "train",
            dataset: DatasetPayload {
                steps: dataset.steps,
                features: dataset.features,
                num_classes: dataset.num_classes,
                windows: dataset
                    .windows
                    .iter()
                    .map(|w| WindowPayload {
                        values: (0..w.steps).map(|t| w.frame(t)).collect(),
                        label: w.label,
                    })
                    .collect(),
            },
            seed,
        };
        let payload = serde_json::to_vec(&request)?;
        let output = run_with_timeout(&self.command, &payload, self.timeout)?;
        let response: TrainResponse = serde_json::from_slice(&output)
            .map_err(|e| Error::Subprocess(format!("bad train response: {e}")))?;
        Ok(Box::new(SubprocessModel {
            command: self.command.clone(),
            timeout: self.timeout,
            blob: response.model,
            num_classes: dataset.num_classes,
        }))
    }
}
