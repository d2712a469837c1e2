//! Small fully connected network: ReLU hidden layers, softmax output,
//! weighted cross-entropy, full-batch gradient descent.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, TimeWindow};
use crate::error::{Error, Result};
use crate::model::{
    balanced_class_weights, require_multiclass, softmax, Classifier, ModelArtifact,
    Standardizer, TrainedModel,
};
use crate::seeding::rng_from;

pub(crate) const ARTIFACT_KIND: &str = "mlp";

pub struct MlpClassifier {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for MlpClassifier {
    fn default() -> Self {
        MlpClassifier {
            hidden: vec![64],
            epochs: 300,
            lr: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct Layer {
    /// Row-major weight matrix, `out x in`.
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct Net {
    pub layers: Vec<Layer>,
}

impl Net {
    fn init(dims: &[usize], seed: u64) -> Net {
        let mut rng = rng_from(seed);
        let layers = dims
            .windows(2)
            .map(|d| {
                let (fan_in, fan_out) = (d[0], d[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Layer {
                    w: (0..fan_out)
                        .map(|_| (0..fan_in).map(|_| rng.gen_range(-bound..bound)).collect())
                        .collect(),
                    b: vec![0.0; fan_out],
                }
            })
            .collect();
        Net { layers }
    }

    fn zeros_like(&self) -> Net {
        Net {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    w: l.w.iter().map(|row| vec![0.0; row.len()]).collect(),
                    b: vec![0.0; l.b.len()],
                })
                .collect(),
        }
    }

    /// Forward pass returning the activations of every layer (input first).
    fn forward(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        for (li, layer) in self.layers.iter().enumerate() {
            let prev = acts.last().unwrap();
            let mut z: Vec<f64> = layer
                .w
                .iter()
                .zip(&layer.b)
                .map(|(row, b)| row.iter().zip(prev).map(|(w, v)| w * v).sum::<f64>() + b)
                .collect();
            if li + 1 < self.layers.len() {
                for v in &mut z {
                    *v = v.max(0.0); // ReLU
                }
            }
            acts.push(z);
        }
        acts
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).pop().unwrap()
    }

    /// Weighted cross-entropy loss and its gradient over a batch.
    /// Loss = sum_i w_i * CE_i / sum_i w_i.
    pub(crate) fn loss_and_grad(
        &self,
        xs: &[Vec<f64>],
        ys: &[usize],
        sample_weights: &[f64],
    ) -> (f64, Net) {
        let weight_total: f64 = sample_weights.iter().sum();
        let mut grad = self.zeros_like();
        let mut loss = 0.0;
        for ((x, &y), &sw) in xs.iter().zip(ys).zip(sample_weights) {
            let acts = self.forward(x);
            let probs = softmax(acts.last().unwrap());
            loss += -sw * probs[y].max(1e-300).ln();

            // delta at the output layer
            let mut delta: Vec<f64> = probs
                .iter()
                .enumerate()
                .map(|(k, p)| sw * (p - if k == y { 1.0 } else { 0.0 }) / weight_total)
                .collect();
            for li in (0..self.layers.len()).rev() {
                let input = &acts[li];
                for (r, d) in delta.iter().enumerate() {
                    for (g, v) in grad.layers[li].w[r].iter_mut().zip(input) {
                        *g += d * v;
                    }
                    grad.layers[li].b[r] += d;
                }
                if li > 0 {
                    let mut next = vec![0.0f64; input.len()];
                    for (r, d) in delta.iter().enumerate() {
                        for (n, w) in next.iter_mut().zip(&self.layers[li].w[r]) {
                            *n += d * w;
                        }
                    }
                    // ReLU gate on the pre-activation sign, recovered from
                    // the (post-activation) input values.
                    for (n, v) in next.iter_mut().zip(input) {
                        if *v <= 0.0 {
                            *n = 0.0;
                        }
                    }
                    delta = next;
                }
            }
        }
        (loss / weight_total, grad)
    }

    fn step(&mut self, grad: &Net, lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grad.layers) {
            for (wrow, grow) in layer.w.iter_mut().zip(&g.w) {
                for (w, gv) in wrow.iter_mut().zip(grow) {
                    *w -= lr * gv;
                }
            }
            for (b, gv) in layer.b.iter_mut().zip(&g.b) {
                *b -= lr * gv;
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct MlpModel {
    net: Net,
    standardizer: Standardizer,
    num_classes: usize,
}

impl TrainedModel for MlpModel {
    fn predict_proba(&self, window: &TimeWindow) -> Result<Vec<f64>> {
        let x = self.standardizer.apply(window.flat())?;
        Ok(softmax(&self.net.logits(&x)))
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
    let model: MlpModel = serde_json::from_value(payload)?;
    Ok(Box::new(model))
}

impl Classifier for MlpClassifier {
    fn id(&self) -> &str {
        "mlp"
    }

    fn train(&self, dataset: &LabeledDataset, seed: u64) -> Result<Box<dyn TrainedModel>> {
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

        let d = dataset.steps * dataset.features;
        let mut dims = vec![d];
        dims.extend(&self.hidden);
        dims.push(dataset.num_classes);
        let mut net = Net::init(&dims, seed);

        for _ in 0..self.epochs {
            let (_, grad) = net.loss_and_grad(&xs, &ys, &sample_weights);
            net.step(&grad, self.lr);
        }

        Ok(Box::new(MlpModel {
            net,
            standardizer,
            num_classes: dataset.num_classes,
        }))
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// Central-difference gradient check; returns the worst relative error
    /// over all parameters.
    pub fn gradient_check(net: &Net, xs: &[Vec<f64>], ys: &[usize], weights: &[f64]) -> f64 {
        let (_, grad) = net.loss_and_grad(xs, ys, weights);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let mut probe = net.clone();
        for li in 0..net.layers.len() {
            for r in 0..net.layers[li].w.len() {
                for c in 0..net.layers[li].w[r].len() {
                    let orig = probe.layers[li].w[r][c];
                    probe.layers[li].w[r][c] = orig + h;
                    let (lp, _) = probe.loss_and_grad(xs, ys, weights);
                    probe.layers[li].w[r][c] = orig - h;
                    let (lm, _) = probe.loss_and_grad(xs, ys, weights);
                    probe.layers[li].w[r][c] = orig;
                    let numeric = (lp - lm) / (2.0 * h);
                    let analytic = grad.layers[li].w[r][c];
                    let scale = numeric.abs().max(analytic.abs()).max(1e-8);
                    worst = worst.max((numeric - analytic).abs() / scale);
                }
            }
            for r in 0..net.layers[li].b.len() {
                let orig = probe.layers[li].b[r];
                probe.layers[li].b[r] = orig + h;
                let (lp, _) = probe.loss_and_grad(xs, ys, weights);
                probe.layers[li].b[r] = orig - h;
                let (lm, _) = probe.loss_and_grad(xs, ys, weights);
                probe.layers[li].b[r] = orig;
                let numeric = (lp - lm) / (2.0 * h);
                let analytic = grad.layers[li].b[r];
                let scale = numeric.abs().max(analytic.abs()).max(1e-8);
                worst = worst.max((numeric - analytic).abs() / scale);
            }
        }
        worst
    }

    pub fn small_net(seed: u64) -> Net {
        Net::init(&[2, 8, 5, 3], seed)
    }
}
