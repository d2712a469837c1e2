//! Evaluation metrics feeding the gap components and the joint score.

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::TrainedModel;

/// Full evaluation record for one model on one split.
///
/// Macro metrics are unweighted means over all classes; classes absent from
/// the split contribute 0 to recall and are listed in `absent_classes`.
/// Normalized entropy uses natural logs in numerator and denominator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub per_class_recall: Vec<f64>,
    pub mean_normalized_entropy_per_class: Vec<f64>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub absent_classes: Vec<usize>,
}

pub fn evaluate(model: &dyn TrainedModel, split: &LabeledDataset) -> Result<EvalReport> {
    if split.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty split"));
    }
    let c = split.num_classes;
    if model.num_classes() != c {
        return Err(Error::Classifier(format!(
            "model has {} classes, split has {c}",
            model.num_classes()
        )));
    }

    let mut confusion = vec![vec![0usize; c]; c];
    let mut entropy_sum = vec![0.0f64; c];
    let log_c = (c as f64).ln();
    for w in &split.windows {
        let probs = model.predict_proba(w)?;
        if probs.len() != c {
            return Err(Error::Classifier(format!(
                "probability vector has {} entries, expected {c}",
                probs.len()
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || probs.iter().any(|&p| p < -1e-12) {
            return Err(Error::Classifier(format!(
                "invalid probability vector (sum {sum})"
            )));
        }
        let pred = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        confusion[w.label][pred] += 1;

        let entropy: f64 = probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum();
        entropy_sum[w.label] += if c > 1 { entropy / log_c } else { 0.0 };
    }

    let n = split.len() as f64;
    let accuracy = (0..c).map(|k| confusion[k][k]).sum::<usize>() as f64 / n;

    let mut per_class_recall = vec![0.0f64; c];
    let mut per_class_precision = vec![0.0f64; c];
    let mut per_class_f1 = vec![0.0f64; c];
    let mut mean_entropy = vec![0.0f64; c];
    let mut absent = Vec::new();
    for k in 0..c {
        let row: usize = confusion[k].iter().sum();
        let col: usize = (0..c).map(|i| confusion[i][k]).sum();
        let tp = confusion[k][k];
        if row == 0 {
            absent.push(k);
        } else {
            per_class_recall[k] = tp as f64 / row as f64;
            mean_entropy[k] = entropy_sum[k] / row as f64;
        }
        if col > 0 {
            per_class_precision[k] = tp as f64 / col as f64;
        }
        let denom = per_class_precision[k] + per_class_recall[k];
        per_class_f1[k] = if denom > 0.0 {
            2.0 * per_class_precision[k] * per_class_recall[k] / denom
        } else {
            0.0
        };
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / c as f64;
    Ok(EvalReport {
        accuracy,
        macro_f1: mean(&per_class_f1),
        macro_precision: mean(&per_class_precision),
        macro_recall: mean(&per_class_recall),
        per_class_recall,
        mean_normalized_entropy_per_class: mean_entropy,
        confusion,
        absent_classes: absent,
    })
}


#[cfg(test)]
mod tests {
    use super::testutil::TableModel;
    use super::*;
    use crate::dataset::testutil::synthetic_dataset;

    #[test]
    fn perfect_predictor_maxes_every_metric() {
        let ds = synthetic_dataset(3, 10, 2, 1, 90);
        let model = TableModel {
            by_label: vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
        };
        let report = evaluate(&model, &ds).unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.macro_f1, 1.0);
        assert_eq!(report.macro_recall, 1.0);
        assert_eq!(report.macro_precision, 1.0);
        assert!(report.per_class_recall.iter().all(|&r| r == 1.0));
        for (k, row) in report.confusion.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, if j == k { 10 } else { 0 });
            }
        }
    }

    #[test]
    fn uniform_predictor_has_unit_normalized_entropy() {
        let ds = synthetic_dataset(3, 8, 2, 1, 91);
        let model = TableModel {
            by_label: vec![vec![1.0 / 3.0; 3]; 3],
        };
        let report = evaluate(&model, &ds).unwrap();
        for &e in &report.mean_normalized_entropy_per_class {
            assert!((e - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_matches_direct_scalar_evaluation() {
        let ds = synthetic_dataset(3, 5, 2, 1, 92);
        let probs = vec![0.7, 0.2, 0.1];
        let model = TableModel {
            by_label: vec![probs.clone(); 3],
        };
        let report = evaluate(&model, &ds).unwrap();
        let h: f64 = probs.iter().map(|&p| -p * (p as f64).ln()).sum();
        assert!((h - 0.8018).abs() < 1e-4, "H = {h}");
        let normalized = h / 3.0f64.ln();
        assert!((normalized - 0.7299).abs() < 1e-4, "H/lnC = {normalized}");
        for &e in &report.mean_normalized_entropy_per_class {
            assert!((e - normalized).abs() < 1e-12);
        }
    }

    #[test]
    fn confusion_rows_sum_to_class_counts() {
        let ds = synthetic_dataset(3, 7, 2, 1, 93);
        let model = TableModel {
            by_label: vec![
                vec![0.5, 0.3, 0.2],
                vec![0.2, 0.5, 0.3],
                vec![0.2, 0.3, 0.5],
            ],
        };
        let report = evaluate(&model, &ds).unwrap();
        let counts = ds.class_counts();
        for (k, row) in report.confusion.iter().enumerate() {
            assert_eq!(row.iter().sum::<usize>(), counts[k]);
        }
    }

    #[test]
    fn absent_classes_contribute_zero_recall_and_get_flagged() {
        let mut ds = synthetic_dataset(3, 6, 2, 1, 94);
        ds.windows.retain(|w| w.label != 2);
        let model = TableModel {
            by_label: vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
        };
        let report = evaluate(&model, &ds).unwrap();
        assert_eq!(report.absent_classes, vec![2]);
        assert_eq!(report.per_class_recall[2], 0.0);
        // Macro recall averages over all three classes, absent one included.
        assert!((report.macro_recall - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_split_is_an_error() {
        let mut ds = synthetic_dataset(2, 3, 2, 1, 95);
        ds.windows.clear();
        let model = TableModel {
            by_label: vec![vec![0.5, 0.5]; 2],
        };
        assert!(evaluate(&model, &ds).is_err());
    }

    #[test]
    fn macro_f1_uses_zero_over_zero_convention() {
        // Model always predicts class 0: class 1 has P=R=0, so F1 = 0.
        let ds = synthetic_dataset(2, 5, 2, 1, 96);
        let model = TableModel {
            by_label: vec![vec![1.0, 0.0], vec![1.0, 0.0]],
        };
        let report = evaluate(&model, &ds).unwrap();
        // class 0: recall 1, precision 0.5, f1 = 2/3; class 1: 0.
        assert!((report.macro_f1 - (2.0 / 3.0) / 2.0).abs() < 1e-12);
    }
}
