//! Accuracy, per-class precision/recall/F1, and macro-F1 from a 3x3
//! confusion matrix.

use crate::data::{Example, Polarity};
use crate::error::{Error, Result};
use crate::model::DebertaLcfModel;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Evaluation summary. `confusion[t][p]` counts true class `t` predicted
/// as class `p`, in label-index order (negative, neutral, positive).
#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub per_class: [ClassMetrics; 3],
    pub macro_f1: f64,
    pub confusion: [[usize; 3]; 3],
}

/// Rows are true labels, columns are predictions.
pub fn confusion_matrix(truth: &[usize], predicted: &[usize]) -> [[usize; 3]; 3] {
    assert_eq!(truth.len(), predicted.len());
    let mut cm = [[0usize; 3]; 3];
    for (&t, &p) in truth.iter().zip(predicted) {
        cm[t][p] += 1;
    }
    cm
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0 // zero-denominator convention: precision/recall/F1 of 0
    } else {
        num as f64 / den as f64
    }
}

/// Derive every metric from a confusion matrix.
pub fn metrics_from_confusion(cm: [[usize; 3]; 3]) -> Metrics {
    let total: usize = cm.iter().flatten().sum();
    let correct: usize = (0..3).map(|c| cm[c][c]).sum();
    let mut per_class = [ClassMetrics::default(); 3];
    for c in 0..3 {
        let col: usize = (0..3).map(|t| cm[t][c]).sum();
        let row: usize = cm[c].iter().sum();
        let precision = ratio(cm[c][c], col);
        let recall = ratio(cm[c][c], row);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class[c] = ClassMetrics { precision, recall, f1 };
    }
    let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / 3.0;
    Metrics {
        accuracy: ratio(correct, total),
        per_class,
        macro_f1,
        confusion: cm,
    }
}

/// Run the model over a dataset and score the predictions.
pub fn evaluate(model: &DebertaLcfModel, examples: &[Example]) -> Result<Metrics> {
    if examples.is_empty() {
        return Err(Error::Contract("evaluate needs a non-empty dataset".into()));
    }
    let mut truth = Vec::with_capacity(examples.len());
    let mut predicted = Vec::with_capacity(examples.len());
    for ex in examples {
        let (label, _) = model.predict(ex)?;
        truth.push(ex.label.index());
        predicted.push(label.index());
    }
    Ok(metrics_from_confusion(confusion_matrix(&truth, &predicted)))
}

impl Metrics {
    /// Key-value lines, one metric per line, four decimal places.
    pub fn to_kv_lines(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("accuracy {:.4}\n", self.accuracy));
        out.push_str(&format!("macro_f1 {:.4}\n", self.macro_f1));
        for (c, m) in self.per_class.iter().enumerate() {
            let name = Polarity::from_index(c).unwrap().as_str();
            out.push_str(&format!("precision_{name} {:.4}\n", m.precision));
            out.push_str(&format!("recall_{name} {:.4}\n", m.recall));
            out.push_str(&format!("f1_{name} {:.4}\n", m.f1));
        }
        out
    }
}
