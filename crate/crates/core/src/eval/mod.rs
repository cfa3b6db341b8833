//! Classification metrics, confidence intervals and agreement analysis.
//!
//! Metrics are fractions in `[0, 1]` (MCC in `[-1, 1]`); report rendering
//! converts to percentages.

mod agreement;
mod report;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

pub use agreement::{
    agreement, cross_task_misclassification, fleiss_kappa, joint_misclassified, AgreementReport, CrossTaskRate,
    JointMisclassification, TaskErrors, KAPPA_CATEGORY_SPACE,
};
pub use report::{render_csv, render_table, EvalReport, Prediction};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },
    #[error("{truth} true labels but {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("item {item} has {sum} ratings, expected {expected}")]
    RowSumMismatch { item: usize, sum: u64, expected: u64 },
    #[error("agreement needs at least {needed} {what}, got {got}")]
    TooFew { what: &'static str, needed: usize, got: usize },
    #[error("reports do not share the same test set: {0}")]
    MismatchedTestSets(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// `K × K` counts; rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> ConfusionMatrix {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_predictions(truth: &[usize], predicted: &[usize], classes: usize) -> Result<ConfusionMatrix, EvalError> {
        if truth.len() != predicted.len() {
            return Err(EvalError::LengthMismatch {
                truth: truth.len(),
                predicted: predicted.len(),
            });
        }
        let mut cm = ConfusionMatrix::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            cm.record(t, p)?;
        }
        Ok(cm)
    }

    /// Builds from nested rows.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<ConfusionMatrix, EvalError> {
        let k = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != k) {
            return Err(EvalError::ClassOutOfRange {
                index: bad.len(),
                classes: k,
            });
        }
        Ok(ConfusionMatrix {
            classes: k,
            counts: rows.concat(),
        })
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<(), EvalError> {
        let k = self.classes;
        if let Some(index) = [truth, predicted].into_iter().find(|&i| i >= k) {
            return Err(EvalError::ClassOutOfRange { index, classes: k });
        }
        self.counts[truth * k + predicted] += 1;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.classes.max(1)).map(<[u64]>::to_vec).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|i| self.get(i, i)).sum()
    }

    /// Number of evaluation samples of class `c` (TP + FN).
    pub fn support(&self, c: usize) -> u64 {
        (0..self.classes).map(|p| self.get(c, p)).sum()
    }

    /// Number of predictions of class `c` (TP + FP).
    pub fn predicted(&self, c: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, c)).sum()
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.get(c, c)
    }

    pub fn false_positives(&self, c: usize) -> u64 {
        self.predicted(c) - self.get(c, c)
    }

    pub fn false_negatives(&self, c: usize) -> u64 {
        self.support(c) - self.get(c, c)
    }

    pub fn true_negatives(&self, c: usize) -> u64 {
        self.total() - self.support(c) - self.false_positives(c)
    }
}

/// The seven reported metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub mcc: f64,
    /// Classes with support that were never predicted; their precision is
    /// undefined and counted as 0 in the macro mean.
    pub undefined_precision: Vec<usize>,
}

/// Computes every metric from a confusion matrix.
///
/// Per-class averages run over the classes with nonzero support in the
/// matrix. Multiclass MCC is the covariance (Rₖ) form; a zero denominator
/// yields 0.
pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let k = cm.classes();
    let s = total as f64;
    let accuracy = cm.trace() as f64 / s;

    let supported: Vec<usize> = (0..k).filter(|&c| cm.support(c) > 0).collect();
    let mut recall_sum = 0.0;
    let mut precision_sum = 0.0;
    let mut undefined_precision = Vec::new();
    for &c in &supported {
        let tp = cm.true_positives(c) as f64;
        recall_sum += tp / cm.support(c) as f64;
        match cm.predicted(c) {
            0 => undefined_precision.push(c),
            p => precision_sum += tp / p as f64,
        }
    }
    let n_supported = supported.len() as f64;
    let macro_recall = recall_sum / n_supported;
    let macro_precision = precision_sum / n_supported;

    let c = cm.trace() as f64;
    let (mut pt, mut pp, mut tt) = (0.0, 0.0, 0.0);
    for class in 0..k {
        let p = cm.predicted(class) as f64;
        let t = cm.support(class) as f64;
        pt += p * t;
        pp += p * p;
        tt += t * t;
    }
    let denominator = ((s * s - pp) * (s * s - tt)).sqrt();
    let mcc = if denominator == 0.0 {
        0.0
    } else {
        (c * s - pt) / denominator
    };

    Ok(Metrics {
        accuracy,
        balanced_accuracy: macro_recall,
        micro_precision: accuracy,
        micro_recall: accuracy,
        macro_precision,
        macro_recall,
        mcc,
        undefined_precision,
    })
}

/// Matthews correlation from the binary counts.
pub fn binary_mcc(tp: u64, tn: u64, fp: u64, fn_: u64) -> f64 {
    let (tp, tn, fp, fn_) = (tp as f64, tn as f64, fp as f64, fn_ as f64);
    let denominator = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    if denominator == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fn_) / denominator
    }
}

/// Two-sided standard normal quantile `z(1 − α/2)`.
pub fn normal_quantile(alpha: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(1.0 - alpha / 2.0)
}

/// Half-width of the asymptotic normal confidence interval of a proportion.
pub fn accuracy_ci(p_hat: f64, n: usize, alpha: f64) -> f64 {
    assert!((0.0..=1.0).contains(&p_hat) && n >= 1, "p_hat in [0, 1] and n ≥ 1");
    normal_quantile(alpha) * (p_hat * (1.0 - p_hat) / n as f64).sqrt()
}
