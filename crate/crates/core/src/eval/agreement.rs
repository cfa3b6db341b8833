use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{EvalError, EvalReport};
use crate::phonology::PropertyKind;
use crate::splits::SplitMode;

/// Categories used for κ: every class of the task, not only those that
/// occur among the wrong predictions.
pub const KAPPA_CATEGORY_SPACE: &str = "all task classes";

/// Fleiss' κ over an `items × categories` count matrix.
///
/// Returns `Ok(None)` when chance agreement is 1 (every rating falls in a
/// single category), where κ is undefined.
pub fn fleiss_kappa(ratings: &[Vec<u64>], n_raters: u64) -> Result<Option<f64>, EvalError> {
    if ratings.len() < 2 {
        return Err(EvalError::TooFew {
            what: "items",
            needed: 2,
            got: ratings.len(),
        });
    }
    if n_raters < 2 {
        return Err(EvalError::TooFew {
            what: "raters",
            needed: 2,
            got: n_raters as usize,
        });
    }
    let k = ratings[0].len();
    let mut totals = vec![0u64; k];
    let n = n_raters as f64;
    let mut p_bar = 0.0;
    for (item, row) in ratings.iter().enumerate() {
        let sum: u64 = row.iter().sum();
        if sum != n_raters || row.len() != k {
            return Err(EvalError::RowSumMismatch {
                item,
                sum,
                expected: n_raters,
            });
        }
        let squares: u64 = row.iter().map(|&c| c * c).sum();
        p_bar += (squares - n_raters) as f64 / (n * (n - 1.0));
        for (t, &c) in totals.iter_mut().zip(row) {
            *t += c;
        }
    }
    let items = ratings.len() as f64;
    p_bar /= items;
    let p_e: f64 = totals.iter().map(|&t| (t as f64 / (items * n)).powi(2)).sum();
    if (1.0 - p_e).abs() < 1e-12 {
        return Ok(None);
    }
    Ok(Some((p_bar - p_e) / (1.0 - p_e)))
}

/// Videos that every model misclassifies, with per-video vote counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointMisclassification {
    pub classes: Vec<String>,
    /// Sorted video ids.
    pub ids: Vec<String>,
    pub truth: Vec<String>,
    /// Row `i`: how many models predicted each class for `ids[i]`.
    pub ratings: Vec<Vec<u64>>,
    /// Row `i`: each model's prediction for `ids[i]`, in report order.
    pub predictions: Vec<Vec<String>>,
}

type ByVideo<'a> = BTreeMap<&'a str, (&'a str, &'a str)>;

fn by_video(report: &EvalReport) -> ByVideo<'_> {
    report
        .predictions
        .iter()
        .map(|p| (p.video_id.as_str(), (p.truth.as_str(), p.predicted.as_str())))
        .collect()
}

pub fn joint_misclassified(reports: &[EvalReport]) -> Result<JointMisclassification, EvalError> {
    let Some(first) = reports.first() else {
        return Err(EvalError::TooFew {
            what: "reports",
            needed: 1,
            got: 0,
        });
    };
    let tables: Vec<ByVideo> = reports.iter().map(by_video).collect();
    for (r, table) in reports.iter().zip(&tables).skip(1) {
        if r.property != first.property || r.classes != first.classes {
            return Err(EvalError::MismatchedTestSets(format!(
                "{} reports on {} with {} classes, {} on {} with {} classes",
                first.model,
                first.property,
                first.classes.len(),
                r.model,
                r.property,
                r.classes.len()
            )));
        }
        if !table.keys().eq(tables[0].keys()) {
            return Err(EvalError::MismatchedTestSets(format!(
                "{} and {} evaluate different videos",
                first.model, r.model
            )));
        }
    }
    let index: BTreeMap<&str, usize> = first.classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let mut out = JointMisclassification {
        classes: first.classes.clone(),
        ids: Vec::new(),
        truth: Vec::new(),
        ratings: Vec::new(),
        predictions: Vec::new(),
    };
    for (&id, &(truth, _)) in &tables[0] {
        if tables.iter().any(|t| t[id].1 == t[id].0) {
            continue;
        }
        let mut row = vec![0u64; first.classes.len()];
        let mut preds = Vec::with_capacity(tables.len());
        for t in &tables {
            let predicted = t[id].1;
            if let Some(&c) = index.get(predicted) {
                row[c] += 1;
            }
            preds.push(predicted.to_string());
        }
        out.ids.push(id.to_string());
        out.truth.push(truth.to_string());
        out.ratings.push(row);
        out.predictions.push(preds);
    }
    Ok(out)
}

/// κ over the videos all models misclassify on one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub property: PropertyKind,
    pub mode: SplitMode,
    pub models: Vec<String>,
    pub category_space: String,
    /// `None` when κ is undefined or fewer than two videos qualify.
    pub kappa: Option<f64>,
    pub joint: JointMisclassification,
}

pub fn agreement(reports: &[EvalReport]) -> Result<AgreementReport, EvalError> {
    if reports.len() < 2 {
        return Err(EvalError::TooFew {
            what: "reports",
            needed: 2,
            got: reports.len(),
        });
    }
    let joint = joint_misclassified(reports)?;
    let kappa = if joint.ids.len() >= 2 {
        fleiss_kappa(&joint.ratings, reports.len() as u64)?
    } else {
        None
    };
    Ok(AgreementReport {
        property: reports[0].property,
        mode: reports[0].mode,
        models: reports.iter().map(|r| r.model.clone()).collect(),
        category_space: KAPPA_CATEGORY_SPACE.to_string(),
        kappa,
        joint,
    })
}

/// Test-set membership and jointly misclassified videos of one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskErrors {
    pub task: String,
    pub test_ids: BTreeSet<String>,
    pub joint: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossTaskRate {
    /// Number of tasks whose test sets contain the video.
    pub m: usize,
    pub videos: usize,
    /// Videos jointly misclassified on all `m` of their tasks.
    pub jointly_misclassified: usize,
    /// `None` when no video appears in exactly `m` test sets.
    pub rate: Option<f64>,
}

/// For `m = 2..=tasks`, the fraction of videos in exactly `m` test sets that
/// are jointly misclassified on every one of them.
pub fn cross_task_misclassification(tasks: &[TaskErrors]) -> Result<Vec<CrossTaskRate>, EvalError> {
    if tasks.len() < 2 {
        return Err(EvalError::TooFew {
            what: "tasks",
            needed: 2,
            got: tasks.len(),
        });
    }
    let mut membership: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for task in tasks {
        for id in &task.test_ids {
            let entry = membership.entry(id.as_str()).or_default();
            entry.0 += 1;
            if task.joint.contains(id) {
                entry.1 += 1;
            }
        }
    }
    Ok((2..=tasks.len())
        .map(|m| {
            let in_m: Vec<_> = membership.values().filter(|(count, _)| *count == m).collect();
            let jointly = in_m.iter().filter(|(count, wrong)| wrong == count).count();
            CrossTaskRate {
                m,
                videos: in_m.len(),
                jointly_misclassified: jointly,
                rate: (!in_m.is_empty()).then(|| jointly as f64 / in_m.len() as f64),
            }
        })
        .collect())
}
