use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{accuracy_ci, metrics, ConfusionMatrix, EvalError, Metrics};
use crate::ingest::TrackerKind;
use crate::phonology::PropertyKind;
use crate::splits::SplitMode;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub video_id: String,
    pub truth: String,
    pub predicted: String,
}

/// Per-record predictions of one model on one task, with derived metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub property: PropertyKind,
    pub mode: SplitMode,
    pub tracker: Option<TrackerKind>,
    pub model: String,
    /// Confusion-matrix class order.
    pub classes: Vec<String>,
    pub predictions: Vec<Prediction>,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    pub alpha: f64,
    /// Confidence-interval half-width of the accuracy.
    pub ci_half_width: f64,
}

impl EvalReport {
    /// True labels absent from `classes` are appended to the class list.
    pub fn new(
        property: PropertyKind,
        mode: SplitMode,
        tracker: Option<TrackerKind>,
        model: impl Into<String>,
        mut classes: Vec<String>,
        predictions: Vec<Prediction>,
        alpha: f64,
    ) -> Result<EvalReport, EvalError> {
        for p in &predictions {
            if !classes.contains(&p.truth) {
                classes.push(p.truth.clone());
            }
        }
        let index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let mut confusion = ConfusionMatrix::new(classes.len());
        for p in &predictions {
            let predicted = *index.get(p.predicted.as_str()).ok_or(EvalError::ClassOutOfRange {
                index: classes.len(),
                classes: classes.len(),
            })?;
            confusion.record(index[p.truth.as_str()], predicted)?;
        }
        let metrics = metrics(&confusion)?;
        let ci_half_width = accuracy_ci(metrics.accuracy, predictions.len(), alpha);
        Ok(EvalReport {
            property,
            mode,
            tracker,
            model: model.into(),
            classes,
            predictions,
            confusion,
            metrics,
            alpha,
            ci_half_width,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        std::fs::write(path, self.to_json()).map_err(|e| EvalError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<EvalReport, EvalError> {
        let io = |message: String| EvalError::Io {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| io(e.to_string()))
    }

    fn row_key(&self) -> (String, String, String) {
        (
            self.model.clone(),
            self.tracker.map_or("-".to_string(), |t| t.to_string()),
            self.mode.to_string(),
        )
    }
}

fn percent(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

/// Text table: one row per model × tracker × mode, two columns per property
/// (`A ± ci` and `Ā`), in percent.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut rows: BTreeMap<(String, String, String), BTreeMap<PropertyKind, &EvalReport>> = BTreeMap::new();
    for r in reports {
        rows.entry(r.row_key()).or_default().insert(r.property, r);
    }
    let kinds: Vec<PropertyKind> = PropertyKind::ALL
        .into_iter()
        .filter(|k| reports.iter().any(|r| r.property == *k))
        .collect();
    let mut header = vec!["model".to_string(), "tracker".to_string(), "mode".to_string()];
    for k in &kinds {
        header.push(format!("{k} A"));
        header.push(format!("{k} Ā"));
    }
    let mut table = vec![header];
    for ((model, tracker, mode), by_kind) in &rows {
        let mut line = vec![model.clone(), tracker.clone(), mode.clone()];
        for k in &kinds {
            match by_kind.get(k) {
                Some(r) => {
                    line.push(format!("{} ± {}", percent(r.metrics.accuracy), percent(r.ci_half_width)));
                    line.push(percent(r.metrics.balanced_accuracy));
                }
                None => line.extend(["-".to_string(), "-".to_string()]),
            }
        }
        table.push(line);
    }
    let widths: Vec<usize> = (0..table[0].len())
        .map(|c| table.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &table {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell}{}", " ".repeat(w - cell.chars().count())))
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}

/// One CSV line per report with every metric as a fraction.
pub fn render_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from(
        "model,tracker,mode,property,n,accuracy,ci_half_width,balanced_accuracy,\
         micro_precision,micro_recall,macro_precision,macro_recall,mcc\n",
    );
    let mut sorted: Vec<&EvalReport> = reports.iter().collect();
    sorted.sort_by_key(|r| (r.row_key(), r.property));
    for r in sorted {
        let (model, tracker, mode) = r.row_key();
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{model},{tracker},{mode},{},{},{},{},{},{},{},{},{},{}",
            r.property,
            r.predictions.len(),
            m.accuracy,
            r.ci_half_width,
            m.balanced_accuracy,
            m.micro_precision,
            m.micro_recall,
            m.macro_precision,
            m.macro_recall,
            m.mcc
        );
    }
    out
}
