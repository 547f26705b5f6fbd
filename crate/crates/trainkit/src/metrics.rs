use serde::{Deserialize, Serialize};

use models::EntityClassifier;
use textprep::{EncodedExample, TaskSpec};

use crate::error::{Error, Result};

/// Classification metrics. `confusion[gold][predicted]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub classes: Vec<String>,
    pub total: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub support: Vec<usize>,
    pub confusion: Vec<Vec<usize>>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalReport {
    pub fn from_confusion(task: &TaskSpec, confusion: Vec<Vec<usize>>) -> Result<Self> {
        let k = task.num_classes();
        if confusion.len() != k || confusion.iter().any(|r| r.len() != k) {
            return Err(Error::Eval(format!("confusion matrix must be {k}×{k}")));
        }
        let total: usize = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(Error::Eval("no examples to evaluate".into()));
        }
        let mut warnings = Vec::new();
        let (mut precision, mut recall, mut f1, mut support) = (vec![], vec![], vec![], vec![]);
        for c in 0..k {
            let tp = confusion[c][c];
            let gold: usize = confusion[c].iter().sum();
            let predicted: usize = confusion.iter().map(|r| r[c]).sum();
            let p = ratio(tp, predicted);
            let r = ratio(tp, gold);
            let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            if gold == 0 && predicted == 0 {
                let msg = format!("class {:?} has no gold or predicted examples; F1 set to 0", task.classes[c]);
                log::warn!("{msg}");
                warnings.push(msg);
            }
            precision.push(p);
            recall.push(r);
            f1.push(f);
            support.push(gold);
        }
        let trace: usize = (0..k).map(|c| confusion[c][c]).sum();
        Ok(EvalReport {
            task: task.name.to_string(),
            classes: task.classes.clone(),
            total,
            accuracy: trace as f64 / total as f64,
            macro_f1: f1.iter().sum::<f64>() / k as f64,
            precision,
            recall,
            f1,
            support,
            confusion,
            warnings,
        })
    }

    pub fn from_predictions(task: &TaskSpec, gold: &[usize], predicted: &[usize]) -> Result<Self> {
        let k = task.num_classes();
        if gold.len() != predicted.len() {
            return Err(Error::Eval(format!("{} gold labels but {} predictions", gold.len(), predicted.len())));
        }
        let mut confusion = vec![vec![0; k]; k];
        for (&g, &p) in gold.iter().zip(predicted) {
            if g >= k || p >= k {
                return Err(Error::Eval(format!("label pair ({g}, {p}) out of range for {k} classes")));
            }
            confusion[g][p] += 1;
        }
        Self::from_confusion(task, confusion)
    }

    /// Mean recall over the minority classes (all but the last).
    pub fn minority_recall(&self) -> f64 {
        let m = self.recall.len() - 1;
        self.recall[..m].iter().sum::<f64>() / m as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn evaluate(model: &EntityClassifier, task: &TaskSpec, data: &[EncodedExample]) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::Eval("empty dataset".into()));
    }
    let mut gold = Vec::with_capacity(data.len());
    let mut pred = Vec::with_capacity(data.len());
    for ex in data {
        gold.push(ex.label);
        pred.push(model.predict(ex)?);
    }
    EvalReport::from_predictions(task, &gold, &pred)
}

/// Text table with one row per labelled report:
/// `| Run | Accuracy | Macro F1-score | Recall <class>... |`.
pub fn render_table(rows: &[(String, &EvalReport)]) -> String {
    let Some((_, first)) = rows.first() else {
        return String::new();
    };
    let mut header = vec!["Run".to_string(), "Accuracy".into(), "Macro F1-score".into()];
    header.extend(first.classes.iter().map(|c| format!("Recall {c}")));
    let mut body: Vec<Vec<String>> = Vec::new();
    for (name, r) in rows {
        let mut cells = vec![name.clone(), format!("{:.4}", r.accuracy), format!("{:.4}", r.macro_f1)];
        cells.extend(r.recall.iter().map(|v| format!("{v:.4}")));
        body.push(cells);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|i| body.iter().map(|r| r[i].len()).chain([header[i].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        format!("| {} |\n", parts.join(" | "))
    };
    let mut out = line(&header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&format!("|-{}-|\n", rule.join("-|-")));
    for r in &body {
        out.push_str(&line(r));
    }
    out
}

/// Same rows as [`render_table`], comma separated.
pub fn render_csv(rows: &[(String, &EvalReport)]) -> String {
    let Some((_, first)) = rows.first() else {
        return String::new();
    };
    let mut out = String::from("run,accuracy,macro_f1");
    for c in &first.classes {
        out.push_str(&format!(",recall_{}", c.to_lowercase().replace(' ', "_")));
    }
    out.push('\n');
    for (name, r) in rows {
        out.push_str(&format!("{name},{},{}", r.accuracy, r.macro_f1));
        for v in &r.recall {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}
