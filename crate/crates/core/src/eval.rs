//! Precision, recall and F1 for inconsistency detectors. Positive means
//! "inconsistent".

use std::ops::Add;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("{predictions} predictions for {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("nothing to score")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn record(&mut self, prediction: bool, label: bool) {
        match (prediction, label) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

impl Add for ConfusionMatrix {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        ConfusionMatrix {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
        }
    }
}

pub fn score(predictions: &[bool], labels: &[bool]) -> Result<ConfusionMatrix, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut m = ConfusionMatrix::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        m.record(p, l);
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// F1 from precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    ratio(2.0 * precision * recall, precision + recall)
}

pub fn metrics(m: &ConfusionMatrix) -> Metrics {
    let precision = ratio(m.tp as f64, (m.tp + m.fp) as f64);
    let recall = ratio(m.tp as f64, (m.tp + m.fn_) as f64);
    Metrics {
        precision,
        recall,
        f1: f1_score(precision, recall),
    }
}

/// A published (P, R, F1) triple and whether F1 follows from P and R.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportedScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ReportedScores {
    pub fn recomputed_f1(&self) -> f64 {
        f1_score(self.precision, self.recall)
    }

    pub fn is_consistent(&self, tolerance: f64) -> bool {
        (self.recomputed_f1() - self.f1).abs() <= tolerance
    }
}

/// CSV header and one row per (classifier, dataset).
pub fn metrics_csv(rows: &[(String, String, ConfusionMatrix)]) -> String {
    let mut out = String::from("classifier,dataset,tp,fp,tn,fn,precision,recall,f1\n");
    for (classifier, dataset, m) in rows {
        let s = metrics(m);
        out.push_str(&format!(
            "{classifier},{dataset},{},{},{},{},{:.4},{:.4},{:.4}\n",
            m.tp, m.fp, m.tn, m.fn_, s.precision, s.recall, s.f1
        ));
    }
    out
}

pub fn metrics_text(rows: &[(String, String, ConfusionMatrix)]) -> String {
    let mut out = format!(
        "{:<14} {:<20} {:>7} {:>7} {:>7} {:>7} {:>9} {:>9} {:>9}\n",
        "classifier", "dataset", "tp", "fp", "tn", "fn", "precision", "recall", "f1"
    );
    for (classifier, dataset, m) in rows {
        let s = metrics(m);
        out.push_str(&format!(
            "{classifier:<14} {dataset:<20} {:>7} {:>7} {:>7} {:>7} {:>9.4} {:>9.4} {:>9.4}\n",
            m.tp, m.fp, m.tn, m.fn_, s.precision, s.recall, s.f1
        ));
    }
    out
}
