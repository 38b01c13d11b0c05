//! Classification and captioning metrics, and results tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{detokenize, split_words, JewelryClass};

/// Fraction of positions where `predictions` equals `labels`.
pub fn ccr<T: PartialEq>(predictions: &[T], labels: &[T]) -> Result<f64> {
    check_lengths(predictions.len(), labels.len())?;
    if labels.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::InputMismatch(format!(
            "{a} predictions for {b} labels"
        )));
    }
    Ok(())
}

/// Rows are the true class, columns the predicted class, both in
/// [`JewelryClass::ALL`] order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 4]; 4],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..4).map(|i| self.counts[i][i]).sum()
    }

    pub fn true_positives(&self, class: JewelryClass) -> u64 {
        let i = class.index();
        self.counts[i][i]
    }

    pub fn false_positives(&self, class: JewelryClass) -> u64 {
        let i = class.index();
        (0..4).filter(|&r| r != i).map(|r| self.counts[r][i]).sum()
    }

    pub fn false_negatives(&self, class: JewelryClass) -> u64 {
        let i = class.index();
        (0..4).filter(|&c| c != i).map(|c| self.counts[i][c]).sum()
    }
}

pub fn confusion(predictions: &[JewelryClass], labels: &[JewelryClass]) -> Result<ConfusionMatrix> {
    check_lengths(predictions.len(), labels.len())?;
    let mut cm = ConfusionMatrix::default();
    for (p, l) in predictions.iter().zip(labels) {
        cm.counts[l.index()][p.index()] += 1;
    }
    Ok(cm)
}

/// Like [`confusion`], for class names as they appear in manifests or model
/// output.
pub fn confusion_from_names<S: AsRef<str>>(
    predictions: &[S],
    labels: &[S],
) -> Result<ConfusionMatrix> {
    let parse = |xs: &[S]| -> Result<Vec<JewelryClass>> {
        xs.iter().map(|s| JewelryClass::parse(s.as_ref())).collect()
    };
    confusion(&parse(predictions)?, &parse(labels)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1 for one class. A zero denominator gives 0.
pub fn prf1(cm: &ConfusionMatrix, class: JewelryClass) -> ClassScores {
    let tp = cm.true_positives(class);
    let precision = ratio(tp, tp + cm.false_positives(class));
    let recall = ratio(tp, tp + cm.false_negatives(class));
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ClassScores {
        precision,
        recall,
        f1,
    }
}

/// Lowercase, token round trip, exactly one terminal period.
pub fn canonicalize(caption: &str) -> String {
    let mut words = split_words(caption);
    while words.last().is_some_and(|w| w == ".") {
        words.pop();
    }
    words.push(".".into());
    detokenize(&words)
}

pub fn exact_match<S: AsRef<str>, G: AsRef<str>>(generated: &[S], gold: &[G]) -> Result<f64> {
    check_lengths(generated.len(), gold.len())?;
    if gold.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let hits = generated
        .iter()
        .zip(gold)
        .filter(|(g, o)| canonicalize(g.as_ref()) == canonicalize(o.as_ref()))
        .count();
    Ok(hits as f64 / gold.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ccr: f64,
    pub confusion: ConfusionMatrix,
    pub per_class: BTreeMap<JewelryClass, ClassScores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_exact_match: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl MetricsReport {
    pub fn classification(predictions: &[JewelryClass], labels: &[JewelryClass]) -> Result<Self> {
        let ccr = ccr(predictions, labels)?;
        let cm = confusion(predictions, labels)?;
        let mut warnings = Vec::new();
        let mut per_class = BTreeMap::new();
        for class in JewelryClass::ALL {
            let tp = cm.true_positives(class);
            if tp + cm.false_positives(class) == 0 {
                warnings.push(format!("{class} never predicted; precision set to 0"));
            }
            if tp + cm.false_negatives(class) == 0 {
                warnings.push(format!("{class} absent from labels; recall set to 0"));
            }
            per_class.insert(class, prf1(&cm, class));
        }
        Ok(Self {
            ccr,
            confusion: cm,
            per_class,
            caption_exact_match: None,
            warnings,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "CCR {:.4}", self.ccr).unwrap();
        if let Some(em) = self.caption_exact_match {
            writeln!(out, "Caption exact match {em:.4}").unwrap();
        }
        writeln!(
            out,
            "{:<10} {:>9} {:>9} {:>9}",
            "Class", "Precision", "Recall", "F1"
        )
        .unwrap();
        for (class, s) in &self.per_class {
            writeln!(
                out,
                "{:<10} {:>9.4} {:>9.4} {:>9.4}",
                class.name(),
                s.precision,
                s.recall,
                s.f1
            )
            .unwrap();
        }
        for w in &self.warnings {
            writeln!(out, "warning: {w}").unwrap();
        }
        out
    }
}

/// One line of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub cnn: String,
    pub rnn: String,
    pub neurons: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<String>,
    pub val_ccr: f64,
    pub val_loss: f64,
    pub test_ccr: f64,
    /// Set when the point failed to train; such rows never win.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl ResultRow {
    pub fn new(
        cnn: &str,
        rnn: &str,
        neurons: usize,
        val_ccr: f64,
        val_loss: f64,
        test_ccr: f64,
    ) -> Self {
        Self {
            cnn: cnn.into(),
            rnn: rnn.into(),
            neurons,
            batch: None,
            learning_rate: None,
            optimizer: None,
            val_ccr,
            val_loss,
            test_ccr,
            failure: None,
        }
    }
}

/// Highest test CCR, then lowest validation loss, then earliest row.
pub fn best_row(rows: &[ResultRow]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in rows.iter().enumerate() {
        if r.failure.is_some() || r.test_ccr.is_nan() {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => {
                let cur = &rows[b];
                r.test_ccr > cur.test_ccr || r.test_ccr == cur.test_ccr && r.val_loss < cur.val_loss
            }
        };
        if better {
            best = Some(i);
        }
    }
    match best {
        Some(b) => Ok(b),
        None if rows.is_empty() => Err(Error::EmptyEvaluation),
        None => Ok(0),
    }
}

/// Fixed-width table; the best row is marked with `*`.
pub fn render_report(rows: &[ResultRow]) -> Result<String> {
    let best = best_row(rows)?;
    let extra = rows
        .iter()
        .any(|r| r.batch.is_some() || r.learning_rate.is_some() || r.optimizer.is_some());
    let mut out = String::new();
    write!(out, "  {:<12} {:<5} {:>7}", "CNN-scale", "RNN", "Neurons").unwrap();
    if extra {
        write!(out, " {:>5} {:>7} {:<9}", "Batch", "LR", "Optimizer").unwrap();
    }
    writeln!(
        out,
        " {:>9} {:>9} {:>9}",
        "Val. CCR", "Val. Loss", "Test CCR"
    )
    .unwrap();
    for (i, r) in rows.iter().enumerate() {
        let mark = if i == best { '*' } else { ' ' };
        write!(out, "{mark} {:<12} {:<5} {:>7}", r.cnn, r.rnn, r.neurons).unwrap();
        if extra {
            let batch = r.batch.map_or("-".into(), |b| b.to_string());
            let lr = r.learning_rate.map_or("-".into(), |l| l.to_string());
            let opt = r.optimizer.as_deref().unwrap_or("-");
            write!(out, " {batch:>5} {lr:>7} {opt:<9}").unwrap();
        }
        match &r.failure {
            None => writeln!(
                out,
                " {:>9.4} {:>9.4} {:>9.4}",
                r.val_ccr, r.val_loss, r.test_ccr
            )
            .unwrap(),
            Some(f) => writeln!(out, " failed: {f}").unwrap(),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub best: usize,
    pub rows: Vec<ResultRow>,
}

pub fn report_json(rows: &[ResultRow]) -> Result<ReportJson> {
    Ok(ReportJson {
        best: best_row(rows)?,
        rows: rows.to_vec(),
    })
}
