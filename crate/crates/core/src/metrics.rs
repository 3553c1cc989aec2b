//! Confusion-matrix metrics for the two heads.
//!
//! Resident precision and F1 are reported macro-averaged over both classes,
//! and per class so a single-positive-class reading is also available.

use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

use crate::model::{predict, ModelError, ModelParams};
use crate::windowing::SampleWindow;
use crate::{LabelPair, ACTIVITIES, RESIDENTS};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("cannot evaluate an empty test set")]
    Empty,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_rows(rows: &[&[u64]]) -> Self {
        let classes = rows.len();
        let mut m = Self::new(classes);
        for (t, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), classes, "confusion matrix must be square");
            m.counts[t * classes..(t + 1) * classes].copy_from_slice(row);
        }
        m
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.classes + predicted] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.classes, other.classes);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let trace: u64 = (0..self.classes).map(|c| self.get(c, c)).sum();
        trace as f64 / total as f64
    }

    /// Zero when nothing was predicted as `class`.
    pub fn precision(&self, class: usize) -> f64 {
        let predicted: u64 = (0..self.classes).map(|t| self.get(t, class)).sum();
        ratio(self.get(class, class), predicted)
    }

    /// Zero when `class` never occurs.
    pub fn recall(&self, class: usize) -> f64 {
        let actual: u64 = (0..self.classes).map(|p| self.get(class, p)).sum();
        ratio(self.get(class, class), actual)
    }

    pub fn f1(&self, class: usize) -> f64 {
        let (p, r) = (self.precision(class), self.recall(class));
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn macro_precision(&self) -> f64 {
        self.macro_of(Self::precision)
    }

    pub fn macro_recall(&self) -> f64 {
        self.macro_of(Self::recall)
    }

    pub fn macro_f1(&self) -> f64 {
        self.macro_of(Self::f1)
    }

    fn macro_of(&self, f: fn(&Self, usize) -> f64) -> f64 {
        (0..self.classes).map(|c| f(self, c)).sum::<f64>() / self.classes as f64
    }

    /// Classes whose precision or recall hit a zero denominator.
    pub fn degenerate_classes(&self) -> Vec<usize> {
        (0..self.classes)
            .filter(|&c| {
                let predicted: u64 = (0..self.classes).map(|t| self.get(t, c)).sum();
                let actual: u64 = (0..self.classes).map(|p| self.get(c, p)).sum();
                predicted == 0 || actual == 0
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let header: Vec<String> = (1..=self.classes).map(|c| format!("pred_{c}")).collect();
        writeln!(out, "true,{}", header.join(","))?;
        for t in 0..self.classes {
            let row: Vec<String> = (0..self.classes).map(|p| self.get(t, p).to_string()).collect();
            writeln!(out, "{},{}", t + 1, row.join(","))?;
        }
        Ok(())
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub resident: ConfusionMatrix,
    pub activity: ConfusionMatrix,
}

impl Default for Evaluation {
    fn default() -> Self {
        Self {
            resident: ConfusionMatrix::new(RESIDENTS),
            activity: ConfusionMatrix::new(ACTIVITIES),
        }
    }
}

impl Evaluation {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (LabelPair, LabelPair)>) -> Result<Self, MetricsError> {
        let mut e = Self::default();
        for (truth, pred) in pairs {
            e.record(truth, pred);
        }
        if e.resident.total() == 0 {
            return Err(MetricsError::Empty);
        }
        Ok(e)
    }

    pub fn record(&mut self, truth: LabelPair, pred: LabelPair) {
        self.resident.record(truth.resident, pred.resident);
        self.activity.record(truth.activity, pred.activity);
    }

    pub fn merge(&mut self, other: &Evaluation) {
        self.resident.merge(&other.resident);
        self.activity.merge(&other.activity);
    }

    pub fn summary(&self) -> Summary {
        Summary {
            resident_accuracy: self.resident.accuracy(),
            resident_precision: self.resident.macro_precision(),
            resident_f1: self.resident.macro_f1(),
            activity_accuracy: self.activity.accuracy(),
            resident_precision_per_class: (0..RESIDENTS).map(|c| self.resident.precision(c)).collect(),
            resident_f1_per_class: (0..RESIDENTS).map(|c| self.resident.f1(c)).collect(),
        }
    }
}

/// Headline numbers of one evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub resident_accuracy: f64,
    /// Macro average over both residents.
    pub resident_precision: f64,
    /// Macro average over both residents.
    pub resident_f1: f64,
    pub activity_accuracy: f64,
    pub resident_precision_per_class: Vec<f64>,
    pub resident_f1_per_class: Vec<f64>,
}

pub const METRICS_HEADER: &str = "method,resident_accuracy,resident_precision,resident_f1,activity_accuracy,\
resident_precision_r1,resident_precision_r2,resident_f1_r1,resident_f1_r2";

impl Summary {
    pub fn csv_row(&self, method: &str) -> String {
        format!(
            "{method},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.resident_accuracy,
            self.resident_precision,
            self.resident_f1,
            self.activity_accuracy,
            self.resident_precision_per_class[0],
            self.resident_precision_per_class[1],
            self.resident_f1_per_class[0],
            self.resident_f1_per_class[1],
        )
    }

    pub fn mean(items: &[Summary]) -> Summary {
        let n = items.len() as f64;
        let avg = |f: &dyn Fn(&Summary) -> f64| items.iter().map(f).sum::<f64>() / n;
        Summary {
            resident_accuracy: avg(&|s| s.resident_accuracy),
            resident_precision: avg(&|s| s.resident_precision),
            resident_f1: avg(&|s| s.resident_f1),
            activity_accuracy: avg(&|s| s.activity_accuracy),
            resident_precision_per_class: (0..RESIDENTS)
                .map(|c| avg(&|s| s.resident_precision_per_class[c]))
                .collect(),
            resident_f1_per_class: (0..RESIDENTS)
                .map(|c| avg(&|s| s.resident_f1_per_class[c]))
                .collect(),
        }
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "resident accuracy   {:.4}", self.resident_accuracy)?;
        writeln!(f, "resident precision  {:.4} (macro)", self.resident_precision)?;
        writeln!(f, "resident F1         {:.4} (macro)", self.resident_f1)?;
        writeln!(f, "activity accuracy   {:.4}", self.activity_accuracy)?;
        for c in 0..RESIDENTS {
            writeln!(
                f,
                "  resident {} as positive: precision {:.4}, F1 {:.4}",
                c + 1,
                self.resident_precision_per_class[c],
                self.resident_f1_per_class[c]
            )?;
        }
        Ok(())
    }
}

pub fn write_metrics_csv<W: Write>(mut out: W, rows: &[(String, Summary)]) -> io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for (method, s) in rows {
        writeln!(out, "{}", s.csv_row(method))?;
    }
    Ok(())
}

/// Argmax predictions of `model` on every window.
pub fn evaluate(windows: &[SampleWindow], model: &ModelParams) -> Result<Evaluation, MetricsError> {
    if windows.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut e = Evaluation::default();
    for w in windows {
        e.record(w.label, predict(model, w)?.label());
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hand_computed_two_class() {
        let m = ConfusionMatrix::from_rows(&[&[3, 1], &[2, 4]]);
        assert_relative_eq!(m.accuracy(), 0.7);
        assert_relative_eq!(m.precision(0), 3.0 / 5.0);
        assert_relative_eq!(m.precision(1), 4.0 / 5.0);
        assert_relative_eq!(m.macro_precision(), 0.7);
        assert_relative_eq!(m.recall(0), 0.75);
        assert_relative_eq!(m.recall(1), 2.0 / 3.0);
        assert_relative_eq!(m.f1(0), 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(m.f1(1), 8.0 / 11.0, epsilon = 1e-12);
        assert_relative_eq!(m.macro_f1(), (2.0 / 3.0 + 8.0 / 11.0) / 2.0, epsilon = 1e-12);
        assert!((m.macro_f1() - 0.697).abs() < 5e-4);
    }

    #[test]
    fn perfect_predictor() {
        let pairs = (0..30).map(|i| {
            let l = LabelPair::new(i % 2, i % 15);
            (l, l)
        });
        let s = Evaluation::from_pairs(pairs).unwrap().summary();
        assert_eq!(
            (s.resident_accuracy, s.resident_precision, s.resident_f1, s.activity_accuracy),
            (1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn zero_denominators_are_zero() {
        let m = ConfusionMatrix::from_rows(&[&[0, 5], &[0, 0]]);
        assert_eq!(m.precision(0), 0.0);
        assert_eq!(m.recall(1), 0.0);
        assert_eq!(m.f1(0), 0.0);
        assert_eq!(m.degenerate_classes(), vec![0, 1]);
    }

    #[test]
    fn empty_rejected() {
        assert_eq!(Evaluation::from_pairs(std::iter::empty()), Err(MetricsError::Empty));
    }

    #[test]
    fn csv_row_has_four_headline_numbers_first() {
        let m = Evaluation::from_pairs([(LabelPair::new(0, 1), LabelPair::new(0, 2))]).unwrap();
        let row = m.summary().csv_row("tsc");
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), METRICS_HEADER.split(',').count());
        assert_eq!(&fields[..5], &["tsc", "1.000000", "0.500000", "0.500000", "0.000000"]);
    }
}
