use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ConfusionMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub class_names: Vec<String>,
    pub classes: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: AverageMetrics,
    pub weighted_avg: AverageMetrics,
    pub total_support: u64,
}

/// `num / den`, or 0 when the denominator is 0.
fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn per_class_metrics(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    (0..cm.num_classes())
        .map(|k| {
            let tp = cm.true_positives(k);
            let precision = ratio(tp, tp + cm.false_positives(k));
            let recall = ratio(tp, tp + cm.false_negatives(k));
            ClassMetrics {
                precision,
                recall,
                f1: f1_score(precision, recall),
                support: cm.support(k),
            }
        })
        .collect()
}

pub fn classification_report(cm: &ConfusionMatrix) -> Result<ClassificationReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Report("cannot report on zero samples".into()));
    }
    let classes = per_class_metrics(cm);
    let k = classes.len() as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| classes.iter().map(f).sum::<f64>() / k;
    let weighted = |f: fn(&ClassMetrics) -> f64| {
        classes.iter().map(|c| f(c) * c.support as f64).sum::<f64>() / total as f64
    };
    Ok(ClassificationReport {
        class_names: cm.class_names().to_vec(),
        accuracy: ratio(cm.trace(), total),
        macro_avg: AverageMetrics {
            precision: mean(|c| c.precision),
            recall: mean(|c| c.recall),
            f1: mean(|c| c.f1),
            support: total,
        },
        weighted_avg: AverageMetrics {
            precision: weighted(|c| c.precision),
            recall: weighted(|c| c.recall),
            f1: weighted(|c| c.f1),
            support: total,
        },
        classes,
        total_support: total,
    })
}

impl ClassificationReport {
    /// Fixed-width table: one row per class, then accuracy, macro and
    /// weighted averages. Values have two decimals.
    pub fn to_text(&self) -> String {
        let width = self
            .class_names
            .iter()
            .map(|n| n.chars().count())
            .chain([12])
            .max()
            .unwrap_or(12);
        let mut out = String::new();
        let _ = writeln!(out, "{:>width$} {:>9} {:>9} {:>9} {:>9}", "", "precision", "recall", "f1-score", "support");
        out.push('\n');
        for (name, c) in self.class_names.iter().zip(&self.classes) {
            let _ = writeln!(
                out,
                "{name:>width$} {:>9.2} {:>9.2} {:>9.2} {:>9}",
                c.precision, c.recall, c.f1, c.support
            );
        }
        out.push('\n');
        let _ = writeln!(
            out,
            "{:>width$} {:>9} {:>9} {:>9.2} {:>9}",
            "accuracy", "", "", self.accuracy, self.total_support
        );
        for (label, a) in [("macro avg", &self.macro_avg), ("weighted avg", &self.weighted_avg)] {
            let _ = writeln!(
                out,
                "{label:>width$} {:>9.2} {:>9.2} {:>9.2} {:>9}",
                a.precision, a.recall, a.f1, a.support
            );
        }
        out
    }

    /// Full-precision JSON document.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields are plain numbers and strings")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn table_row_consistency() {
        let f1 = f1_score(0.94, 0.97);
        assert!((f1 - 0.954764).abs() < 1e-6);
        assert_eq!(format!("{f1:.2}"), "0.95");
    }

    #[test]
    fn support_totals() {
        let cm = ConfusionMatrix::from_counts(
            vec![vec![80, 3, 1], vec![2, 84, 2], vec![3, 1, 75]],
            names(3),
        )
        .unwrap();
        let r = classification_report(&cm).unwrap();
        assert_eq!(r.total_support, 251);
        assert_eq!(r.classes.iter().map(|c| c.support).sum::<u64>(), 251);
        assert_eq!(r.accuracy, 239.0 / 251.0);
    }

    #[test]
    fn zero_row_and_column() {
        let cm = ConfusionMatrix::from_counts(vec![vec![3, 0], vec![0, 0]], names(2)).unwrap();
        let m = per_class_metrics(&cm);
        assert_eq!(m[1], ClassMetrics { precision: 0.0, recall: 0.0, f1: 0.0, support: 0 });
        assert_eq!(m[0].f1, 1.0);
    }

    #[test]
    fn zero_samples_is_an_error() {
        let cm = ConfusionMatrix::zeros(names(3)).unwrap();
        assert!(matches!(classification_report(&cm), Err(Error::Report(_))));
    }

    #[test]
    fn text_layout() {
        let cm = ConfusionMatrix::from_counts(vec![vec![9, 1], vec![0, 10]], vec!["Normal".into(), "Pneumonia".into()])
            .unwrap();
        let text = classification_report(&cm).unwrap().to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "             precision    recall  f1-score   support");
        assert_eq!(lines[2], "      Normal      1.00      0.90      0.95        10");
        assert_eq!(lines[3], "   Pneumonia      0.91      1.00      0.95        10");
        assert_eq!(lines[5], "    accuracy                          0.95        20");
        assert!(lines[6].starts_with("   macro avg"));
        assert!(lines[7].starts_with("weighted avg"));
    }

    #[test]
    fn json_round_trips() {
        let cm = ConfusionMatrix::from_counts(vec![vec![2, 1], vec![1, 3]], names(2)).unwrap();
        let r = classification_report(&cm).unwrap();
        let back: ClassificationReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
