use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `K × K` counts; rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<u64>,
    class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn zeros(class_names: Vec<String>) -> Result<Self> {
        if class_names.is_empty() {
            return Err(Error::Param("confusion matrix needs at least one class".into()));
        }
        Ok(Self {
            counts: vec![0; class_names.len() * class_names.len()],
            class_names,
        })
    }

    /// Rows of counts, validated to be square.
    pub fn from_counts(rows: Vec<Vec<u64>>, class_names: Vec<String>) -> Result<Self> {
        let k = class_names.len();
        if rows.len() != k || rows.iter().any(|r| r.len() != k) {
            return Err(Error::Shape(format!("confusion counts must be {k}x{k}")));
        }
        let mut cm = Self::zeros(class_names)?;
        cm.counts = rows.concat();
        Ok(cm)
    }

    pub fn from_labels(truth: &[usize], predicted: &[usize], class_names: Vec<String>) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Param(format!(
                "{} true labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut cm = Self::zeros(class_names)?;
        let k = cm.num_classes();
        for (&t, &p) in truth.iter().zip(predicted) {
            for label in [t, p] {
                if label >= k {
                    return Err(Error::Label { label, classes: k });
                }
            }
            cm.counts[t * k + p] += 1;
        }
        Ok(cm)
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.num_classes() + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        let k = self.num_classes();
        &self.counts[truth * k..(truth + 1) * k]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.get(i, i)).sum()
    }

    pub fn true_positives(&self, class: usize) -> u64 {
        self.get(class, class)
    }

    /// Column sum minus the diagonal.
    pub fn false_positives(&self, class: usize) -> u64 {
        (0..self.num_classes()).map(|t| self.get(t, class)).sum::<u64>() - self.get(class, class)
    }

    /// Row sum minus the diagonal.
    pub fn false_negatives(&self, class: usize) -> u64 {
        self.row(class).iter().sum::<u64>() - self.get(class, class)
    }

    pub fn support(&self, class: usize) -> u64 {
        self.row(class).iter().sum()
    }
}

/// Tallies `(true, predicted)` pairs over classes named `"0"` to `"K-1"`.
pub fn confusion(truth: &[usize], predicted: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    ConfusionMatrix::from_labels(truth, predicted, (0..num_classes).map(|k| k.to_string()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_tally() {
        let cm = confusion(&[0, 0, 1], &[0, 1, 1], 2).unwrap();
        assert_eq!((cm.get(0, 0), cm.get(0, 1), cm.get(1, 0), cm.get(1, 1)), (1, 1, 0, 1));
        assert_eq!(cm.false_positives(1), 1);
        assert_eq!(cm.false_negatives(0), 1);
        assert_eq!(cm.total(), 3);
    }

    #[test]
    fn perfect_is_diagonal() {
        let labels = [2, 0, 1, 1, 2];
        let cm = confusion(&labels, &labels, 3).unwrap();
        for t in 0..3 {
            for p in 0..3 {
                assert_eq!(cm.get(t, p) > 0, t == p);
            }
        }
    }

    #[test]
    fn empty_is_zero() {
        let cm = confusion(&[], &[], 4).unwrap();
        assert_eq!(cm.total(), 0);
        assert_eq!(cm.num_classes(), 4);
    }

    #[test]
    fn bad_input() {
        assert!(matches!(confusion(&[0, 3], &[0, 1], 3), Err(Error::Label { label: 3, classes: 3 })));
        assert!(matches!(confusion(&[0], &[5], 3), Err(Error::Label { label: 5, .. })));
        assert!(confusion(&[0], &[], 3).is_err());
    }
}
