//! Confusion matrices and the derived classification report.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MetricsError {
    EmptyMatrix,
    NotSquare,
    ClassOutOfRange { class: usize, classes: usize },
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyMatrix => f.write_str("confusion matrix has no samples"),
            Self::NotSquare => f.write_str("confusion matrix must be square"),
            Self::ClassOutOfRange { class, classes } => {
                write!(f, "class {class} out of range for {classes} classes")
            }
        }
    }
}

impl core::error::Error for MetricsError {}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self { k: classes, counts: vec![0; classes * classes] }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self, MetricsError> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(MetricsError::NotSquare);
        }
        Ok(Self { k, counts: rows.iter().flatten().copied().collect() })
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<(), MetricsError> {
        for class in [truth, predicted] {
            if class >= self.k {
                return Err(MetricsError::ClassOutOfRange { class, classes: self.k });
            }
        }
        self.counts[truth * self.k + predicted] += 1;
        Ok(())
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.k + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.k.max(1)).map(|r| r.to_vec()).collect()
    }

    /// Row sum: number of samples whose true class is `class`.
    pub fn support(&self, class: usize) -> u64 {
        (0..self.k).map(|j| self.get(class, j)).sum()
    }

    /// Column sum: number of samples predicted as `class`.
    pub fn predicted(&self, class: usize) -> u64 {
        (0..self.k).map(|i| self.get(i, class)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub micro: ClassMetrics,
    pub macro_avg: ClassMetrics,
    pub weighted: ClassMetrics,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Precision/recall/F1 per class plus micro, macro and support-weighted
/// averages. Any ratio with a zero denominator is 0.
pub fn metrics_from_confusion(m: &ConfusionMatrix) -> Result<EvalReport, MetricsError> {
    let total = m.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let per_class: Vec<ClassMetrics> = (0..m.classes())
        .map(|c| {
            let tp = m.get(c, c);
            let precision = ratio(tp, m.predicted(c));
            let recall = ratio(tp, m.support(c));
            ClassMetrics { precision, recall, f1: f1(precision, recall), support: m.support(c) }
        })
        .collect();

    // Pooled counts: every off-diagonal entry is one FP and one FN.
    let tp = m.trace();
    let fp = total - tp;
    let fn_ = total - tp;
    let micro_p = ratio(tp, tp + fp);
    let micro_r = ratio(tp, tp + fn_);
    let micro = ClassMetrics { precision: micro_p, recall: micro_r, f1: f1(micro_p, micro_r), support: total };

    let k = per_class.len() as f64;
    let macro_avg = ClassMetrics {
        precision: per_class.iter().map(|c| c.precision).sum::<f64>() / k,
        recall: per_class.iter().map(|c| c.recall).sum::<f64>() / k,
        f1: per_class.iter().map(|c| c.f1).sum::<f64>() / k,
        support: total,
    };
    let weight = |f: fn(&ClassMetrics) -> f64| {
        per_class.iter().map(|c| f(c) * c.support as f64).sum::<f64>() / total as f64
    };
    let weighted = ClassMetrics {
        precision: weight(|c| c.precision),
        recall: weight(|c| c.recall),
        f1: weight(|c| c.f1),
        support: total,
    };
    Ok(EvalReport { per_class, accuracy: ratio(tp, total), micro, macro_avg, weighted })
}

/// Index of the largest value; ties go to the lower index.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(rows: &[Vec<u64>]) -> EvalReport {
        metrics_from_confusion(&ConfusionMatrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn perfect_two_class_matrix() {
        let r = report(&[vec![44, 0], vec![0, 12]]);
        for c in &r.per_class {
            assert_eq!((c.precision, c.recall, c.f1), (1.0, 1.0, 1.0));
        }
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.per_class[0].support, 44);
        assert_eq!(r.per_class[1].support, 12);
    }

    #[test]
    fn zero_support_class() {
        let r = report(&[vec![1, 0], vec![0, 0]]);
        assert_eq!(r.per_class[0].f1, 1.0);
        assert_eq!(r.per_class[1], ClassMetrics { precision: 0.0, recall: 0.0, f1: 0.0, support: 0 });
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn hand_computed_matrix() {
        let r = report(&[vec![8, 2], vec![1, 9]]);
        let c0 = r.per_class[0];
        assert!((c0.precision - 8.0 / 9.0).abs() < 1e-12);
        assert!((c0.recall - 0.8).abs() < 1e-12);
        let f = 2.0 * (8.0 / 9.0) * 0.8 / (8.0 / 9.0 + 0.8);
        assert!((c0.f1 - f).abs() < 1e-12);
        assert!((c0.f1 - 0.8421).abs() < 1e-4);
        assert!((r.accuracy - 0.85).abs() < 1e-12);
    }

    #[test]
    fn errors_and_recording() {
        assert_eq!(metrics_from_confusion(&ConfusionMatrix::new(2)), Err(MetricsError::EmptyMatrix));
        assert_eq!(ConfusionMatrix::from_rows(&[vec![1, 2], vec![3]]), Err(MetricsError::NotSquare));
        let mut m = ConfusionMatrix::new(2);
        m.record(1, 0).unwrap();
        assert_eq!(m.get(1, 0), 1);
        assert!(m.record(2, 0).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.2]), 1);
    }
}
