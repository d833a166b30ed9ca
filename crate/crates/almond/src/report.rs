use std::fmt::Write;

use almond_core::metrics::{ClassMetrics, ConfusionMatrix, EvalReport};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub seconds: f64,
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc,seconds";

pub fn history_csv(records: &[EpochRecord], diverged_at: Option<usize>) -> String {
    let mut out = format!("{HISTORY_HEADER}\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.3}",
            r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy, r.seconds
        );
    }
    if let Some(epoch) = diverged_at {
        let _ = writeln!(out, "# aborted: non-finite loss in epoch {epoch}");
    }
    out
}

/// Parses the history rows back (comment lines are skipped).
pub fn parse_history(text: &str) -> Option<Vec<EpochRecord>> {
    let mut lines = text.lines();
    if lines.next()? != HISTORY_HEADER {
        return None;
    }
    lines
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 6 {
                return None;
            }
            Some(EpochRecord {
                epoch: f[0].parse().ok()?,
                train_loss: f[1].parse().ok()?,
                train_accuracy: f[2].parse().ok()?,
                val_loss: f[3].parse().ok()?,
                val_accuracy: f[4].parse().ok()?,
                seconds: f[5].parse().ok()?,
            })
        })
        .collect()
}

fn metric_row(out: &mut String, name: &str, m: &ClassMetrics, width: usize) {
    let _ = writeln!(out, "{name:>width$} {:>9.2} {:>9.2} {:>9.2} {:>9}", m.precision, m.recall, m.f1, m.support);
}

/// Text layout of a scikit-learn style classification report, followed by
/// the confusion matrix (rows true, columns predicted).
pub fn classification_report(class_names: &[String], matrix: &ConfusionMatrix, report: &EvalReport) -> String {
    let width = class_names.iter().map(|n| n.len()).chain([12]).max().unwrap_or(12);
    let mut out = String::new();
    let _ = writeln!(out, "{:>width$} {:>9} {:>9} {:>9} {:>9}", "", "precision", "recall", "f1-score", "support");
    out.push('\n');
    for (name, m) in class_names.iter().zip(&report.per_class) {
        metric_row(&mut out, name, m, width);
    }
    out.push('\n');
    let _ = writeln!(out, "{:>width$} {:>9} {:>9} {:>9.2} {:>9}", "accuracy", "", "", report.accuracy, matrix.total());
    metric_row(&mut out, "micro avg", &report.micro, width);
    metric_row(&mut out, "macro avg", &report.macro_avg, width);
    metric_row(&mut out, "weighted avg", &report.weighted, width);
    out.push('\n');
    let _ = writeln!(out, "confusion matrix (rows: true, columns: predicted)");
    let _ = write!(out, "{:>width$}", "");
    for name in class_names {
        let _ = write!(out, " {name:>9}");
    }
    out.push('\n');
    for (name, row) in class_names.iter().zip(matrix.rows()) {
        let _ = write!(out, "{name:>width$}");
        for v in row {
            let _ = write!(out, " {v:>9}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use almond_core::metrics::metrics_from_confusion;

    #[test]
    fn report_layout() {
        let m = ConfusionMatrix::from_rows(&[vec![44, 0], vec![0, 12]]).unwrap();
        let r = metrics_from_confusion(&m).unwrap();
        let text = classification_report(&["shell".into(), "almond".into()], &m, &r);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].ends_with("precision    recall  f1-score   support"));
        assert_eq!(lines[2].split_whitespace().collect::<Vec<_>>(), ["shell", "1.00", "1.00", "1.00", "44"]);
        assert_eq!(lines[3].split_whitespace().collect::<Vec<_>>(), ["almond", "1.00", "1.00", "1.00", "12"]);
        assert!(text.contains("weighted avg"));
        assert_eq!(lines.last().unwrap().split_whitespace().collect::<Vec<_>>(), ["almond", "0", "12"]);
    }

    #[test]
    fn history_round_trip() {
        let rows = vec![EpochRecord { epoch: 1, train_loss: 0.5, train_accuracy: 0.75, val_loss: 0.25, val_accuracy: 1.0, seconds: 0.0 }];
        let text = history_csv(&rows, Some(2));
        assert_eq!(text.lines().count(), 3);
        assert_eq!(parse_history(&text).unwrap(), rows);
    }
}
