//! Confusion-matrix classification metrics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    /// `None` when the class was never predicted.
    pub precision: Option<f64>,
    /// `None` when the class never occurs in the gold labels.
    pub recall: Option<f64>,
    /// `2TP / (2TP + FP + FN)`; `None` when the class is absent from both.
    pub f1: Option<f64>,
    pub support: usize,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub classes: Vec<ClassMetrics>,
    /// Unweighted mean F1 over the classes present in the gold labels.
    pub macro_f1: Option<f64>,
    pub accuracy: f64,
    pub n: usize,
}

impl ClassificationReport {
    pub fn class(&self, label: &str) -> Option<&ClassMetrics> {
        self.classes.iter().find(|c| c.label == label)
    }

    pub fn f1(&self, label: &str) -> Option<f64> {
        self.class(label).and_then(|c| c.f1)
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Metrics over the sorted union of labels seen in either sequence.
pub fn classification_metrics<L: Ord + Clone + ToString>(gold: &[L], predicted: &[L]) -> Result<ClassificationReport, EvalError> {
    let classes: Vec<L> = gold.iter().chain(predicted).cloned().collect::<BTreeSet<_>>().into_iter().collect();
    classification_metrics_with(gold, predicted, &classes)
}

/// Metrics with rows in the given class order. Labels outside `classes` count
/// only toward accuracy.
pub fn classification_metrics_with<L: PartialEq + ToString>(
    gold: &[L],
    predicted: &[L],
    classes: &[L],
) -> Result<ClassificationReport, EvalError> {
    if gold.len() != predicted.len() {
        return Err(EvalError::LengthMismatch { left: gold.len(), right: predicted.len() });
    }
    let correct = gold.iter().zip(predicted).filter(|(g, p)| g == p).count();
    let mut rows = Vec::with_capacity(classes.len());
    for c in classes {
        let mut tp = 0;
        let mut fp = 0;
        let mut fn_ = 0;
        for (g, p) in gold.iter().zip(predicted) {
            match (g == c, p == c) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        rows.push(ClassMetrics {
            label: c.to_string(),
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
            support: tp + fn_,
            predicted: tp + fp,
        });
    }
    let present: Vec<f64> = rows.iter().filter(|r| r.support > 0).filter_map(|r| r.f1).collect();
    let macro_f1 = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
    Ok(ClassificationReport {
        classes: rows,
        macro_f1,
        accuracy: ratio(correct, gold.len()).unwrap_or(0.0),
        n: gold.len(),
    })
}

/// Formats a metric to two decimals, or an em dash when undefined.
pub fn fmt_metric(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.2}"),
        None => "\u{2014}".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_correct() {
        let g = ["a", "b", "b", "c"];
        let r = classification_metrics(&g, &g).unwrap();
        assert!(r.classes.iter().all(|c| c.f1 == Some(1.0) && c.precision == Some(1.0)));
        assert_eq!(r.macro_f1, Some(1.0));
    }

    #[test]
    fn never_predicted_class() {
        let r = classification_metrics(&["a", "a", "b"], &["b", "b", "b"]).unwrap();
        let a = r.class("a").unwrap();
        assert_eq!(a.recall, Some(0.0));
        assert_eq!(a.precision, None);
        assert_eq!(a.f1, Some(0.0));
    }

    #[test]
    fn absent_class_is_undefined_and_excluded_from_macro() {
        let r = classification_metrics_with(&["a", "b"], &["a", "b"], &["a", "b", "c"]).unwrap();
        assert_eq!(r.class("c").unwrap().f1, None);
        assert_eq!(r.macro_f1, Some(1.0));
        assert_eq!(fmt_metric(None), "\u{2014}");
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(classification_metrics(&["a"], &["a", "b"]), Err(EvalError::LengthMismatch { .. })));
    }

    #[test]
    fn f1_from_precision_recall_table_values() {
        // 48 gold Past, all recalled, 2 false positives: P = 0.96, R = 1.00.
        let mut gold = vec!["Past"; 48];
        gold.extend(["Current"; 52]);
        let mut pred = vec!["Past"; 50];
        pred.extend(["Current"; 50]);
        let r = classification_metrics(&gold, &pred).unwrap();
        let past = r.class("Past").unwrap();
        assert_eq!(fmt_metric(past.precision), "0.96");
        assert_eq!(fmt_metric(past.recall), "1.00");
        assert_eq!(fmt_metric(past.f1), "0.98");
    }
}
