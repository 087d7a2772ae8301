//! Annotation aggregation and inter-annotator agreement.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeResult<L> {
    pub label: L,
    pub count: usize,
    /// More than one label reached the top count.
    pub tie: bool,
}

/// Most frequent label. Ties go to the smallest label in `Ord` order.
pub fn aggregate_mode<L: Ord + Clone>(labels: &[L]) -> Result<ModeResult<L>, EvalError> {
    if labels.is_empty() {
        return Err(EvalError::Empty("aggregate_mode needs at least one annotation".into()));
    }
    let mut counts: BTreeMap<&L, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let top = *counts.values().max().expect("nonempty");
    let mut winners = counts.iter().filter(|(_, &c)| c == top).map(|(l, _)| *l);
    let label = winners.next().expect("at least one winner").clone();
    Ok(ModeResult { label, count: top, tie: winners.next().is_some() })
}

/// Cohen's kappa between two label sequences over the same items.
pub fn cohens_kappa<L: Eq + std::hash::Hash>(a: &[L], b: &[L]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Err(EvalError::Empty("cohens_kappa needs at least one item".into()));
    }
    let n = a.len() as f64;
    let mut ma: HashMap<&L, usize> = HashMap::new();
    let mut mb: HashMap<&L, usize> = HashMap::new();
    let mut agree = 0usize;
    for (x, y) in a.iter().zip(b) {
        *ma.entry(x).or_default() += 1;
        *mb.entry(y).or_default() += 1;
        if x == y {
            agree += 1;
        }
    }
    let po = agree as f64 / n;
    let pe: f64 = ma.iter().map(|(l, &c)| c as f64 * *mb.get(l).unwrap_or(&0) as f64).sum::<f64>() / (n * n);
    if (1.0 - pe).abs() < 1e-15 {
        return Err(EvalError::DegenerateAgreement);
    }
    Ok((po - pe) / (1.0 - pe))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Annotation {
    pub item_id: String,
    pub annotator_id: String,
    pub label: String,
}

/// Annotations with unique `(item_id, annotator_id)` pairs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AnnotationSet {
    rows: Vec<Annotation>,
}

impl AnnotationSet {
    pub fn new(rows: Vec<Annotation>) -> Result<Self, EvalError> {
        let mut seen = BTreeSet::new();
        for r in &rows {
            if !seen.insert((r.item_id.as_str(), r.annotator_id.as_str())) {
                return Err(EvalError::Input(format!(
                    "annotator {} labeled item {} more than once",
                    r.annotator_id, r.item_id
                )));
            }
        }
        Ok(AnnotationSet { rows })
    }

    /// Reads a CSV with header `item_id,annotator_id,label`.
    pub fn from_csv(path: &Path) -> Result<Self, EvalError> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| EvalError::Input(format!("{}: {e}", path.display())))?;
        let mut rows = Vec::new();
        for rec in rdr.deserialize() {
            let rec: Annotation = rec.map_err(|e| EvalError::Input(format!("{}: {e}", path.display())))?;
            rows.push(rec);
        }
        Self::new(rows)
    }

    pub fn rows(&self) -> &[Annotation] {
        &self.rows
    }

    pub fn annotators(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|r| r.annotator_id.as_str()).collect()
    }

    /// Mode label per item.
    pub fn aggregate(&self) -> BTreeMap<String, ModeResult<String>> {
        let mut by_item: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for r in &self.rows {
            by_item.entry(&r.item_id).or_default().push(r.label.clone());
        }
        by_item
            .into_iter()
            .map(|(item, labels)| (item.to_string(), aggregate_mode(&labels).expect("nonempty group")))
            .collect()
    }

    /// Kappa between two annotators over the items both labeled.
    pub fn pairwise_kappa(&self, a: &str, b: &str) -> Result<(f64, usize), EvalError> {
        let la: BTreeMap<&str, &str> =
            self.rows.iter().filter(|r| r.annotator_id == a).map(|r| (r.item_id.as_str(), r.label.as_str())).collect();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for r in self.rows.iter().filter(|r| r.annotator_id == b) {
            if let Some(l) = la.get(r.item_id.as_str()) {
                xs.push(*l);
                ys.push(r.label.as_str());
            }
        }
        Ok((cohens_kappa(&xs, &ys)?, xs.len()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_examples() {
        assert_eq!(aggregate_mode(&["A", "A", "B"]).unwrap(), ModeResult { label: "A", count: 2, tie: false });
        assert_eq!(aggregate_mode(&["B", "A"]).unwrap(), ModeResult { label: "A", count: 1, tie: true });
        assert_eq!(aggregate_mode(&["X"; 10]).unwrap().label, "X");
        assert!(aggregate_mode::<&str>(&[]).is_err());
    }

    #[test]
    fn kappa_hand_matrix() {
        // [[20,5],[10,15]]: rows annotator a, columns annotator b.
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (x, y, n) in [(0, 0, 20), (0, 1, 5), (1, 0, 10), (1, 1, 15)] {
            for _ in 0..n {
                a.push(x);
                b.push(y);
            }
        }
        let po = 35.0 / 50.0;
        let pe = (25.0 * 30.0 + 25.0 * 20.0) / 2500.0;
        let k = cohens_kappa(&a, &b).unwrap();
        assert!((k - (po - pe) / (1.0 - pe)).abs() < 1e-12);
        assert!((k - 0.4).abs() < 1e-12);
    }

    #[test]
    fn kappa_errors() {
        assert!(matches!(cohens_kappa(&[1, 2], &[1]), Err(EvalError::LengthMismatch { .. })));
        assert!(matches!(cohens_kappa(&[1, 1], &[1, 1]), Err(EvalError::DegenerateAgreement)));
        assert_eq!(cohens_kappa(&[1, 2, 1], &[1, 2, 1]).unwrap(), 1.0);
    }

    #[test]
    fn annotation_set_rules() {
        let row = |i: &str, a: &str, l: &str| Annotation { item_id: i.into(), annotator_id: a.into(), label: l.into() };
        assert!(AnnotationSet::new(vec![row("1", "x", "A"), row("1", "x", "B")]).is_err());
        let set = AnnotationSet::new(vec![
            row("1", "x", "A"),
            row("1", "y", "A"),
            row("2", "x", "B"),
            row("2", "y", "A"),
            row("3", "x", "B"),
            row("3", "y", "B"),
        ])
        .unwrap();
        let agg = set.aggregate();
        assert_eq!(agg["2"].label, "A");
        assert!(agg["2"].tie);
        let (k, n) = set.pairwise_kappa("x", "y").unwrap();
        assert_eq!(n, 3);
        assert!(k > 0.0 && k < 1.0);
    }
}
