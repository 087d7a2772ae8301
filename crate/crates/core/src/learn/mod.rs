//! Shallow learners over dense real feature vectors: histogram gradient
//! boosted trees and softmax regression, plus seeded train/test splitting.

mod gbdt;
mod linear;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use gbdt::{Gbdt, GbdtParams};
pub use linear::{SoftmaxParams, SoftmaxRegression};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LearnError {
    #[error("degenerate training data: {0}")]
    Degenerate(String),
    #[error("feature vector has {got} values, model expects {expected}")]
    Width { expected: usize, got: usize },
}

/// Index partition of a dataset into disjoint train and test sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub seed: u64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl DataSplit {
    /// Shuffles `0..n` with `seed` and holds out `round(n * test_fraction)`
    /// indices. Both halves are returned in ascending order.
    pub fn new(n: usize, test_fraction: f64, seed: u64) -> Self {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test = ((n as f64) * test_fraction.clamp(0.0, 1.0)).round() as usize;
        let mut test = idx[..n_test].to_vec();
        let mut train = idx[n_test..].to_vec();
        test.sort_unstable();
        train.sort_unstable();
        DataSplit { seed, train, test }
    }
}

/// Which learner backs a classification head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKind {
    #[default]
    Tree,
    Linear,
}

/// A trained multiclass head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Classifier {
    Tree(Gbdt),
    Linear(SoftmaxRegression),
}

impl Classifier {
    pub fn fit(
        kind: HeadKind,
        x: &[Vec<f32>],
        y: &[usize],
        n_classes: usize,
        gbdt: &GbdtParams,
        softmax: &SoftmaxParams,
        seed: u64,
    ) -> Result<Self, LearnError> {
        Ok(match kind {
            HeadKind::Tree => Classifier::Tree(Gbdt::fit(x, y, n_classes, gbdt, seed)?),
            HeadKind::Linear => Classifier::Linear(SoftmaxRegression::fit(x, y, n_classes, softmax, seed)?),
        })
    }

    pub fn n_features(&self) -> usize {
        match self {
            Classifier::Tree(m) => m.n_features,
            Classifier::Linear(m) => m.n_features,
        }
    }

    pub fn predict_proba(&self, x: &[f32]) -> Result<Vec<f64>, LearnError> {
        match self {
            Classifier::Tree(m) => m.predict_proba(x),
            Classifier::Linear(m) => m.predict_proba(x),
        }
    }

    /// Most probable class; the lowest class index wins ties.
    pub fn predict(&self, x: &[f32]) -> Result<usize, LearnError> {
        Ok(argmax(&self.predict_proba(x)?))
    }
}

/// Index of the largest value; the earliest one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in z.iter_mut() {
        *v /= s;
    }
}

fn check_labels(y: &[usize], n_classes: usize) -> Result<(), LearnError> {
    if y.is_empty() {
        return Err(LearnError::Degenerate("no training rows".into()));
    }
    if let Some(bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(LearnError::Degenerate(format!("label {bad} outside 0..{n_classes}")));
    }
    let first = y[0];
    if y.iter().all(|&c| c == first) {
        return Err(LearnError::Degenerate(format!("only class {first} present")));
    }
    Ok(())
}

/// Holds out a seeded fraction of the rows for early stopping. Falls back to
/// using the training rows themselves when there are too few rows.
fn early_stopping_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    if n < 20 || fraction <= 0.0 {
        let all: Vec<usize> = (0..n).collect();
        return (all.clone(), all);
    }
    let s = DataSplit::new(n, fraction, seed ^ 0x5eed_ea51);
    (s.train, s.test)
}

fn multi_logloss(proba: &[Vec<f64>], y: &[usize]) -> f64 {
    let total: f64 = proba.iter().zip(y).map(|(p, &c)| -(p[c].max(1e-15)).ln()).sum();
    total / y.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_disjoint_cover() {
        let s = DataSplit::new(1000, 0.2, 7);
        assert_eq!(s.test.len(), 200);
        assert_eq!(s.train.len(), 800);
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).cloned().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
        assert_eq!(s, DataSplit::new(1000, 0.2, 7));
        assert_ne!(s.test, DataSplit::new(1000, 0.2, 8).test);
    }

    #[test]
    fn argmax_prefers_first_on_tie() {
        assert_eq!(argmax(&[0.25, 0.25, 0.25, 0.25]), 0);
        assert_eq!(argmax(&[0.1, 0.4, 0.4, 0.1]), 1);
    }

    #[test]
    fn single_class_is_degenerate() {
        assert!(matches!(check_labels(&[1, 1, 1], 3), Err(LearnError::Degenerate(_))));
        assert!(check_labels(&[0, 1], 2).is_ok());
    }
}
