//! Multinomial logistic regression trained by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use super::{check_labels, early_stopping_split, multi_logloss, softmax_in_place, LearnError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoftmaxParams {
    pub learning_rate: f64,
    pub l2: f64,
    pub max_epochs: usize,
    pub validation_fraction: f64,
    pub early_stopping_rounds: usize,
}

impl Default for SoftmaxParams {
    fn default() -> Self {
        SoftmaxParams { learning_rate: 0.5, l2: 1e-3, max_epochs: 300, validation_fraction: 0.1, early_stopping_rounds: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxRegression {
    pub n_features: usize,
    pub n_classes: usize,
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// Row-major `n_classes x (n_features + 1)`; the last column is the bias.
    weights: Vec<f64>,
}

impl SoftmaxRegression {
    pub fn fit(
        x: &[Vec<f32>],
        y: &[usize],
        n_classes: usize,
        params: &SoftmaxParams,
        seed: u64,
    ) -> Result<Self, LearnError> {
        check_labels(y, n_classes)?;
        let d = x.first().map_or(0, Vec::len);
        if let Some(bad) = x.iter().find(|r| r.len() != d) {
            return Err(LearnError::Width { expected: d, got: bad.len() });
        }
        let early = params.early_stopping_rounds > 0;
        let (fit_rows, val_rows) = if early {
            early_stopping_split(x.len(), params.validation_fraction, seed)
        } else {
            ((0..x.len()).collect(), Vec::new())
        };
        let n = fit_rows.len() as f64;
        let mut mean = vec![0.0; d];
        for &r in &fit_rows {
            for (m, v) in mean.iter_mut().zip(&x[r]) {
                *m += *v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut scale = vec![0.0; d];
        for &r in &fit_rows {
            for j in 0..d {
                scale[j] += (x[r][j] as f64 - mean[j]).powi(2);
            }
        }
        scale.iter_mut().for_each(|s| *s = if *s > 0.0 { 1.0 / (*s / n).sqrt() } else { 0.0 });

        let stride = d + 1;
        let mut model = SoftmaxRegression { n_features: d, n_classes, mean, scale, weights: vec![0.0; n_classes * stride] };
        let fit_x: Vec<Vec<f64>> = fit_rows.iter().map(|&r| model.standardize(&x[r])).collect();
        let val_x: Vec<Vec<f64>> = val_rows.iter().map(|&r| model.standardize(&x[r])).collect();
        let vy: Vec<usize> = val_rows.iter().map(|&r| y[r]).collect();

        let mut best = (f64::INFINITY, model.weights.clone());
        let mut since_best = 0;
        let mut grad = vec![0.0; model.weights.len()];
        for _ in 0..params.max_epochs {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for (xi, &r) in fit_x.iter().zip(&fit_rows) {
                let p = model.proba_standardized(xi);
                for k in 0..n_classes {
                    let e = p[k] - if y[r] == k { 1.0 } else { 0.0 };
                    let row = &mut grad[k * stride..(k + 1) * stride];
                    for j in 0..d {
                        row[j] += e * xi[j];
                    }
                    row[d] += e;
                }
            }
            for (i, w) in model.weights.iter_mut().enumerate() {
                let reg = if i % stride == d { 0.0 } else { params.l2 * *w };
                *w -= params.learning_rate * (grad[i] / n + reg);
            }
            if early {
                let proba: Vec<Vec<f64>> = val_x.iter().map(|v| model.proba_standardized(v)).collect();
                let loss = multi_logloss(&proba, &vy);
                if loss < best.0 - 1e-12 {
                    best = (loss, model.weights.clone());
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= params.early_stopping_rounds {
                        break;
                    }
                }
            }
        }
        if early {
            model.weights = best.1;
        }
        Ok(model)
    }

    fn standardize(&self, x: &[f32]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (*v as f64 - m) * s).collect()
    }

    fn proba_standardized(&self, xs: &[f64]) -> Vec<f64> {
        let stride = self.n_features + 1;
        let mut z: Vec<f64> = (0..self.n_classes)
            .map(|k| {
                let w = &self.weights[k * stride..(k + 1) * stride];
                w[..self.n_features].iter().zip(xs).map(|(a, b)| a * b).sum::<f64>() + w[self.n_features]
            })
            .collect();
        softmax_in_place(&mut z);
        z
    }

    pub fn predict_proba(&self, x: &[f32]) -> Result<Vec<f64>, LearnError> {
        if x.len() != self.n_features {
            return Err(LearnError::Width { expected: self.n_features, got: x.len() });
        }
        Ok(self.proba_standardized(&self.standardize(x)))
    }

    pub fn predict(&self, x: &[f32]) -> Result<usize, LearnError> {
        Ok(super::argmax(&self.predict_proba(x)?))
    }
}
