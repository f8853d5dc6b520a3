//! Multinomial logistic regression, the differentiable classifier behind the
//! CFI baseline. Trained with plain mini-batch SGD on standardized inputs.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::projection::{Scaling, Standardizer};
use crate::stats::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 0.01,
            batch_size: 128,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticClassifier {
    /// C × d
    weights: DMatrix<f64>,
    bias: DVector<f64>,
}

impl LogisticClassifier {
    /// Minimizes mean cross-entropy with SGD; rows are reshuffled each epoch
    /// from a generator seeded by `cfg.seed`.
    pub fn train(x: &DMatrix<f64>, labels: &[usize], cfg: TrainConfig) -> Result<Self> {
        check_dim(x.nrows(), labels.len())?;
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        if n_classes < 2 {
            return Err(Error::TooFewClasses(n_classes));
        }
        if cfg.batch_size == 0 || cfg.learning_rate.is_nan() || cfg.learning_rate <= 0.0 {
            return Err(Error::InvalidArgument(
                "batch size and learning rate must be positive".into(),
            ));
        }
        let d = x.ncols();
        let mut model = Self {
            weights: DMatrix::zeros(n_classes, d),
            bias: DVector::zeros(n_classes),
        };
        let mut rng = seeded_rng(cfg.seed);
        let mut order: Vec<usize> = (0..x.nrows()).collect();
        let mut grad_w = DMatrix::zeros(n_classes, d);
        let mut grad_b = DVector::zeros(n_classes);
        let mut row = vec![0.0; d];
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch_size) {
                grad_w.fill(0.0);
                grad_b.fill(0.0);
                for &i in batch {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = x[(i, j)];
                    }
                    let probs = model.predict_proba_unchecked(&row);
                    for c in 0..n_classes {
                        let err = probs[c] - if labels[i] == c { 1.0 } else { 0.0 };
                        grad_b[c] += err;
                        for j in 0..d {
                            grad_w[(c, j)] += err * row[j];
                        }
                    }
                }
                let step = cfg.learning_rate / batch.len() as f64;
                model.weights -= &grad_w * step;
                model.bias -= &grad_b * step;
            }
        }
        Ok(model)
    }

    pub fn from_parameters(weights: DMatrix<f64>, bias: DVector<f64>) -> Result<Self> {
        check_dim(weights.nrows(), bias.len())?;
        Ok(Self { weights, bias })
    }

    pub fn n_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    fn predict_proba_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = (0..self.n_classes())
            .map(|c| {
                self.bias[c]
                    + self
                        .weights
                        .row(c)
                        .iter()
                        .zip(x)
                        .map(|(w, v)| w * v)
                        .sum::<f64>()
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exp.iter().sum();
        exp.into_iter().map(|e| e / total).collect()
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x.len())?;
        Ok(self.predict_proba_unchecked(x))
    }

    /// q_t(x) and its gradient ∂q_t/∂x = q_t · Σ_c (δ_tc − q_c) w_c.
    pub fn class_probability_gradient(&self, x: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
        if target >= self.n_classes() {
            return Err(Error::UnknownClass {
                class: target,
                n_classes: self.n_classes(),
            });
        }
        let probs = self.predict_proba(x)?;
        let q_t = probs[target];
        let mut grad = vec![0.0; self.input_dim()];
        for (c, &q_c) in probs.iter().enumerate() {
            let coef = q_t * (if c == target { 1.0 } else { 0.0 } - q_c);
            for (g, w) in grad.iter_mut().zip(self.weights.row(c).iter()) {
                *g += coef * w;
            }
        }
        Ok((q_t, grad))
    }
}

/// A logistic classifier together with the unit-variance standardizer its
/// inputs go through.
#[derive(Debug, Clone, PartialEq)]
pub struct CfiClassifier {
    pub standardizer: Standardizer,
    pub model: LogisticClassifier,
}

impl CfiClassifier {
    /// Standardizes `x_raw` column-wise, then trains on it.
    pub fn train(x_raw: &DMatrix<f64>, labels: &[usize], cfg: TrainConfig) -> Result<Self> {
        let standardizer = Standardizer::fit(x_raw, Scaling::UnitVariance)?;
        let x_std = standardizer.transform_matrix(x_raw)?;
        let model = LogisticClassifier::train(&x_std, labels, cfg)?;
        Ok(Self {
            standardizer,
            model,
        })
    }

    pub fn predict_proba(&self, x_raw: &[f64]) -> Result<Vec<f64>> {
        self.model
            .predict_proba(&self.standardizer.transform(x_raw)?)
    }
}
