//! Binary logistic regression trained by full-batch gradient descent.
//!
//! This is the "fast classifier" whose test-set score defines the utility of
//! a coalition. Degenerate training sets (empty or single-class) yield a
//! constant predictor instead of a fitted model.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label};
use crate::error::{Error, Result};

/// Multiplier applied to the loss terms of positive examples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeight {
    /// `max(1, #negative / #positive)` of the coalition being fitted.
    Balanced,
    Fixed(f64),
}

impl ClassWeight {
    pub fn resolve(self, positives: usize, negatives: usize) -> f64 {
        match self {
            ClassWeight::Fixed(w) => w,
            ClassWeight::Balanced if positives == 0 => 1.0,
            ClassWeight::Balanced => (negatives as f64 / positives as f64).max(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub l2_penalty: f64,
    pub class_weight_positive: ClassWeight,
    /// Training stops once the loss changes by less than this between epochs.
    pub convergence_tol: f64,
    /// Unused by the deterministic zero-initialized trainer; recorded so that
    /// manifests stay complete.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            max_epochs: 200,
            l2_penalty: 1e-4,
            class_weight_positive: ClassWeight::Balanced,
            convergence_tol: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidTrainConfig(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive");
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return bad("l2_penalty must be non-negative");
        }
        if let ClassWeight::Fixed(w) = self.class_weight_positive {
            if !(w > 0.0 && w.is_finite()) {
                return bad("class_weight_positive must be positive");
            }
        }
        if self.convergence_tol.is_nan() || self.convergence_tol <= 0.0 {
            return bad("convergence_tol must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Trained {
        weights: Vec<f64>,
        bias: f64,
    },
    /// Ignores its input and always emits `label`.
    Constant {
        label: Label,
        dim: usize,
    },
}

impl Model {
    pub fn dim(&self) -> usize {
        match self {
            Model::Trained { weights, .. } => weights.len(),
            Model::Constant { dim, .. } => *dim,
        }
    }

    /// Positive iff `sigmoid(w·x + b) >= 0.5`, i.e. iff `w·x + b >= 0`.
    pub fn predict(&self, features: &[f64]) -> Result<Label> {
        if features.len() != self.dim() {
            return Err(Error::FeatureDimension {
                expected: self.dim(),
                found: features.len(),
            });
        }
        Ok(self.predict_unchecked(features))
    }

    pub(crate) fn predict_unchecked(&self, features: &[f64]) -> Label {
        match self {
            Model::Constant { label, .. } => *label,
            Model::Trained { weights, bias } => {
                if sigmoid(dot(weights, features) + bias) >= 0.5 {
                    Label::Positive
                } else {
                    Label::Negative
                }
            }
        }
    }

    pub fn probability(&self, features: &[f64]) -> Result<f64> {
        match self {
            Model::Constant { label, .. } => {
                self.predict(features)?;
                Ok(if label.is_positive() { 1.0 } else { 0.0 })
            }
            Model::Trained { weights, bias } => {
                self.predict(features)?;
                Ok(sigmoid(dot(weights, features) + bias))
            }
        }
    }
}

pub fn predict(model: &Model, features: &[f64]) -> Result<Label> {
    model.predict(features)
}

/// Fits on every point of `train`.
pub fn fit(train: &Dataset, config: &TrainConfig) -> Result<Model> {
    let rows: Vec<usize> = (0..train.len()).collect();
    fit_rows(train, &rows, config)
}

/// Fits on the points of `data` at positions `rows`, in the given order.
///
/// Hot path of every Shapley engine: coalitions are passed as row indices
/// into the parent training set rather than materialized.
pub fn fit_rows(data: &Dataset, rows: &[usize], config: &TrainConfig) -> Result<Model> {
    config.validate()?;
    let dim = data.dim();
    let positives = rows
        .iter()
        .filter(|&&r| data.label(r).is_positive())
        .count();
    let negatives = rows.len() - positives;
    if positives == 0 {
        return Ok(Model::Constant {
            label: Label::Negative,
            dim,
        });
    }
    if negatives == 0 {
        return Ok(Model::Constant {
            label: Label::Positive,
            dim,
        });
    }

    let class_weight = config.class_weight_positive.resolve(positives, negatives);
    let objective = Objective {
        data,
        rows,
        class_weight,
        l2: config.l2_penalty,
    };
    let mut weights = vec![0.0; dim];
    let mut bias = 0.0;
    let mut grad = vec![0.0; dim];
    let mut prev_loss = f64::INFINITY;
    for epoch in 0..config.max_epochs {
        let (loss, grad_bias) = objective.eval(&weights, bias, &mut grad);
        if !loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                config: config.clone(),
            });
        }
        if (prev_loss - loss).abs() < config.convergence_tol {
            break;
        }
        prev_loss = loss;
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w -= config.learning_rate * g;
        }
        bias -= config.learning_rate * grad_bias;
    }
    if weights.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
        return Err(Error::Divergence {
            epoch: config.max_epochs,
            config: config.clone(),
        });
    }
    Ok(Model::Trained { weights, bias })
}

/// Weighted cross-entropy with L2 penalty and its gradient.
///
/// `L(w, b) = (1/n) Σ c_i [softplus(z_i) - y_i z_i] + (λ/2) ||w||²` with
/// `z_i = w·x_i + b`, `c_i` the class weight for positives and 1 otherwise.
/// Returns `(loss, weight_gradient, bias_gradient)`.
pub fn loss_and_gradient(
    train: &Dataset,
    weights: &[f64],
    bias: f64,
    class_weight_positive: f64,
    l2_penalty: f64,
) -> (f64, Vec<f64>, f64) {
    let rows: Vec<usize> = (0..train.len()).collect();
    let objective = Objective {
        data: train,
        rows: &rows,
        class_weight: class_weight_positive,
        l2: l2_penalty,
    };
    let mut grad = vec![0.0; train.dim()];
    let (loss, gb) = objective.eval(weights, bias, &mut grad);
    (loss, grad, gb)
}

struct Objective<'a> {
    data: &'a Dataset,
    rows: &'a [usize],
    class_weight: f64,
    l2: f64,
}

impl Objective<'_> {
    fn eval(&self, weights: &[f64], bias: f64, grad: &mut [f64]) -> (f64, f64) {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        let mut grad_bias = 0.0;
        for &r in self.rows {
            let x = self.data.features(r);
            let (y, c) = if self.data.label(r).is_positive() {
                (1.0, self.class_weight)
            } else {
                (0.0, 1.0)
            };
            let z = dot(weights, x) + bias;
            // shared exp for the stable softplus and sigmoid
            let e = (-z.abs()).exp();
            let softplus = z.max(0.0) + e.ln_1p();
            let p = if z >= 0.0 {
                1.0 / (1.0 + e)
            } else {
                e / (1.0 + e)
            };
            loss += c * (softplus - y * z);
            let residual = c * (p - y);
            grad_bias += residual;
            for (g, xi) in grad.iter_mut().zip(x) {
                *g += residual * xi;
            }
        }
        let n = self.rows.len() as f64;
        let mut penalty = 0.0;
        for (g, w) in grad.iter_mut().zip(weights) {
            *g = *g / n + self.l2 * w;
            penalty += w * w;
        }
        (loss / n + 0.5 * self.l2 * penalty, grad_bias / n)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
