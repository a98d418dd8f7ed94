//! Multinomial softmax regression on the fused representation.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxModel {
    /// `k x K`.
    #[serde(with = "crate::serde_matrix")]
    pub weights: DMatrix<f64>,
    pub bias: Vec<f64>,
    pub class_names: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2_penalty: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            l2_penalty: 1e-4,
            epochs: 200,
            batch_size: 32,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "l2 penalty must be >= 0, got {}",
                self.l2_penalty
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

/// Lowest index among the maxima.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Mean cross-entropy plus `l2/2 ||W||_F^2`, with analytic gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad_weights: DMatrix<f64>,
    pub grad_bias: DVector<f64>,
}

impl SoftmaxModel {
    pub fn zeros(latent_dim: usize, class_names: Vec<String>) -> Self {
        let k = class_names.len();
        SoftmaxModel {
            weights: DMatrix::zeros(latent_dim, k),
            bias: vec![0.0; k],
            class_names,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn logits(&self, g: &[f64]) -> Result<Vec<f64>> {
        if g.len() != self.latent_dim() {
            return Err(Error::Shape(format!(
                "classifier expects {} features, got {}",
                self.latent_dim(),
                g.len()
            )));
        }
        Ok((0..self.num_classes())
            .map(|c| {
                self.bias[c]
                    + self
                        .weights
                        .column(c)
                        .iter()
                        .zip(g)
                        .map(|(w, x)| w * x)
                        .sum::<f64>()
            })
            .collect())
    }

    pub fn predict_proba(&self, g: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(g)?))
    }

    /// Class index with the highest probability; ties go to the lowest index.
    pub fn predict(&self, g: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(g)?))
    }

    pub fn loss_and_grad(&self, x: &DMatrix<f64>, labels: &[usize], l2: f64) -> Result<LossGrad> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if labels.len() != n {
            return Err(Error::Shape(format!("{n} rows, {} labels", labels.len())));
        }
        if x.ncols() != self.latent_dim() {
            return Err(Error::Shape(format!(
                "classifier expects {} features, got {}",
                self.latent_dim(),
                x.ncols()
            )));
        }
        let classes = self.num_classes();
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::InvalidArgument(format!(
                "label index {bad} outside {classes} classes"
            )));
        }

        let bias = DVector::from_column_slice(&self.bias);
        let mut z = x * &self.weights;
        for mut row in z.row_iter_mut() {
            row += bias.transpose();
        }
        let mut loss = 0.0;
        // residual = softmax - onehot, row by row
        let mut residual = DMatrix::zeros(n, classes);
        for i in 0..n {
            let row: Vec<f64> = z.row(i).iter().copied().collect();
            loss += log_sum_exp(&row) - row[labels[i]];
            let p = softmax(&row);
            for c in 0..classes {
                residual[(i, c)] = p[c];
            }
            residual[(i, labels[i])] -= 1.0;
        }
        let nf = n as f64;
        loss = loss / nf + 0.5 * l2 * self.weights.norm_squared();
        let grad_weights = x.tr_mul(&residual) / nf + &self.weights * l2;
        let grad_bias = residual.row_sum().transpose() / nf;
        Ok(LossGrad {
            loss,
            grad_weights,
            grad_bias,
        })
    }
}

/// Mini-batch gradient descent from zero initialization. Batches follow a
/// per-epoch shuffle drawn from a generator seeded with `config.seed`.
pub fn train_softmax(
    x: &DMatrix<f64>,
    labels: &[usize],
    class_names: Vec<String>,
    config: &TrainConfig,
) -> Result<SoftmaxModel> {
    config.validate()?;
    if labels.len() != x.nrows() {
        return Err(Error::Shape(format!("{} rows, {} labels", x.nrows(), labels.len())));
    }
    for (c, name) in class_names.iter().enumerate() {
        if !labels.contains(&c) {
            return Err(Error::EmptyClass(name.clone()));
        }
    }
    let mut model = SoftmaxModel::zeros(x.ncols(), class_names);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let xb = x.select_rows(batch.iter());
            let yb: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let step = model.loss_and_grad(&xb, &yb, config.l2_penalty)?;
            model.weights -= step.grad_weights * config.learning_rate;
            for (b, g) in model.bias.iter_mut().zip(step.grad_bias.iter()) {
                *b -= config.learning_rate * g;
            }
        }
    }
    Ok(model)
}
