//! Estimation error and a downstream check: a linear softmax classifier
//! trained on noisy labels, with or without forward loss correction.

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, TransitionMatrix};
use crate::error::{Error, Result};

/// Average total variation between rows: `Σ_ij |T_ij − T̂_ij| / (2K)`.
pub fn estimation_error(t_true: &TransitionMatrix, t_hat: &TransitionMatrix) -> Result<f64> {
    if t_true.k() != t_hat.k() {
        return Err(Error::DimensionMismatch {
            expected: t_true.k(),
            got: t_hat.k(),
        });
    }
    let total: f64 = t_true
        .matrix()
        .iter()
        .zip(t_hat.matrix().iter())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(total / (2.0 * t_true.k() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "t")]
pub enum LossMode {
    Plain,
    /// Minimise `−log((Tᵀ softmax(Wx + b))_ỹ)`.
    Forward(TransitionMatrix),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownstreamResult {
    pub last_epoch_accuracy: f64,
    /// Maximum over epochs; ties resolve to the earliest epoch.
    pub best_epoch_accuracy: f64,
    pub best_epoch: usize,
    pub epochs: usize,
    pub loss_mode: LossMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub step_size: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            step_size: 0.1,
            seed: 0,
        }
    }
}

/// Linear softmax model `softmax(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LinearModel {
    fn init(k: usize, d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.01).expect("valid sd");
        Self {
            weights: Array2::from_shape_fn((k, d), |_| normal.sample(&mut rng)),
            bias: Array1::zeros(k),
        }
    }

    pub fn probabilities(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut logits = x.dot(&self.weights.t()) + &self.bias;
        for mut row in logits.rows_mut() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row /= sum;
        }
        logits
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<usize> {
        self.probabilities(x)
            .rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (j, &v)| {
                        if v > best.1 {
                            (j, v)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect()
    }

    pub fn accuracy(&self, x: &Array2<f64>, labels: &[usize]) -> f64 {
        let hits = self
            .predict(x)
            .iter()
            .zip(labels)
            .filter(|(a, b)| a == b)
            .count();
        hits as f64 / labels.len() as f64
    }
}

/// Gradient of the mean loss with respect to the logits.
fn logit_gradient(
    probs: &Array2<f64>,
    labels: &[usize],
    t: Option<&TransitionMatrix>,
) -> Array2<f64> {
    let mut g = probs.clone();
    let k = probs.ncols();
    for (mut row, &y) in g.rows_mut().into_iter().zip(labels) {
        match t {
            None => row[y] -= 1.0,
            Some(t) => {
                // q_y = Σ_i T_iy s_i; d(−log q_y)/dz_k = s_k − T_ky s_k / q_y
                let q: f64 = (0..k).map(|i| t.get(i, y) * row[i]).sum();
                for j in 0..k {
                    row[j] -= t.get(j, y) * row[j] / q;
                }
            }
        }
    }
    g
}

/// Full-batch gradient descent on the noisy training labels; reports clean
/// test accuracy after each epoch.
pub fn train_linear(
    train: &Dataset,
    test: &Dataset,
    t: Option<&TransitionMatrix>,
    config: &TrainConfig,
) -> Result<(DownstreamResult, LinearModel)> {
    if train.dim() != test.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            got: test.dim(),
        });
    }
    if train.k() != test.k() {
        return Err(Error::DimensionMismatch {
            expected: train.k(),
            got: test.k(),
        });
    }
    let k = train.k();
    if let Some(t) = t {
        if t.k() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: t.k(),
            });
        }
    }
    let y = train.noisy_labels();
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::SingleClass);
    }
    let test_labels = test.clean_labels().ok_or(Error::MissingCleanLabels)?;
    if config.epochs == 0 || !(config.step_size > 0.0) {
        return Err(Error::InvalidArgument(
            "need epochs >= 1 and step_size > 0".into(),
        ));
    }

    let x = train.features();
    let n = x.nrows() as f64;
    let mut model = LinearModel::init(k, train.dim(), config.seed);
    let mut best = (f64::NEG_INFINITY, 0);
    let mut last = 0.0;
    for epoch in 1..=config.epochs {
        let probs = model.probabilities(x);
        let g = logit_gradient(&probs, y, t);
        let grad_w = g.t().dot(x) / n;
        let grad_b = g.sum_axis(Axis(0)) / n;
        model.weights.scaled_add(-config.step_size, &grad_w);
        model.bias.scaled_add(-config.step_size, &grad_b);

        last = model.accuracy(test.features(), test_labels);
        if last > best.0 {
            best = (last, epoch);
        }
    }

    let result = DownstreamResult {
        last_epoch_accuracy: last,
        best_epoch_accuracy: best.0,
        best_epoch: best.1,
        epochs: config.epochs,
        loss_mode: match t {
            Some(t) => LossMode::Forward(t.clone()),
            None => LossMode::Plain,
        },
    };
    Ok((result, model))
}
