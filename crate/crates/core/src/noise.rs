//! Synthetic class-dependent label noise.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, TransitionMatrix};
use crate::error::{Error, Result};

/// Half-width of the uniform jitter on each row's noise level.
pub const DEFAULT_JITTER: f64 = 0.05;

const MAX_ROW_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum NoiseKind {
    /// `[[1 − e1, e1], [e2, 1 − e2]]`.
    Binary { e1: f64, e2: f64 },
    /// Each row `i` draws a noise level `u = avg_rate + Unif(−jitter, jitter)`,
    /// sets `T_ii = 1 − u` and spreads `u` over the other cells with a
    /// `Dirichlet(1, …, 1)` draw.
    Dirichlet { avg_rate: f64, jitter: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseScheme {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseScheme {
    pub fn binary(e1: f64, e2: f64) -> Self {
        Self {
            kind: NoiseKind::Binary { e1, e2 },
            seed: 0,
        }
    }

    pub fn symmetric(e: f64) -> Self {
        Self::binary(e, e)
    }

    pub fn dirichlet(avg_rate: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Dirichlet {
                avg_rate,
                jitter: DEFAULT_JITTER,
            },
            seed,
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        match self.kind {
            NoiseKind::Binary { e1, e2 } => {
                if k != 2 {
                    return Err(Error::InvalidArgument(format!(
                        "binary noise needs K = 2, got {k}"
                    )));
                }
                if !(0.0..=1.0).contains(&e1) || !(0.0..=1.0).contains(&e2) || e1 + e2 >= 1.0 {
                    return Err(Error::InvalidNoiseRates {
                        e1,
                        e2,
                        reason: "need rates in [0, 1] with e1 + e2 < 1",
                    });
                }
            }
            NoiseKind::Dirichlet { avg_rate, jitter } => {
                let limit = (k as f64 - 1.0) / k as f64;
                if k < 2 || !(jitter >= 0.0) || !(avg_rate - jitter >= 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "Dirichlet noise needs K >= 2 and avg_rate >= jitter >= 0, got \
                         avg_rate={avg_rate}, jitter={jitter}"
                    )));
                }
                if !(avg_rate + jitter < limit) {
                    return Err(Error::InvalidArgument(format!(
                        "avg_rate + jitter = {} must be < (K-1)/K = {limit}",
                        avg_rate + jitter
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Average noise rate for the ratio parameter `r`: `1 / (1 + r / √(K − 1))`.
pub fn avg_noise_rate_from_r(r: f64, k: usize) -> Result<f64> {
    if !(r > 0.0) || k < 2 {
        return Err(Error::InvalidArgument(format!(
            "need r > 0 and K >= 2, got r={r}, K={k}"
        )));
    }
    Ok(1.0 / (1.0 + r / (k as f64 - 1.0).sqrt()))
}

/// Builds the transition matrix described by `scheme`.
pub fn build_transition(scheme: &NoiseScheme, k: usize) -> Result<TransitionMatrix> {
    scheme.validate(k)?;
    match scheme.kind {
        NoiseKind::Binary { e1, e2 } => {
            TransitionMatrix::from_rows(&[vec![1.0 - e1, e1], vec![e2, 1.0 - e2]])
        }
        NoiseKind::Dirichlet { avg_rate, jitter } => {
            let mut rng = ChaCha8Rng::seed_from_u64(scheme.seed);
            let mut t = Array2::zeros((k, k));
            for i in 0..k {
                let row = dominant_row(i, k, avg_rate, jitter, &mut rng)?;
                t.row_mut(i).assign(&ndarray::Array1::from(row));
            }
            crate::data::validate_transition(t)
        }
    }
}

fn dominant_row(
    i: usize,
    k: usize,
    avg_rate: f64,
    jitter: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    for _ in 0..MAX_ROW_ATTEMPTS {
        let level = if jitter > 0.0 {
            avg_rate + rng.random_range(-jitter..jitter)
        } else {
            avg_rate
        };
        let draws: Vec<f64> = (0..k - 1).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        let mut row = vec![0.0; k];
        let mut off = draws.iter().map(|d| level * d / total);
        for (j, cell) in row.iter_mut().enumerate() {
            if j != i {
                *cell = off.next().unwrap();
            }
        }
        // diagonal as the remainder so the row sums to 1
        let off_sum: f64 = row.iter().sum();
        row[i] = 1.0 - off_sum;
        let max_off = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &v)| v)
            .fold(0.0, f64::max);
        if row[i] > max_off {
            return Ok(row);
        }
    }
    Err(Error::NotDiagonallyDominant(MAX_ROW_ATTEMPTS))
}

/// Redraws every noisy label from row `T[clean]`; clean labels are kept.
pub fn inject_noise(data: &Dataset, t: &TransitionMatrix, seed: u64) -> Result<Dataset> {
    let clean = data.clean_labels().ok_or(Error::MissingCleanLabels)?;
    if t.k() != data.k() {
        return Err(Error::DimensionMismatch {
            expected: data.k(),
            got: t.k(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = t.k();
    let noisy = clean
        .iter()
        .map(|&y| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for j in 0..k {
                acc += t.get(y, j);
                if u < acc {
                    return j;
                }
            }
            // u landed in the rounding slack above the row sum
            (0..k).rev().find(|&j| t.get(y, j) > 0.0).unwrap_or(y)
        })
        .collect();
    data.with_noisy_labels(noisy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clean_dataset(n: usize, k: usize) -> Dataset {
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        let y: Vec<usize> = (0..n).map(|i| i % k).collect();
        Dataset::new(x, y.clone(), Some(y), Some(k)).unwrap()
    }

    #[test]
    fn binary_matrices() {
        let t = build_transition(&NoiseScheme::binary(0.4, 0.2), 2).unwrap();
        assert_eq!(t.to_rows(), vec![vec![0.6, 0.4], vec![0.2, 0.8]]);
        let t = build_transition(&NoiseScheme::binary(0.0, 0.0), 2).unwrap();
        assert_eq!(t, TransitionMatrix::identity(2));
        assert!(build_transition(&NoiseScheme::binary(0.6, 0.4), 2).is_err());
        assert!(build_transition(&NoiseScheme::binary(0.1, 0.1), 3).is_err());
    }

    #[test]
    fn avg_rate_values() {
        assert!((avg_noise_rate_from_r(8.0, 2).unwrap() - 1.0 / 9.0).abs() < 1e-15);
        assert!((avg_noise_rate_from_r(4.0, 2).unwrap() - 0.2).abs() < 1e-15);
        assert!((avg_noise_rate_from_r(1.5, 2).unwrap() - 0.4).abs() < 1e-15);
        let e = avg_noise_rate_from_r(8.0, 4).unwrap();
        assert!((e - 1.0 / (1.0 + 8.0 / 3f64.sqrt())).abs() < 1e-15);
        assert!((e - 0.178).abs() < 1e-3);
        assert!(avg_noise_rate_from_r(0.0, 2).is_err());
    }

    #[test]
    fn dirichlet_rows() {
        let e = avg_noise_rate_from_r(8.0, 4).unwrap();
        for seed in 0..50 {
            let t = build_transition(&NoiseScheme::dirichlet(e, seed), 4).unwrap();
            for i in 0..4 {
                let d = t.get(i, i);
                assert!(d >= 1.0 - e - 0.05 - 1e-12 && d <= 1.0 - e + 0.05 + 1e-12);
                let sum: f64 = (0..4).map(|j| t.get(i, j)).sum();
                assert!((sum - 1.0).abs() < 1e-12);
                assert!((0..4).filter(|&j| j != i).all(|j| t.get(i, j) < d));
            }
        }
        assert_eq!(
            build_transition(&NoiseScheme::dirichlet(0.3, 5), 3).unwrap(),
            build_transition(&NoiseScheme::dirichlet(0.3, 5), 3).unwrap()
        );
        // 0.5 + 0.05 >= 1/2
        assert!(build_transition(&NoiseScheme::dirichlet(0.5, 0), 2).is_err());
    }

    #[test]
    fn identity_noise_is_a_no_op() {
        let data = clean_dataset(100, 3);
        let noisy = inject_noise(&data, &TransitionMatrix::identity(3), 1).unwrap();
        assert_eq!(noisy.noisy_labels(), data.clean_labels().unwrap());
    }

    #[test]
    fn symmetric_flip_rate() {
        let n = 100_000;
        let data = clean_dataset(n, 2);
        let t = build_transition(&NoiseScheme::symmetric(0.3), 2).unwrap();
        let noisy = inject_noise(&data, &t, 42).unwrap();
        let flips = noisy
            .noisy_labels()
            .iter()
            .zip(noisy.clean_labels().unwrap())
            .filter(|(a, b)| a != b)
            .count() as f64
            / n as f64;
        assert!(
            (flips - 0.3).abs() <= 3.0 * (0.3f64 * 0.7 / n as f64).sqrt(),
            "{flips}"
        );
    }

    #[test]
    fn dirichlet_confusion_matches_t() {
        let n = 100_000;
        let k = 3;
        let data = clean_dataset(n, k);
        let t = build_transition(&NoiseScheme::dirichlet(0.25, 8), k).unwrap();
        let noisy = inject_noise(&data, &t, 9).unwrap();
        let mut counts = vec![vec![0.0; k]; k];
        for (&y, &z) in noisy
            .clean_labels()
            .unwrap()
            .iter()
            .zip(noisy.noisy_labels())
        {
            counts[y][z] += 1.0;
        }
        for (i, row) in counts.iter().enumerate() {
            let total: f64 = row.iter().sum();
            for (j, &c) in row.iter().enumerate() {
                let q = t.get(i, j);
                let sd = (q * (1.0 - q) / total).sqrt();
                assert!((c / total - q).abs() <= 3.0 * sd + 1e-12, "cell ({i},{j})");
            }
        }
    }

    #[test]
    fn seeds_reproduce() {
        let data = clean_dataset(1000, 2);
        let t = build_transition(&NoiseScheme::symmetric(0.2), 2).unwrap();
        let a = inject_noise(&data, &t, 3).unwrap();
        let b = inject_noise(&data, &t, 3).unwrap();
        let c = inject_noise(&data, &t, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.noisy_labels(), c.noisy_labels());
        let unlabeled = Dataset::new(Array2::zeros((3, 1)), vec![0, 1, 0], None, None).unwrap();
        assert!(matches!(
            inject_noise(&unlabeled, &t, 0),
            Err(Error::MissingCleanLabels)
        ));
    }
}
