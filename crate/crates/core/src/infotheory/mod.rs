//! f-mutual information between a scalar feature and a discrete label, the
//! weight vector built from it, and the order-preservation bounds for
//! noisy-label mutual information.
//!
//! The estimator is a plug-in: the column is cut into equal-frequency bins
//! and the f-divergence between the empirical joint `P(b, y)` and the
//! product of marginals `P(b) P(y)` is evaluated exactly. For discretized
//! variables the optimal critic of the variational form is the density
//! ratio itself, so no optimisation is involved.

mod bounds;

pub use bounds::{
    binary_entropy, kl_noise_bias, kl_order_gap, practical_gap, practical_gap_default,
    DEFAULT_BETA_RANGE,
};

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Activation;
use crate::error::{Error, Result};

/// Weight floor for the min-max activation.
pub const WEIGHT_FLOOR: f64 = 1e-3;

/// Floor applied before taking `log2` in the log-min-max activation.
pub const MI_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FDivergenceKind {
    Kl,
    Tv,
    // Listed for completeness; the estimators reject them.
    JensenShannon,
    SquaredHellinger,
    PearsonChiSquared,
    NeymanChiSquared,
    ReverseKl,
}

impl FDivergenceKind {
    pub fn is_supported(&self) -> bool {
        matches!(self, FDivergenceKind::Kl | FDivergenceKind::Tv)
    }
}

impl fmt::Display for FDivergenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FDivergenceKind::Kl => "kl",
            FDivergenceKind::Tv => "tv",
            FDivergenceKind::JensenShannon => "jensen-shannon",
            FDivergenceKind::SquaredHellinger => "squared-hellinger",
            FDivergenceKind::PearsonChiSquared => "pearson-chi-squared",
            FDivergenceKind::NeymanChiSquared => "neyman-chi-squared",
            FDivergenceKind::ReverseKl => "reverse-kl",
        })
    }
}

impl FromStr for FDivergenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kl" => Ok(FDivergenceKind::Kl),
            "tv" => Ok(FDivergenceKind::Tv),
            _ => Err(Error::InvalidArgument(format!("unknown divergence `{s}`"))),
        }
    }
}

/// Per-dimension f-MI between features and (noisy) labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MIEstimate {
    pub per_dim: Vec<f64>,
    pub kind: FDivergenceKind,
    pub bins: usize,
}

/// Diagonal of the similarity weight matrix; entries in `(0, 1]` with max 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub w: Vec<f64>,
    pub activation: Activation,
}

impl WeightVector {
    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// Assigns each value to an equal-frequency bin. Cut points sit at the
/// sample quantiles `j/B`; repeated cut points are merged, so tied values
/// always share a bin and a constant column yields a single bin.
///
/// Returns the bin index per value and the number of distinct bins.
pub fn quantile_bins(column: ArrayView1<'_, f64>, bins: usize) -> (Vec<usize>, usize) {
    let n = column.len();
    let mut sorted: Vec<f64> = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut cuts: Vec<f64> = (1..bins).map(|j| sorted[j * n / bins]).collect();
    cuts.dedup();
    let assign: Vec<usize> = column
        .iter()
        .map(|&v| cuts.partition_point(|&c| c <= v))
        .collect();
    (assign, cuts.len() + 1)
}

/// Plug-in f-MI (base-2 logs for KL) between a real column and labels in
/// `[0, k)`, using `bins` equal-frequency bins.
pub fn estimate_fmi(
    column: ArrayView1<'_, f64>,
    labels: &[usize],
    k: usize,
    kind: FDivergenceKind,
    bins: usize,
) -> Result<f64> {
    if !kind.is_supported() {
        return Err(Error::UnsupportedDivergence(kind));
    }
    let n = column.len();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    if bins < 2 {
        return Err(Error::InvalidArgument(format!(
            "bins must be >= 2, got {bins}"
        )));
    }
    if n < bins {
        return Err(Error::TooFewRows {
            needed: bins,
            got: n,
        });
    }
    if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &y)| y >= k) {
        return Err(Error::LabelOutOfRange { row, label, k });
    }

    let (assign, n_bins) = quantile_bins(column, bins);
    let mut joint = vec![0usize; n_bins * k];
    let mut bin_count = vec![0usize; n_bins];
    let mut label_count = vec![0usize; k];
    for (&b, &y) in assign.iter().zip(labels) {
        joint[b * k + y] += 1;
        bin_count[b] += 1;
        label_count[y] += 1;
    }

    let nf = n as f64;
    let mut total = 0.0;
    for b in 0..n_bins {
        for y in 0..k {
            let c = joint[b * k + y] as f64;
            let product = bin_count[b] as f64 * label_count[y] as f64;
            match kind {
                FDivergenceKind::Kl => {
                    if c > 0.0 {
                        total += (c / nf) * (c * nf / product).log2();
                    }
                }
                FDivergenceKind::Tv => {
                    total += (c / nf - product / (nf * nf)).abs();
                }
                _ => unreachable!(),
            }
        }
    }
    Ok(match kind {
        FDivergenceKind::Tv => 0.5 * total,
        _ => total.max(0.0),
    })
}

/// f-MI of every feature column against `labels`; columns run in parallel.
pub fn estimate_mi(
    features: &Array2<f64>,
    labels: &[usize],
    k: usize,
    kind: FDivergenceKind,
    bins: usize,
) -> Result<MIEstimate> {
    let per_dim = features
        .axis_iter(Axis(1))
        .into_par_iter()
        .map(|col| estimate_fmi(col, labels, k, kind, bins))
        .collect::<Result<Vec<_>>>()?;
    Ok(MIEstimate {
        per_dim,
        kind,
        bins,
    })
}

/// Maps mutual information to weights in `(0, 1]` without changing their
/// order. Uniform inputs give all-ones weights, i.e. plain cosine.
pub fn build_weights(mi: &MIEstimate, activation: Activation) -> Result<WeightVector> {
    if mi.per_dim.is_empty() {
        return Err(Error::InvalidArgument("no dimensions to weight".into()));
    }
    let w = match activation {
        Activation::Minmax => min_max(&mi.per_dim),
        Activation::LogMinmax => {
            let logs: Vec<f64> = mi.per_dim.iter().map(|&v| v.max(MI_FLOOR).log2()).collect();
            min_max(&logs)
        }
    };
    Ok(WeightVector { w, activation })
}

fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![1.0; values.len()];
    }
    let scaled: Vec<f64> = values
        .iter()
        .map(|&v| ((v - lo) / (hi - lo)).max(WEIGHT_FLOOR))
        .collect();
    let top = scaled.iter().copied().fold(0.0, f64::max);
    scaled.into_iter().map(|v| v / top).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use proptest::prelude::*;
    use rand::{seq::SliceRandom, Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fmi(col: &[f64], labels: &[usize], kind: FDivergenceKind, bins: usize) -> f64 {
        let col = Array1::from(col.to_vec());
        estimate_fmi(col.view(), labels, 2, kind, bins).unwrap()
    }

    #[test]
    fn column_equal_to_balanced_label() {
        let labels: Vec<usize> = (0..1000).map(|i| i % 2).collect();
        let col: Vec<f64> = labels.iter().map(|&y| y as f64).collect();
        assert!((fmi(&col, &labels, FDivergenceKind::Kl, 2) - 1.0).abs() < 1e-12);
        assert!((fmi(&col, &labels, FDivergenceKind::Tv, 2) - 0.5).abs() < 1e-12);
        // more bins than distinct values: ties merge into two bins anyway
        assert!((fmi(&col, &labels, FDivergenceKind::Kl, 15) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_column_and_constant_labels() {
        let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let col = vec![3.0; 100];
        assert_eq!(fmi(&col, &labels, FDivergenceKind::Kl, 15), 0.0);
        assert_eq!(fmi(&col, &labels, FDivergenceKind::Tv, 15), 0.0);

        let col: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let same = vec![1usize; 100];
        assert!(fmi(&col, &same, FDivergenceKind::Kl, 15).abs() < 1e-12);
        assert!(fmi(&col, &same, FDivergenceKind::Tv, 15).abs() < 1e-12);
    }

    #[test]
    fn independent_labels_give_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let col: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let mut labels: Vec<usize> = (0..10_000).map(|i| i % 2).collect();
        labels.shuffle(&mut rng);
        assert!(fmi(&col, &labels, FDivergenceKind::Kl, 15) < 0.01);
        // TV's plug-in bias shrinks like sqrt(B / N): ~0.011 at N = 1e4, B = 15
        assert!(fmi(&col, &labels, FDivergenceKind::Tv, 15) < 0.02);

        let col: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        let mut labels: Vec<usize> = (0..100_000).map(|i| i % 2).collect();
        labels.shuffle(&mut rng);
        assert!(fmi(&col, &labels, FDivergenceKind::Tv, 15) < 0.01);
    }

    #[test]
    fn quantile_bins_are_balanced_and_merge_ties() {
        let col: Array1<f64> = (0..150).map(|i| i as f64).collect();
        let (assign, nb) = quantile_bins(col.view(), 15);
        assert_eq!(nb, 15);
        let mut counts = vec![0; nb];
        assign.iter().for_each(|&b| counts[b] += 1);
        assert!(counts.iter().all(|&c| c == 10));

        let col = array![1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 5.0, 9.0];
        let (assign, _) = quantile_bins(col.view(), 4);
        assert!(assign[..4].iter().all(|&b| b == assign[0]));
        assert_eq!(assign[4], assign[5]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let col = array![1.0, 2.0, 3.0];
        assert!(matches!(
            estimate_fmi(col.view(), &[0, 1, 0], 2, FDivergenceKind::JensenShannon, 2),
            Err(Error::UnsupportedDivergence(_))
        ));
        assert!(estimate_fmi(col.view(), &[0, 1], 2, FDivergenceKind::Kl, 2).is_err());
        assert!(estimate_fmi(col.view(), &[0, 1, 2], 2, FDivergenceKind::Kl, 2).is_err());
        assert!(estimate_fmi(col.view(), &[0, 1, 0], 2, FDivergenceKind::Kl, 4).is_err());
    }

    fn mi(per_dim: Vec<f64>) -> MIEstimate {
        MIEstimate {
            per_dim,
            kind: FDivergenceKind::Tv,
            bins: 15,
        }
    }

    #[test]
    fn weights_examples() {
        let w = build_weights(&mi(vec![0.4, 0.4, 0.4]), Activation::Minmax).unwrap();
        assert_eq!(w.w, vec![1.0, 1.0, 1.0]);
        let w = build_weights(&mi(vec![0.4, 0.4, 0.4]), Activation::LogMinmax).unwrap();
        assert_eq!(w.w, vec![1.0, 1.0, 1.0]);

        let w = build_weights(&mi(vec![0.8, 0.2, 0.0]), Activation::Minmax).unwrap();
        let want = [1.0, 0.25, 0.001];
        for (g, e) in w.w.iter().zip(want) {
            assert!((g - e).abs() < 1e-12, "{:?}", w.w);
        }

        // log2 floor: [log2 0.8, log2 0.2, log2 1e-6]
        let w = build_weights(&mi(vec![0.8, 0.2, 0.0]), Activation::LogMinmax).unwrap();
        let logs = [0.8f64.log2(), 0.2f64.log2(), 1e-6f64.log2()];
        let expect_mid = (logs[1] - logs[2]) / (logs[0] - logs[2]);
        assert!((w.w[0] - 1.0).abs() < 1e-12);
        assert!((w.w[1] - expect_mid).abs() < 1e-12);
        assert!((w.w[2] - WEIGHT_FLOOR).abs() < 1e-12);

        assert!(build_weights(&mi(vec![]), Activation::Minmax).is_err());
    }

    proptest! {
        #[test]
        fn weights_preserve_order(values in prop::collection::vec(0.0f64..2.0, 1..20),
                                  log in any::<bool>()) {
            let act = if log { Activation::LogMinmax } else { Activation::Minmax };
            let w = build_weights(&mi(values.clone()), act).unwrap();
            let max = w.w.iter().copied().fold(0.0, f64::max);
            prop_assert!((max - 1.0).abs() < 1e-12);
            for (i, &a) in values.iter().enumerate() {
                prop_assert!(w.w[i] > 0.0 && w.w[i] <= 1.0);
                for (j, &b) in values.iter().enumerate() {
                    if a <= b {
                        prop_assert!(w.w[i] <= w.w[j]);
                    }
                }
            }
        }

        #[test]
        fn fmi_permutation_and_duplication_invariant(seed in any::<u64>(), n in 40usize..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
            let col: Vec<f64> = labels.iter().map(|&y| y as f64 + rng.random::<f64>() * 1.5).collect();
            for kind in [FDivergenceKind::Kl, FDivergenceKind::Tv] {
                let base = estimate_fmi(Array1::from(col.clone()).view(), &labels, 3, kind, 7).unwrap();

                let mut idx: Vec<usize> = (0..n).collect();
                idx.shuffle(&mut rng);
                let pc: Vec<f64> = idx.iter().map(|&i| col[i]).collect();
                let pl: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
                let permuted = estimate_fmi(Array1::from(pc).view(), &pl, 3, kind, 7).unwrap();
                prop_assert!((base - permuted).abs() < 1e-12);

                let dc: Vec<f64> = col.iter().chain(col.iter()).copied().collect();
                let dl: Vec<usize> = labels.iter().chain(labels.iter()).copied().collect();
                let doubled = estimate_fmi(Array1::from(dc).view(), &dl, 3, kind, 7).unwrap();
                prop_assert!((base - doubled).abs() < 1e-9);
                prop_assert!(base >= 0.0 && base.is_finite());
                if kind == FDivergenceKind::Tv {
                    prop_assert!(base <= 1.0);
                }
            }
        }
    }
}
