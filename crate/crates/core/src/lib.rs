//! Label-noise transition matrix estimation.
//!
//! Given feature vectors and noisy labels, [`pipeline::estimate`] recovers the
//! class-dependent transition matrix `T[i][j] = P(noisy = j | clean = i)` by
//! counting agreement patterns among each point and its two nearest
//! neighbours (high-order consensus). Neighbours are found with a soft cosine
//! similarity whose per-dimension weights come from f-mutual information
//! between each feature and the *noisy* label, optionally after whitening the
//! features so the dimensions are uncorrelated.
//!
//! Module map:
//!
//! | module | contents |
//! |--------|----------|
//! | [`data`] | [`Dataset`], [`TransitionMatrix`], configs, [`Report`], CSV/JSON I/O |
//! | [`whitening`] | covariance eigenbasis decorrelation |
//! | [`infotheory`] | plug-in KL/TV mutual information, weights, order-preservation bounds |
//! | [`similarity`] | soft cosine similarity, exact 2-NN search |
//! | [`hoc`] | consensus counting and the transition-matrix solver |
//! | [`noise`] | synthetic class-dependent noise |
//! | [`eval`] | estimation error and a forward-corrected linear classifier |
//! | [`pipeline`] | end-to-end estimation for every variant |

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod eval;
pub mod hoc;
pub mod infotheory;
pub mod noise;
pub mod pipeline;
pub mod similarity;
pub mod whitening;

pub use data::{
    load_dataset, save_dataset, validate_transition, Activation, CsvSchema, Dataset,
    EstimatorConfig, NoiseRatePair, OptimizerConfig, Report, TransitionMatrix, Variant,
};
pub use error::{Error, Result};
pub use eval::{estimation_error, train_linear, DownstreamResult, LossMode, TrainConfig};
pub use hoc::{
    count_consensus, model_consensus, solve_transition, ConsensusStatistics, HocSolution,
};
pub use infotheory::{
    build_weights, estimate_fmi, kl_noise_bias, kl_order_gap, practical_gap, FDivergenceKind,
    MIEstimate, WeightVector,
};
pub use noise::{avg_noise_rate_from_r, build_transition, inject_noise, NoiseKind, NoiseScheme};
pub use pipeline::{estimate, estimate_detailed, EstimateArtifacts, VariantSpec};
pub use similarity::{
    clusterability_rate, get_2nn_triplets, soft_cosine, NeighborTriplets, SimilarityWeights,
};
pub use whitening::{fit_whitening, WhiteningTransform};
