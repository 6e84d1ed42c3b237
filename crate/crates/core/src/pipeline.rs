//! End-to-end estimation: optional whitening, noisy-label f-MI weights,
//! weighted 2-NN triplets, consensus counts, and the transition solve.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{
    Activation, Dataset, EstimatorConfig, Report, StageTiming, TransitionMatrix, Variant,
};
use crate::error::Result;
use crate::eval::estimation_error;
use crate::hoc::{count_consensus, solve_transition};
use crate::infotheory::{build_weights, estimate_mi, FDivergenceKind};
use crate::similarity::{get_2nn_triplets, NeighborTriplets, SimilarityWeights};
use crate::whitening::{fit_whitening, WhiteningTransform};

/// What each variant switches on. `a-*` whitens first, `x-*` weights raw
/// features, `plain-hoc` uses unweighted cosine on raw features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub whiten: bool,
    pub divergence: Option<FDivergenceKind>,
    pub activation: Activation,
}

impl VariantSpec {
    pub fn new(variant: Variant, activation: Activation) -> Self {
        let (whiten, divergence) = match variant {
            Variant::PlainHoc => (false, None),
            Variant::XKl => (false, Some(FDivergenceKind::Kl)),
            Variant::XTv => (false, Some(FDivergenceKind::Tv)),
            Variant::AKl => (true, Some(FDivergenceKind::Kl)),
            Variant::ATv => (true, Some(FDivergenceKind::Tv)),
        };
        Self {
            whiten,
            divergence,
            activation,
        }
    }
}

struct Stopwatch {
    timings: Vec<StageTiming>,
    last: Instant,
}

impl Stopwatch {
    fn new() -> Self {
        Self {
            timings: Vec::new(),
            last: Instant::now(),
        }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds: (now - self.last).as_secs_f64(),
        });
        self.last = now;
    }
}

/// Intermediate products of an estimation run, kept for export.
#[derive(Debug, Clone)]
pub struct EstimateArtifacts {
    pub whitening: Option<WhiteningTransform>,
    pub triplets: NeighborTriplets,
}

/// Estimates `T` from `data` with the configured variant. Only noisy labels
/// are used; clean labels, if present, are ignored. When `true_t` is given
/// the report carries the estimation error against it.
pub fn estimate(
    data: &Dataset,
    config: &EstimatorConfig,
    true_t: Option<&TransitionMatrix>,
) -> Result<Report> {
    estimate_detailed(data, config, true_t).map(|(report, _)| report)
}

/// [`estimate`], also returning the whitening map and the 2-NN triplets.
pub fn estimate_detailed(
    data: &Dataset,
    config: &EstimatorConfig,
    true_t: Option<&TransitionMatrix>,
) -> Result<(Report, EstimateArtifacts)> {
    config.validate()?;
    let spec = VariantSpec::new(config.variant, config.activation);
    let mut clock = Stopwatch::new();

    let whitening = if spec.whiten {
        Some(fit_whitening(data, config.eigen_floor)?)
    } else {
        None
    };
    let whitened;
    let working = match &whitening {
        Some(transform) => {
            whitened = transform.apply(data)?;
            clock.lap("whiten");
            &whitened
        }
        None => data,
    };

    let (mi, weights) = match spec.divergence {
        Some(kind) => {
            let mi = estimate_mi(
                working.features(),
                working.noisy_labels(),
                working.k(),
                kind,
                config.bins,
            )?;
            let weights = build_weights(&mi, spec.activation)?;
            clock.lap("weights");
            (Some(mi), Some(weights))
        }
        None => (None, None),
    };
    let similarity = match &weights {
        Some(w) => SimilarityWeights::diagonal(w.w.clone())?,
        None => SimilarityWeights::Identity,
    };

    let triplets = get_2nn_triplets(working, &similarity)?;
    clock.lap("neighbors");
    let consensus = count_consensus(&triplets, working.k())?;
    clock.lap("count");
    let solution = solve_transition(&consensus, &config.optimizer, config.seed)?;
    clock.lap("solve");

    let error = true_t
        .map(|t| estimation_error(t, &solution.t))
        .transpose()?;

    let report = Report {
        estimated_t: solution.t,
        mi,
        weights,
        error,
        consensus,
        search_dim: working.dim(),
        final_loss: solution.final_loss,
        iterations: solution.iterations_used,
        converged: solution.converged,
        config: config.clone(),
        timings: clock.timings,
    };
    Ok((
        report,
        EstimateArtifacts {
            whitening,
            triplets,
        },
    ))
}
