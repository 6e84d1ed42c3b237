//! High-order consensus: count agreement patterns among 2-NN noisy-label
//! triplets and solve for the transition matrix and clean prior that
//! reproduce them.
//!
//! If a point and its two neighbours share one clean label `i ~ p`, their
//! noisy labels are three independent draws from row `i` of `T`, so
//!
//! ```text
//! c1[j]       = Σ_i p_i T_ij
//! c2[j][l]    = Σ_i p_i T_ij T_il
//! c3[j][l][m] = Σ_i p_i T_ij T_il T_im
//! ```
//!
//! The solver fits softmax-parameterised `(T, p)` to the empirical tensors
//! by minimising the summed squared error over all three orders.

use itertools::Itertools;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{OptimizerConfig, TransitionMatrix};
use crate::error::{Error, Result};
use crate::similarity::NeighborTriplets;

/// Largest `K` for which the label permutation is found exhaustively.
const EXHAUSTIVE_PERMUTATION_K: usize = 8;

/// Diagonal of the near-identity starting point.
const NEAR_IDENTITY_DIAGONAL: f64 = 0.9;

/// Empirical (or model-implied) first/second/third-order pattern
/// frequencies. Each tensor sums to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusStatistics {
    pub k: usize,
    /// Number of triplets counted; 0 for model-implied statistics.
    pub n: usize,
    pub c1: Vec<f64>,
    pub c2: Vec<Vec<f64>>,
    pub c3: Vec<Vec<Vec<f64>>>,
}

impl ConsensusStatistics {
    fn from_flat(k: usize, n: usize, c1: Vec<f64>, c2: &[f64], c3: &[f64]) -> Self {
        let c2 = c2.chunks(k).map(<[f64]>::to_vec).collect();
        let c3 = c3
            .chunks(k * k)
            .map(|plane| plane.chunks(k).map(<[f64]>::to_vec).collect())
            .collect();
        Self { k, n, c1, c2, c3 }
    }

    fn flat(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let c2 = self.c2.iter().flatten().copied().collect();
        let c3 = self.c3.iter().flatten().flatten().copied().collect();
        (self.c1.clone(), c2, c3)
    }

    /// Checks shapes, non-negativity and unit mass of every tensor.
    pub fn validate(&self) -> Result<()> {
        let k = self.k;
        let shape_ok = self.c1.len() == k
            && self.c2.len() == k
            && self.c2.iter().all(|r| r.len() == k)
            && self.c3.len() == k
            && self
                .c3
                .iter()
                .all(|p| p.len() == k && p.iter().all(|r| r.len() == k));
        if !shape_ok {
            return Err(Error::InvalidArgument(format!(
                "consensus tensors are not K={k} shaped"
            )));
        }
        let (c1, c2, c3) = self.flat();
        for (name, t) in [("c1", &c1), ("c2", &c2), ("c3", &c3)] {
            if t.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} has a negative entry"
                )));
            }
            let sum: f64 = t.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("{name} sums to {sum}")));
            }
        }
        Ok(())
    }
}

/// Empirical pattern frequencies of `(ỹ_n, ỹ_{n1}, ỹ_{n2})`; `c2` uses the
/// ordered pair `(ỹ_n, ỹ_{n1})`.
pub fn count_consensus(triples: &NeighborTriplets, k: usize) -> Result<ConsensusStatistics> {
    count_label_triples(&triples.labels, k)
}

pub fn count_label_triples(labels: &[[usize; 3]], k: usize) -> Result<ConsensusStatistics> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::TooFewRows { needed: 1, got: 0 });
    }
    let mut c1 = vec![0.0; k];
    let mut c2 = vec![0.0; k * k];
    let mut c3 = vec![0.0; k * k * k];
    for (row, &[a, b, c]) in labels.iter().enumerate() {
        if let Some(&label) = [a, b, c].iter().find(|&&y| y >= k) {
            return Err(Error::LabelOutOfRange { row, label, k });
        }
        c1[a] += 1.0;
        c2[a * k + b] += 1.0;
        c3[(a * k + b) * k + c] += 1.0;
    }
    let nf = n as f64;
    for v in c1.iter_mut().chain(c2.iter_mut()).chain(c3.iter_mut()) {
        *v /= nf;
    }
    Ok(ConsensusStatistics::from_flat(k, n, c1, &c2, &c3))
}

/// Pattern probabilities implied by `(T, p)` under 2-NN clusterability.
pub fn model_consensus(t: &TransitionMatrix, p: &[f64]) -> Result<ConsensusStatistics> {
    let k = t.k();
    if p.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: p.len(),
        });
    }
    let flat_t: Vec<f64> = t.matrix().iter().copied().collect();
    let (c1, c2, c3) = model_tensors(&flat_t, p, k);
    Ok(ConsensusStatistics::from_flat(k, 0, c1, &c2, &c3))
}

fn model_tensors(t: &[f64], p: &[f64], k: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut c1 = vec![0.0; k];
    let mut c2 = vec![0.0; k * k];
    let mut c3 = vec![0.0; k * k * k];
    for i in 0..k {
        let row = &t[i * k..(i + 1) * k];
        for j in 0..k {
            let a = p[i] * row[j];
            c1[j] += a;
            for l in 0..k {
                let b = a * row[l];
                c2[j * k + l] += b;
                for m in 0..k {
                    c3[(j * k + l) * k + m] += b * row[m];
                }
            }
        }
    }
    (c1, c2, c3)
}

/// Solver output. `t` carries the estimated prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HocSolution {
    pub t: TransitionMatrix,
    pub p: Vec<f64>,
    pub final_loss: f64,
    pub iterations_used: usize,
    pub converged: bool,
}

/// Squared-error consensus loss and its gradient with respect to the
/// row-softmax logits of `T` and the softmax logits of `p`.
struct Objective<'a> {
    k: usize,
    c1: &'a [f64],
    c2: &'a [f64],
    c3: &'a [f64],
}

impl Objective<'_> {
    fn loss(&self, t: &[f64], p: &[f64]) -> f64 {
        let (m1, m2, m3) = model_tensors(t, p, self.k);
        sq_dist(&m1, self.c1) + sq_dist(&m2, self.c2) + sq_dist(&m3, self.c3)
    }

    /// Returns the loss and writes logit gradients into `g_theta`, `g_phi`.
    fn loss_and_grad(&self, t: &[f64], p: &[f64], g_theta: &mut [f64], g_phi: &mut [f64]) -> f64 {
        let k = self.k;
        let (m1, m2, m3) = model_tensors(t, p, k);
        let r1: Vec<f64> = m1.iter().zip(self.c1).map(|(a, b)| a - b).collect();
        let r2: Vec<f64> = m2.iter().zip(self.c2).map(|(a, b)| a - b).collect();
        let r3: Vec<f64> = m3.iter().zip(self.c3).map(|(a, b)| a - b).collect();
        let loss = dot(&r1, &r1) + dot(&r2, &r2) + dot(&r3, &r3);

        // symmetrised residuals: d/dT_ij of Σ r2_jl T_ij T_il etc.
        let mut s2 = vec![0.0; k * k];
        let mut s3 = vec![0.0; k * k * k];
        for j in 0..k {
            for l in 0..k {
                s2[j * k + l] = r2[j * k + l] + r2[l * k + j];
                for m in 0..k {
                    s3[(j * k + l) * k + m] =
                        r3[(j * k + l) * k + m] + r3[(l * k + j) * k + m] + r3[(l * k + m) * k + j];
                }
            }
        }

        let mut g_t = vec![0.0; k];
        let mut g_p = vec![0.0; k];
        for i in 0..k {
            let row = &t[i * k..(i + 1) * k];
            // d loss / d p_i
            let mut gp = 0.0;
            for j in 0..k {
                gp += r1[j] * row[j];
                for l in 0..k {
                    let tjl = row[j] * row[l];
                    gp += r2[j * k + l] * tjl;
                    for m in 0..k {
                        gp += r3[(j * k + l) * k + m] * tjl * row[m];
                    }
                }
            }
            g_p[i] = 2.0 * gp;

            // d loss / d T_ij
            for j in 0..k {
                let mut acc = r1[j];
                for l in 0..k {
                    acc += s2[j * k + l] * row[l];
                    for m in 0..k {
                        acc += s3[(j * k + l) * k + m] * row[l] * row[m];
                    }
                }
                g_t[j] = 2.0 * p[i] * acc;
            }
            // through the row softmax
            let mean: f64 = (0..k).map(|j| row[j] * g_t[j]).sum();
            for j in 0..k {
                g_theta[i * k + j] = row[j] * (g_t[j] - mean);
            }
        }
        let mean: f64 = (0..k).map(|i| p[i] * g_p[i]).sum();
        for i in 0..k {
            g_phi[i] = p[i] * (g_p[i] - mean);
        }
        loss
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

struct Params {
    theta: Vec<f64>,
    phi: Vec<f64>,
}

impl Params {
    fn near_identity(k: usize) -> Self {
        let off = (1.0 - NEAR_IDENTITY_DIAGONAL) / (k as f64 - 1.0);
        let diag = (NEAR_IDENTITY_DIAGONAL / off).ln();
        let theta = (0..k * k)
            .map(|idx| if idx / k == idx % k { diag } else { 0.0 })
            .collect();
        Self {
            theta,
            phi: vec![0.0; k],
        }
    }

    fn random(k: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len).map(|_| StandardNormal.sample(&mut *rng)).collect()
        };
        Self {
            theta: draw(k * k),
            phi: draw(k),
        }
    }

    fn decode(&self, k: usize, t: &mut [f64], p: &mut [f64]) {
        for i in 0..k {
            softmax_into(&self.theta[i * k..(i + 1) * k], &mut t[i * k..(i + 1) * k]);
        }
        softmax_into(&self.phi, p);
    }
}

struct RunResult {
    t: Vec<f64>,
    p: Vec<f64>,
    loss: f64,
    iterations: usize,
    converged: bool,
}

/// Adam moments for one parameter block.
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-12;

    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, iter: usize) {
        let c1 = 1.0 - Self::BETA1.powi(iter as i32);
        let c2 = 1.0 - Self::BETA2.powi(iter as i32);
        for ((x, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *x -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

fn run(objective: &Objective<'_>, mut params: Params, config: &OptimizerConfig) -> RunResult {
    let k = objective.k;
    let mut t = vec![0.0; k * k];
    let mut p = vec![0.0; k];
    let mut g_theta = vec![0.0; k * k];
    let mut g_phi = vec![0.0; k];
    let mut m_theta = Moments::new(k * k);
    let mut m_phi = Moments::new(k);

    let mut best = (f64::INFINITY, params.theta.clone(), params.phi.clone());
    let mut converged = false;
    let mut iterations = 0;
    for iter in 1..=config.max_iters {
        iterations = iter;
        params.decode(k, &mut t, &mut p);
        let loss = objective.loss_and_grad(&t, &p, &mut g_theta, &mut g_phi);
        if loss < best.0 {
            best = (loss, params.theta.clone(), params.phi.clone());
        }
        let grad_norm = g_theta
            .iter()
            .chain(&g_phi)
            .fold(0.0f64, |m, g| m.max(g.abs()));
        if grad_norm < config.tolerance {
            converged = true;
            break;
        }
        m_theta.step(&mut params.theta, &g_theta, config.step_size, iter);
        m_phi.step(&mut params.phi, &g_phi, config.step_size, iter);
    }

    params.decode(k, &mut t, &mut p);
    let last = objective.loss(&t, &p);
    if best.0 < last {
        params.theta = best.1;
        params.phi = best.2;
        params.decode(k, &mut t, &mut p);
    }
    let loss = objective.loss(&t, &p);
    RunResult {
        t,
        p,
        loss,
        iterations,
        converged,
    }
}

/// Fits `(T, p)` to the consensus statistics.
///
/// Runs one near-identity start plus `config.restarts` seeded random starts
/// (in parallel) and keeps the lowest loss. Rows of `T` and entries of `p`
/// are then relabelled so the trace of `T` is maximal.
pub fn solve_transition(
    stats: &ConsensusStatistics,
    config: &OptimizerConfig,
    seed: u64,
) -> Result<HocSolution> {
    stats.validate()?;
    let k = stats.k;
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "class count must be >= 2, got {k}"
        )));
    }
    if config.max_iters == 0 || !(config.step_size > 0.0) {
        return Err(Error::InvalidArgument(
            "invalid optimizer configuration".into(),
        ));
    }
    let (c1, c2, c3) = stats.flat();
    let objective = Objective {
        k,
        c1: &c1,
        c2: &c2,
        c3: &c3,
    };

    let runs: Vec<RunResult> = (0..=config.restarts)
        .into_par_iter()
        .map(|restart| {
            let start = if restart == 0 {
                Params::near_identity(k)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(restart as u64);
                Params::random(k, &mut rng)
            };
            run(&objective, start, config)
        })
        .collect();
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.loss < a.loss { b } else { a })
        .expect("at least one run");

    let (t, p) = maximize_trace(&best.t, &best.p, k);
    let rows: Vec<Vec<f64>> = t.chunks(k).map(<[f64]>::to_vec).collect();
    let tm = TransitionMatrix::from_rows(&rows)?.with_prior(p.clone())?;
    Ok(HocSolution {
        t: tm,
        p,
        final_loss: best.loss,
        iterations_used: best.iterations,
        converged: best.converged,
    })
}

/// Reorders clean classes (rows of `t`, entries of `p`) to maximise the trace.
fn maximize_trace(t: &[f64], p: &[f64], k: usize) -> (Vec<f64>, Vec<f64>) {
    let trace_of = |perm: &[usize]| -> f64 { (0..k).map(|i| t[perm[i] * k + i]).sum() };
    let perm: Vec<usize> = if k <= EXHAUSTIVE_PERMUTATION_K {
        let mut best: (f64, Vec<usize>) = (f64::NEG_INFINITY, (0..k).collect());
        for perm in (0..k).permutations(k) {
            let tr = trace_of(&perm);
            if tr > best.0 {
                best = (tr, perm);
            }
        }
        best.1
    } else {
        // greedy: repeatedly take the largest remaining entry
        let mut perm = vec![usize::MAX; k];
        let mut used_rows = vec![false; k];
        let mut cells: Vec<(usize, usize)> = (0..k).cartesian_product(0..k).collect();
        cells.sort_by(|&(a, b), &(c, d)| t[c * k + d].total_cmp(&t[a * k + b]));
        for (row, col) in cells {
            if !used_rows[row] && perm[col] == usize::MAX {
                used_rows[row] = true;
                perm[col] = row;
            }
        }
        perm
    };
    let mut out_t = vec![0.0; k * k];
    let mut out_p = vec![0.0; k];
    for (new, &old) in perm.iter().enumerate() {
        out_t[new * k..(new + 1) * k].copy_from_slice(&t[old * k..(old + 1) * k]);
        out_p[new] = p[old];
    }
    (out_t, out_p)
}

/// Squared-error consensus loss of `(t, p)` against `stats`.
pub fn consensus_loss(stats: &ConsensusStatistics, t: &TransitionMatrix, p: &[f64]) -> Result<f64> {
    let k = stats.k;
    if t.k() != k || p.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: t.k(),
        });
    }
    let (c1, c2, c3) = stats.flat();
    let flat_t: Vec<f64> = t.matrix().iter().copied().collect();
    Ok(Objective {
        k,
        c1: &c1,
        c2: &c2,
        c3: &c3,
    }
    .loss(&flat_t, p))
}
