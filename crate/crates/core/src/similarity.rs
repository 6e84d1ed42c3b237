//! Soft cosine similarity and exact two-nearest-neighbour search.
//!
//! `Sim_W(x, x') = xᵀ W x' / (√(xᵀ W x) · √(x'ᵀ W x'))`, evaluated as a
//! quadratic form so no matrix square root is needed.

use std::path::Path;

use ndarray::{s, Array2, ArrayView1, Axis, Zip};
use rayon::prelude::*;

use crate::data::{Dataset, MIN_ROWS};
use crate::error::{Error, Result};

const SYMMETRY_TOLERANCE: f64 = 1e-9;
const QUERY_BLOCK: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub enum SimilarityWeights {
    /// `W = I`: plain cosine similarity.
    Identity,
    /// `W = diag(w)` with `w ≥ 0`.
    Diagonal(Vec<f64>),
    /// Symmetric positive-semidefinite `W`.
    Full(Array2<f64>),
}

impl SimilarityWeights {
    pub fn diagonal(w: Vec<f64>) -> Result<Self> {
        if let Some(&v) = w.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "diagonal weight {v} is not >= 0"
            )));
        }
        Ok(SimilarityWeights::Diagonal(w))
    }

    pub fn full(w: Array2<f64>) -> Result<Self> {
        let (r, c) = w.dim();
        if r != c {
            return Err(Error::DimensionMismatch {
                expected: r,
                got: c,
            });
        }
        let asym = Zip::from(&w)
            .and(&w.t())
            .fold(0.0f64, |m, &a, &b| m.max((a - b).abs()));
        if asym > SYMMETRY_TOLERANCE {
            return Err(Error::AsymmetricWeights(asym));
        }
        Ok(SimilarityWeights::Full(w))
    }

    /// Dimension constraint, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            SimilarityWeights::Identity => None,
            SimilarityWeights::Diagonal(w) => Some(w.len()),
            SimilarityWeights::Full(m) => Some(m.nrows()),
        }
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        match self.dim() {
            Some(expected) if expected != d => Err(Error::DimensionMismatch { expected, got: d }),
            _ => Ok(()),
        }
    }

    /// `xᵀ W y`.
    pub fn quad(&self, x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> f64 {
        match self {
            SimilarityWeights::Identity => x.dot(&y),
            SimilarityWeights::Diagonal(w) => x
                .iter()
                .zip(y.iter())
                .zip(w)
                .map(|((a, b), w)| a * w * b)
                .sum(),
            SimilarityWeights::Full(m) => x.dot(&m.dot(&y)),
        }
    }

    /// Row-wise maps `(a_n, b_n)` with `Sim_W(x_n, x_m) = a_n · b_m`.
    fn embed(&self, x: &Array2<f64>) -> Result<(Array2<f64>, Option<Array2<f64>>)> {
        let mut b = x.to_owned();
        if let SimilarityWeights::Diagonal(w) = self {
            let root: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
            for mut row in b.rows_mut() {
                row.iter_mut().zip(&root).for_each(|(v, r)| *v *= r);
            }
        }
        let a = match self {
            SimilarityWeights::Full(m) => Some(b.dot(m)),
            _ => None,
        };
        // squared weighted norms
        let norms: Vec<f64> = match &a {
            Some(a) => a
                .rows()
                .into_iter()
                .zip(b.rows())
                .map(|(ar, br)| ar.dot(&br))
                .collect(),
            None => b.rows().into_iter().map(|r| r.dot(&r)).collect(),
        };
        if let Some(&bad) = norms.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::DegenerateVector(bad));
        }
        let scale = |m: &mut Array2<f64>| {
            for (mut row, &nn) in m.rows_mut().into_iter().zip(&norms) {
                row /= nn.sqrt();
            }
        };
        scale(&mut b);
        let a = a.map(|mut a| {
            scale(&mut a);
            a
        });
        Ok((b, a))
    }
}

/// Soft cosine similarity of two vectors under `w`, clamped to `[-1, 1]`.
pub fn soft_cosine(
    x: ArrayView1<'_, f64>,
    x2: ArrayView1<'_, f64>,
    w: &SimilarityWeights,
) -> Result<f64> {
    if x.len() != x2.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: x2.len(),
        });
    }
    w.check_dim(x.len())?;
    let nx = w.quad(x, x);
    if !(nx > 0.0) {
        return Err(Error::DegenerateVector(nx));
    }
    let ny = w.quad(x2, x2);
    if !(ny > 0.0) {
        return Err(Error::DegenerateVector(ny));
    }
    Ok((w.quad(x, x2) / (nx.sqrt() * ny.sqrt())).clamp(-1.0, 1.0))
}

/// Each row's two most similar other rows and the three noisy labels.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTriplets {
    pub first: Vec<usize>,
    pub second: Vec<usize>,
    /// `(ỹ_n, ỹ_{n1}, ỹ_{n2})` per row.
    pub labels: Vec<[usize; 3]>,
}

impl NeighborTriplets {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Debug dump with columns `n,n1,n2,y_n,y_n1,y_n2`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["n", "n1", "n2", "y_n", "y_n1", "y_n2"])?;
        for (n, ys) in self.labels.iter().enumerate() {
            w.write_record(
                [n, self.first[n], self.second[n], ys[0], ys[1], ys[2]].map(|v| v.to_string()),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Indices of the two most similar rows (excluding the row itself) for
/// every row, by exhaustive search. Ties go to the lower row index.
pub fn nearest_two(features: &Array2<f64>, w: &SimilarityWeights) -> Result<Vec<(usize, usize)>> {
    let n = features.nrows();
    if n < MIN_ROWS {
        return Err(Error::TooFewRows {
            needed: MIN_ROWS,
            got: n,
        });
    }
    w.check_dim(features.ncols())?;
    let (keys, queries) = w.embed(features)?;
    let queries = queries.as_ref().unwrap_or(&keys);

    let blocks: Vec<usize> = (0..n).step_by(QUERY_BLOCK).collect();
    let out: Vec<Vec<(usize, usize)>> = blocks
        .into_par_iter()
        .map(|start| {
            let end = (start + QUERY_BLOCK).min(n);
            let sims = queries.slice(s![start..end, ..]).dot(&keys.t());
            sims.axis_iter(Axis(0))
                .enumerate()
                .map(|(offset, row)| top_two(row, start + offset))
                .collect()
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}

fn top_two(sims: ArrayView1<'_, f64>, skip: usize) -> (usize, usize) {
    let mut best = (f64::NEG_INFINITY, usize::MAX);
    let mut second = (f64::NEG_INFINITY, usize::MAX);
    for (j, &s) in sims.iter().enumerate() {
        if j == skip {
            continue;
        }
        if s > best.0 || best.1 == usize::MAX {
            second = best;
            best = (s, j);
        } else if s > second.0 || second.1 == usize::MAX {
            second = (s, j);
        }
    }
    (best.1, second.1)
}

/// 2-NN triplets of noisy labels under soft cosine similarity.
pub fn get_2nn_triplets(data: &Dataset, w: &SimilarityWeights) -> Result<NeighborTriplets> {
    let pairs = nearest_two(data.features(), w)?;
    let y = data.noisy_labels();
    let (first, second): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
    let labels = pairs
        .iter()
        .enumerate()
        .map(|(n, &(a, b))| [y[n], y[a], y[b]])
        .collect();
    Ok(NeighborTriplets {
        first,
        second,
        labels,
    })
}

/// Fraction of rows whose two nearest neighbours share the row's clean label.
pub fn clusterability_rate(data: &Dataset, w: &SimilarityWeights) -> Result<f64> {
    let clean = data.clean_labels().ok_or(Error::MissingCleanLabels)?;
    let pairs = nearest_two(data.features(), w)?;
    let hits = pairs
        .iter()
        .enumerate()
        .filter(|&(n, &(a, b))| clean[a] == clean[n] && clean[b] == clean[n])
        .count();
    Ok(hits as f64 / data.len() as f64)
}
