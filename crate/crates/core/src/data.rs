//! Shared data model: datasets, transition matrices, configuration and the
//! report emitted by every estimation run.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hoc::ConsensusStatistics;
use crate::infotheory::{MIEstimate, WeightVector};

/// Row-sum tolerance accepted by [`validate_transition`].
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// Smallest dataset for which every row has two distinct neighbours.
pub const MIN_ROWS: usize = 3;

/// Feature matrix plus noisy (and optionally clean) labels.
///
/// Immutable once built; every constructor validates the invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    noisy_labels: Vec<usize>,
    clean_labels: Option<Vec<usize>>,
    k: usize,
    ids: Option<Vec<String>>,
}

impl Dataset {
    /// Builds a dataset. When `k` is `None` it is inferred as one more than
    /// the largest label seen (noisy or clean), and at least 2.
    pub fn new(
        features: Array2<f64>,
        noisy_labels: Vec<usize>,
        clean_labels: Option<Vec<usize>>,
        k: Option<usize>,
    ) -> Result<Self> {
        let n = features.nrows();
        if n < MIN_ROWS {
            return Err(Error::TooFewRows {
                needed: MIN_ROWS,
                got: n,
            });
        }
        if features.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "feature dimension must be at least 1".into(),
            ));
        }
        if noisy_labels.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: noisy_labels.len(),
            });
        }
        if let Some(clean) = &clean_labels {
            if clean.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: clean.len(),
                });
            }
        }
        for ((row, col), v) in features.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFiniteFeature { row, col });
            }
        }

        let max_label = noisy_labels
            .iter()
            .chain(clean_labels.iter().flatten())
            .copied()
            .max()
            .unwrap_or(0);
        let k = match k {
            Some(k) if k < 2 => {
                return Err(Error::InvalidArgument(format!(
                    "class count must be >= 2, got {k}"
                )))
            }
            Some(k) => k,
            None => (max_label + 1).max(2),
        };
        let labels = noisy_labels.iter().chain(clean_labels.iter().flatten());
        for (i, &label) in labels.enumerate() {
            if label >= k {
                return Err(Error::LabelOutOfRange {
                    row: i % n,
                    label,
                    k,
                });
            }
        }

        Ok(Self {
            features,
            noisy_labels,
            clean_labels,
            k,
            ids: None,
        })
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: ids.len(),
            });
        }
        self.ids = Some(ids);
        Ok(self)
    }

    /// Same labels and ids, new features (e.g. whitened coordinates).
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        if features.nrows() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: features.nrows(),
            });
        }
        let mut out = Self::new(
            features,
            self.noisy_labels.clone(),
            self.clean_labels.clone(),
            Some(self.k),
        )?;
        out.ids = self.ids.clone();
        Ok(out)
    }

    /// Same features, noisy labels replaced.
    pub fn with_noisy_labels(&self, noisy_labels: Vec<usize>) -> Result<Self> {
        let mut out = Self::new(
            self.features.clone(),
            noisy_labels,
            self.clean_labels.clone(),
            Some(self.k),
        )?;
        out.ids = self.ids.clone();
        Ok(out)
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn row(&self, n: usize) -> ArrayView1<'_, f64> {
        self.features.row(n)
    }

    pub fn noisy_labels(&self) -> &[usize] {
        &self.noisy_labels
    }

    pub fn clean_labels(&self) -> Option<&[usize]> {
        self.clean_labels.as_deref()
    }

    pub fn ids(&self) -> Option<&[String]> {
        self.ids.as_deref()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }
}

/// Column names used when reading and writing dataset CSV files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    /// Feature columns are `{prefix}0 .. {prefix}{d-1}`.
    pub feature_prefix: String,
    pub noisy_label: String,
    pub clean_label: String,
    pub id: String,
    /// Class count; inferred from the labels when `None`.
    pub k: Option<usize>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            feature_prefix: "f".into(),
            noisy_label: "noisy_label".into(),
            clean_label: "clean_label".into(),
            id: "id".into(),
            k: None,
        }
    }
}

/// Reads a dataset CSV. Row order is preserved.
pub fn load_dataset(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();

    let mut feature_cols: Vec<(usize, usize)> = headers
        .iter()
        .enumerate()
        .filter_map(|(col, name)| {
            let idx = name.strip_prefix(schema.feature_prefix.as_str())?;
            idx.parse::<usize>().ok().map(|i| (i, col))
        })
        .collect();
    feature_cols.sort_unstable();
    if feature_cols.is_empty() {
        return Err(Error::MissingColumn(format!("{}0", schema.feature_prefix)));
    }
    for (expected, &(idx, _)) in feature_cols.iter().enumerate() {
        if idx != expected {
            return Err(Error::MissingColumn(format!(
                "{}{expected}",
                schema.feature_prefix
            )));
        }
    }
    let find = |name: &str| headers.iter().position(|h| h == name);
    let noisy_col = find(&schema.noisy_label)
        .ok_or_else(|| Error::MissingColumn(schema.noisy_label.clone()))?;
    let clean_col = find(&schema.clean_label);
    let id_col = find(&schema.id);

    let d = feature_cols.len();
    let mut values = Vec::new();
    let mut noisy = Vec::new();
    let mut clean = Vec::new();
    let mut ids = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        for &(idx, col) in &feature_cols {
            let cell = record.get(col).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: format!("{}{idx}", schema.feature_prefix),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteFeature { row, col: idx });
            }
            values.push(v);
        }
        let parse_label = |col: usize, name: &str| -> Result<usize> {
            let cell = record.get(col).unwrap_or("");
            cell.parse().map_err(|_| Error::Parse {
                row,
                column: name.to_string(),
                value: cell.to_string(),
            })
        };
        noisy.push(parse_label(noisy_col, &schema.noisy_label)?);
        if let Some(col) = clean_col {
            clean.push(parse_label(col, &schema.clean_label)?);
        }
        if let Some(col) = id_col {
            ids.push(record.get(col).unwrap_or("").to_string());
        }
    }

    let n = noisy.len();
    if n < MIN_ROWS {
        return Err(Error::TooFewRows {
            needed: MIN_ROWS,
            got: n,
        });
    }
    let features = Array2::from_shape_vec((n, d), values)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let dataset = Dataset::new(features, noisy, clean_col.map(|_| clean), schema.k)?;
    match id_col {
        Some(_) => dataset.with_ids(ids),
        None => Ok(dataset),
    }
}

/// Writes a dataset CSV using the default column names. Floats are written in
/// shortest round-trip form, so [`load_dataset`] recovers them exactly.
pub fn save_dataset(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let schema = CsvSchema::default();

    let mut header = Vec::new();
    if data.ids.is_some() {
        header.push(schema.id.clone());
    }
    header.extend((0..data.dim()).map(|j| format!("{}{j}", schema.feature_prefix)));
    header.push(schema.noisy_label.clone());
    if data.clean_labels.is_some() {
        header.push(schema.clean_label.clone());
    }
    writer.write_record(&header)?;

    for n in 0..data.len() {
        let mut record = Vec::with_capacity(header.len());
        if let Some(ids) = &data.ids {
            record.push(ids[n].clone());
        }
        record.extend(data.features.row(n).iter().map(|v| v.to_string()));
        record.push(data.noisy_labels[n].to_string());
        if let Some(clean) = &data.clean_labels {
            record.push(clean[n].to_string());
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Row-stochastic `K×K` matrix with `t[[i, j]] = P(noisy = j | clean = i)`,
/// optionally with the clean-label prior.
///
/// JSON form: `{"k": K, "t": [[...], ...], "p": [...]}` with `p` omitted when
/// absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTransition", into = "RawTransition")]
pub struct TransitionMatrix {
    t: Array2<f64>,
    p: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawTransition {
    k: usize,
    t: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<Vec<f64>>,
}

impl TryFrom<RawTransition> for TransitionMatrix {
    type Error = Error;

    fn try_from(raw: RawTransition) -> Result<Self> {
        let tm = TransitionMatrix::from_rows(&raw.t)?;
        if tm.k() != raw.k {
            return Err(Error::DimensionMismatch {
                expected: raw.k,
                got: tm.k(),
            });
        }
        match raw.p {
            Some(p) => tm.with_prior(p),
            None => Ok(tm),
        }
    }
}

impl From<TransitionMatrix> for RawTransition {
    fn from(tm: TransitionMatrix) -> Self {
        RawTransition {
            k: tm.k(),
            t: tm.t.rows().into_iter().map(|r| r.to_vec()).collect(),
            p: tm.p,
        }
    }
}

/// Checks that `t` is square, non-negative and row-stochastic (each row sums
/// to 1 within [`ROW_SUM_TOLERANCE`]). The matrix is returned unchanged.
pub fn validate_transition(t: Array2<f64>) -> Result<TransitionMatrix> {
    let (rows, cols) = t.dim();
    if rows != cols {
        return Err(Error::DimensionMismatch {
            expected: rows,
            got: cols,
        });
    }
    if rows < 2 {
        return Err(Error::InvalidArgument(format!(
            "class count must be >= 2, got {rows}"
        )));
    }
    for ((row, col), &value) in t.indexed_iter() {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::NegativeEntry { row, col, value });
        }
    }
    for (row, r) in t.rows().into_iter().enumerate() {
        let sum = r.sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::RowSum { row, sum });
        }
    }
    Ok(TransitionMatrix { t, p: None })
}

impl TransitionMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        let mut flat = Vec::with_capacity(k * k);
        for r in rows {
            if r.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: r.len(),
                });
            }
            flat.extend_from_slice(r);
        }
        let t = Array2::from_shape_vec((k, k), flat)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        validate_transition(t)
    }

    pub fn identity(k: usize) -> Self {
        Self {
            t: Array2::eye(k),
            p: None,
        }
    }

    /// Attaches a clean prior; entries must lie in `[0, 1]` and sum to 1.
    pub fn with_prior(mut self, p: Vec<f64>) -> Result<Self> {
        if p.len() != self.k() {
            return Err(Error::DimensionMismatch {
                expected: self.k(),
                got: p.len(),
            });
        }
        if p.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidPrior(format!(
                "entries outside [0, 1]: {p:?}"
            )));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::InvalidPrior(format!("sums to {sum}")));
        }
        self.p = Some(p);
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.t.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.t
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.t[[i, j]]
    }

    pub fn prior(&self) -> Option<&[f64]> {
        self.p.as_deref()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.t.rows().into_iter().map(|r| r.to_vec()).collect()
    }

    pub fn trace(&self) -> f64 {
        self.t.diag().sum()
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Binary noise rates: `e1 = P(noisy=2 | clean=1)`, `e2 = P(noisy=1 | clean=2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseRatePair {
    pub e1: f64,
    pub e2: f64,
}

impl NoiseRatePair {
    /// Rates must be finite and non-negative. `e1 + e2 < 1` is checked
    /// separately by [`NoiseRatePair::require_informative`] where it matters.
    pub fn new(e1: f64, e2: f64) -> Result<Self> {
        if !(e1.is_finite() && e2.is_finite()) || e1 < 0.0 || e2 < 0.0 {
            return Err(Error::InvalidNoiseRates {
                e1,
                e2,
                reason: "rates must be finite and non-negative",
            });
        }
        Ok(Self { e1, e2 })
    }

    pub fn require_informative(&self) -> Result<()> {
        if self.e1 + self.e2 >= 1.0 {
            return Err(Error::InvalidNoiseRates {
                e1: self.e1,
                e2: self.e2,
                reason: "e1 + e2 must be < 1",
            });
        }
        Ok(())
    }

    /// `(max, min / max)`, with ratio 0 when both rates vanish.
    pub fn larger_and_ratio(&self) -> (f64, f64) {
        let hi = self.e1.max(self.e2);
        let lo = self.e1.min(self.e2);
        if hi == 0.0 {
            (0.0, 0.0)
        } else {
            (hi, lo / hi)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    PlainHoc,
    XKl,
    XTv,
    AKl,
    ATv,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::PlainHoc,
        Variant::XKl,
        Variant::XTv,
        Variant::AKl,
        Variant::ATv,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::PlainHoc => "plain-hoc",
            Variant::XKl => "x-kl",
            Variant::XTv => "x-tv",
            Variant::AKl => "a-kl",
            Variant::ATv => "a-tv",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant `{s}`")))
    }
}

/// Order-preserving map from mutual information to weights.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Minmax,
    LogMinmax,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Minmax => "minmax",
            Activation::LogMinmax => "log-minmax",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minmax" => Ok(Activation::Minmax),
            "log-minmax" => Ok(Activation::LogMinmax),
            _ => Err(Error::InvalidArgument(format!("unknown activation `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub step_size: f64,
    pub max_iters: usize,
    /// Random initialisations in addition to the near-identity start.
    pub restarts: usize,
    pub tolerance: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            step_size: 0.1,
            max_iters: 3000,
            restarts: 10,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub variant: Variant,
    pub bins: usize,
    pub activation: Activation,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub eigen_floor: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            variant: Variant::ATv,
            bins: 15,
            activation: Activation::Minmax,
            optimizer: OptimizerConfig::default(),
            seed: 0,
            eigen_floor: 1e-10,
        }
    }
}

impl EstimatorConfig {
    pub fn with_variant(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::InvalidArgument(format!(
                "bins must be >= 2, got {}",
                self.bins
            )));
        }
        if self.optimizer.max_iters < 1 {
            return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
        }
        if !(self.optimizer.step_size > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "step_size must be > 0, got {}",
                self.optimizer.step_size
            )));
        }
        if !(self.eigen_floor >= 0.0 && self.eigen_floor < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "eigen_floor must lie in [0, 1), got {}",
                self.eigen_floor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Everything an estimation run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// Estimated `T`; its prior holds the estimated clean-label distribution.
    pub estimated_t: TransitionMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mi: Option<MIEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightVector>,
    /// Estimation error against a supplied true `T`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<f64>,
    pub consensus: ConsensusStatistics,
    /// Feature dimension seen by the neighbour search (whitened rank for
    /// `a-*` variants).
    pub search_dim: usize,
    pub final_loss: f64,
    pub iterations: usize,
    pub converged: bool,
    pub config: EstimatorConfig,
    pub timings: Vec<StageTiming>,
}

impl Report {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_small_csv() {
        let f = write_tmp(
            "f0,f1,f2,noisy_label\n\
             0.1,0.2,0.3,0\n\
             1,2,3,1\n\
             -1,0,0.5,1\n\
             2.5,1e-3,4,0\n",
        );
        let data = load_dataset(f.path(), &CsvSchema::default()).unwrap();
        assert_eq!(data.len(), 4);
        assert_eq!(data.dim(), 3);
        assert_eq!(data.k(), 2);
        assert_eq!(data.noisy_labels(), &[0, 1, 1, 0]);
        assert!(data.clean_labels().is_none());
        assert_eq!(data.features()[[3, 1]], 1e-3);
    }

    #[test]
    fn feature_columns_are_ordered_by_index() {
        let f = write_tmp("noisy_label,f1,f0\n0,1,10\n1,2,20\n0,3,30\n");
        let data = load_dataset(f.path(), &CsvSchema::default()).unwrap();
        assert_eq!(data.row(0).to_vec(), vec![10.0, 1.0]);
    }

    #[test]
    fn rejects_nan_feature() {
        let f = write_tmp("f0,noisy_label\n1,0\nNaN,1\n2,0\n");
        let err = load_dataset(f.path(), &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteFeature { row: 1, col: 0 }));
        assert!(err.to_string().contains("non-finite feature"));
    }

    #[test]
    fn rejects_missing_columns_and_short_files() {
        let f = write_tmp("f0,label\n1,0\n2,1\n3,0\n");
        assert!(matches!(
            load_dataset(f.path(), &CsvSchema::default()),
            Err(Error::MissingColumn(c)) if c == "noisy_label"
        ));
        let f = write_tmp("f0,f2,noisy_label\n1,1,0\n2,2,1\n3,3,0\n");
        assert!(matches!(
            load_dataset(f.path(), &CsvSchema::default()),
            Err(Error::MissingColumn(c)) if c == "f1"
        ));
        let f = write_tmp("f0,noisy_label\n1,0\n2,1\n");
        assert!(matches!(
            load_dataset(f.path(), &CsvSchema::default()),
            Err(Error::TooFewRows { got: 2, .. })
        ));
    }

    #[test]
    fn rejects_label_out_of_range_for_explicit_k() {
        let f = write_tmp("f0,noisy_label\n1,0\n2,3\n3,1\n");
        let schema = CsvSchema {
            k: Some(3),
            ..CsvSchema::default()
        };
        assert!(matches!(
            load_dataset(f.path(), &schema),
            Err(Error::LabelOutOfRange {
                row: 1,
                label: 3,
                k: 3
            })
        ));
    }

    #[test]
    fn clean_labels_survive_write_then_read() {
        let features = array![[0.1, -2.0], [1.0 / 3.0, 1e-300], [5.5, 7.25], [1e10, -0.0]];
        let data = Dataset::new(features, vec![0, 2, 1, 1], Some(vec![0, 1, 1, 2]), None)
            .unwrap()
            .with_ids(vec!["a".into(), "b".into(), "c".into(), "d".into()])
            .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_dataset(f.path(), &data).unwrap();
        let back = load_dataset(f.path(), &CsvSchema::default()).unwrap();
        assert_eq!(back, data);
        assert_eq!(back.clean_labels(), Some(&[0, 1, 1, 2][..]));
    }

    #[test]
    fn validate_transition_cases() {
        assert!(validate_transition(Array2::eye(2)).is_ok());
        let ok = validate_transition(array![[0.7, 0.3], [0.3, 0.7]]).unwrap();
        assert_eq!(ok.matrix(), &array![[0.7, 0.3], [0.3, 0.7]]);
        let err = validate_transition(array![[0.7, 0.2], [0.3, 0.7]]).unwrap_err();
        assert!(err.to_string().contains("row sum"));
        assert!(matches!(
            validate_transition(array![[1.1, -0.1], [0.0, 1.0]]),
            Err(Error::NegativeEntry { .. })
        ));
        assert!(matches!(
            validate_transition(array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn transition_json_shape() {
        let tm = TransitionMatrix::from_rows(&[vec![0.6, 0.4], vec![0.2, 0.8]])
            .unwrap()
            .with_prior(vec![0.25, 0.75])
            .unwrap();
        let json: serde_json::Value = serde_json::to_value(&tm).unwrap();
        assert_eq!(
            json,
            serde_json::json!({"k": 2, "t": [[0.6, 0.4], [0.2, 0.8]], "p": [0.25, 0.75]})
        );
        let back: TransitionMatrix = serde_json::from_value(json).unwrap();
        assert_eq!(back, tm);

        let no_prior = r#"{"k": 2, "t": [[1, 0], [0, 1]]}"#;
        let tm: TransitionMatrix = serde_json::from_str(no_prior).unwrap();
        assert!(tm.prior().is_none());
        assert!(!serde_json::to_string(&tm).unwrap().contains("\"p\""));

        let bad = r#"{"k": 2, "t": [[0.7, 0.2], [0.3, 0.7]]}"#;
        assert!(serde_json::from_str::<TransitionMatrix>(bad).is_err());
        let wrong_k = r#"{"k": 3, "t": [[1, 0], [0, 1]]}"#;
        assert!(serde_json::from_str::<TransitionMatrix>(wrong_k).is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{v}\""));
        }
        assert!("ours".parse::<Variant>().is_err());
        assert_eq!(
            "log-minmax".parse::<Activation>().unwrap(),
            Activation::LogMinmax
        );
    }

    #[test]
    fn config_validation() {
        assert!(EstimatorConfig::default().validate().is_ok());
        let c = EstimatorConfig {
            bins: 1,
            ..EstimatorConfig::default()
        };
        assert!(c.validate().is_err());
        let mut c = EstimatorConfig::default();
        c.optimizer.step_size = 0.0;
        assert!(c.validate().is_err());
        let mut c = EstimatorConfig::default();
        c.optimizer.max_iters = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn noise_rate_pair_checks() {
        assert!(NoiseRatePair::new(-0.1, 0.2).is_err());
        let r = NoiseRatePair::new(0.6, 0.4).unwrap();
        assert!(r.require_informative().is_err());
        let (hi, ratio) = NoiseRatePair::new(0.1, 0.4).unwrap().larger_and_ratio();
        assert_eq!(hi, 0.4);
        assert!((ratio - 0.25).abs() < 1e-15);
    }
}
