//! Feature table ingestion, Min-Max scaling, label encoding and fold plans.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("label column not found: {0}")]
    LabelColumnNotFound(String),
    #[error("row {row}: non-numeric or non-finite value {value:?} in column {column:?}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: expected {expected} fields, found {found}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("more than two distinct labels (saw {0:?})")]
    TooManyClasses(Vec<String>),
    #[error("label {0:?} is not listed in the class map")]
    UnmappedLabel(String),
    #[error("class map must name exactly two distinct classes")]
    InvalidClassMap,
    #[error("table has no data rows")]
    Empty,
    #[error("table has no feature columns")]
    NoFeatures,
    #[error("feature count mismatch: expected {expected}, found {found}")]
    FeatureCountMismatch { expected: usize, found: usize },
    #[error("length mismatch: {0} features rows vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("fold count k={k} must be at least 2")]
    TooFewFolds { k: usize },
    #[error("k={k} larger than class count {count} for class {class}")]
    KExceedsClassCount { k: usize, class: u8, count: usize },
    #[error("k={k} larger than sample count {n}")]
    KExceedsSamples { k: usize, n: usize },
}

/// Row-major matrix of finite feature values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FeatureMatrix<T: Real> {
    n_samples: usize,
    n_features: usize,
    values: Vec<T>,
    feature_names: Vec<String>,
}

impl<T: Real> FeatureMatrix<T> {
    pub fn new(
        n_samples: usize,
        n_features: usize,
        values: Vec<T>,
        feature_names: Vec<String>,
    ) -> Result<Self, DatasetError> {
        if n_samples == 0 {
            return Err(DatasetError::Empty);
        }
        if n_features == 0 {
            return Err(DatasetError::NoFeatures);
        }
        if values.len() != n_samples * n_features {
            return Err(DatasetError::InvalidMatrix(format!(
                "{} values for a {n_samples}x{n_features} matrix",
                values.len()
            )));
        }
        if feature_names.len() != n_features {
            return Err(DatasetError::InvalidMatrix(format!(
                "{} names for {n_features} features",
                feature_names.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(DatasetError::InvalidMatrix(format!(
                "non-finite entry at row {}, column {}",
                pos / n_features,
                pos % n_features
            )));
        }
        Ok(Self {
            n_samples,
            n_features,
            values,
            feature_names,
        })
    }

    /// Builds a matrix from rows, naming features `f0, f1, ...`.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, DatasetError> {
        let n_features = rows.first().map_or(0, Vec::len);
        if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n_features) {
            return Err(DatasetError::Ragged {
                row,
                expected: n_features,
                found: r.len(),
            });
        }
        let names = default_names("f", n_features);
        Self::new(rows.len(), n_features, rows.concat(), names)
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.values.chunks_exact(self.n_features)
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.n_features + j]
    }

    /// Copies the given rows (in the given order) into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self, DatasetError> {
        let mut values = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self::new(
            indices.len(),
            self.n_features,
            values,
            self.feature_names.clone(),
        )
    }

    pub(crate) fn from_parts_unchecked(
        n_samples: usize,
        n_features: usize,
        values: Vec<T>,
        feature_names: Vec<String>,
    ) -> Self {
        debug_assert_eq!(values.len(), n_samples * n_features);
        Self {
            n_samples,
            n_features,
            values,
            feature_names,
        }
    }
}

pub(crate) fn default_names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|j| format!("{prefix}{j}")).collect()
}

/// Binary labels with the mapping back to the original class strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    labels: Vec<u8>,
    class_names: Vec<String>,
}

impl LabelVector {
    /// `class_names[c]` is the original name of encoded class `c`.
    pub fn new(labels: Vec<u8>, class_names: Vec<String>) -> Result<Self, DatasetError> {
        if class_names.is_empty() || class_names.len() > 2 {
            return Err(DatasetError::InvalidClassMap);
        }
        if class_names.len() == 2 && class_names[0] == class_names[1] {
            return Err(DatasetError::InvalidClassMap);
        }
        if labels.iter().any(|&l| l as usize >= class_names.len()) {
            return Err(DatasetError::InvalidClassMap);
        }
        Ok(Self {
            labels,
            class_names,
        })
    }

    /// Labels named `"0"` and `"1"`.
    pub fn from_binary(labels: Vec<u8>) -> Result<Self, DatasetError> {
        Self::new(labels, vec!["0".into(), "1".into()])
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn encode(&self, name: &str) -> Option<u8> {
        self.class_names.iter().position(|c| c == name).map(|i| i as u8)
    }

    pub fn decode(&self, label: u8) -> Option<&str> {
        self.class_names.get(label as usize).map(String::as_str)
    }

    pub fn class_count(&self, class: u8) -> usize {
        self.labels.iter().filter(|&&l| l == class).count()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }

    /// Same encoding, different label values.
    pub fn with_labels(&self, labels: Vec<u8>) -> Self {
        Self {
            labels,
            class_names: self.class_names.clone(),
        }
    }
}

/// Reads a feature table. Labels are encoded by first appearance unless
/// `class_map` lists the class names in encoding order.
pub fn load_feature_table<T: Real>(
    path: impl AsRef<Path>,
    label_column: &str,
    class_map: Option<&[String]>,
) -> Result<(FeatureMatrix<T>, LabelVector), DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_feature_table(file, label_column, class_map)
}

pub fn read_feature_table<T: Real, R: std::io::Read>(
    reader: R,
    label_column: &str,
    class_map: Option<&[String]>,
) -> Result<(FeatureMatrix<T>, LabelVector), DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| DatasetError::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DatasetError::LabelColumnNotFound(label_column.to_string()))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    if feature_names.is_empty() {
        return Err(DatasetError::NoFeatures);
    }

    let mut class_names: Vec<String> = match class_map {
        Some(map) => {
            if map.len() != 2 || map[0] == map[1] {
                return Err(DatasetError::InvalidClassMap);
            }
            map.to_vec()
        }
        None => Vec::new(),
    };
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| DatasetError::Csv(e.to_string()))?;
        if record.len() != headers.len() {
            return Err(DatasetError::Ragged {
                row,
                expected: headers.len(),
                found: record.len(),
            });
        }
        for (j, field) in record.iter().enumerate() {
            let field = field.trim();
            if j == label_idx {
                let code = match class_names.iter().position(|c| c == field) {
                    Some(c) => c,
                    None if class_map.is_some() => {
                        return Err(DatasetError::UnmappedLabel(field.to_string()))
                    }
                    None => {
                        class_names.push(field.to_string());
                        if class_names.len() > 2 {
                            return Err(DatasetError::TooManyClasses(class_names));
                        }
                        class_names.len() - 1
                    }
                };
                labels.push(code as u8);
            } else {
                let v = field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .and_then(T::from_f64)
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| DatasetError::NonNumeric {
                        row,
                        column: headers[j].clone(),
                        value: field.to_string(),
                    })?;
                values.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(DatasetError::Empty);
    }
    let matrix = FeatureMatrix::new(labels.len(), feature_names.len(), values, feature_names)?;
    Ok((matrix, LabelVector::new(labels, class_names)?))
}

/// Per-feature minimum and maximum observed on a fitting matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct NormalizerParams<T: Real> {
    pub per_feature_min: Vec<T>,
    pub per_feature_max: Vec<T>,
}

impl<T: Real> NormalizerParams<T> {
    pub fn n_features(&self) -> usize {
        self.per_feature_min.len()
    }
}

pub fn fit_minmax<T: Real>(m: &FeatureMatrix<T>) -> NormalizerParams<T> {
    let mut lo = m.row(0).to_vec();
    let mut hi = lo.clone();
    for row in m.rows().skip(1) {
        for ((l, h), &x) in lo.iter_mut().zip(hi.iter_mut()).zip(row) {
            *l = l.min(x);
            *h = h.max(x);
        }
    }
    NormalizerParams {
        per_feature_min: lo,
        per_feature_max: hi,
    }
}

/// `(x - min) / (max - min)` per feature. Constant features map to zero and
/// values outside the fitted range are left unclipped.
pub fn apply_minmax<T: Real>(
    m: &FeatureMatrix<T>,
    p: &NormalizerParams<T>,
) -> Result<FeatureMatrix<T>, DatasetError> {
    if p.n_features() != m.n_features() {
        return Err(DatasetError::FeatureCountMismatch {
            expected: p.n_features(),
            found: m.n_features(),
        });
    }
    let values = m
        .rows()
        .flat_map(|row| {
            row.iter()
                .zip(&p.per_feature_min)
                .zip(&p.per_feature_max)
                .map(|((&x, &lo), &hi)| {
                    let range = hi - lo;
                    if range > T::zero() {
                        (x - lo) / range
                    } else {
                        T::zero()
                    }
                })
        })
        .collect();
    FeatureMatrix::new(
        m.n_samples(),
        m.n_features(),
        values,
        m.feature_names().to_vec(),
    )
}

/// Assignment of every sample to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|&(_, &f)| f == fold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|&(_, &f)| f != fold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Stratified plan: each class is shuffled with the seed and dealt
/// round-robin, continuing the dealer position across classes so that both
/// fold sizes and per-class fold counts differ by at most one.
pub fn make_stratified_folds(
    labels: &LabelVector,
    k: usize,
    seed: u64,
) -> Result<FoldPlan, DatasetError> {
    if k < 2 {
        return Err(DatasetError::TooFewFolds { k });
    }
    for class in 0..2u8 {
        let count = labels.class_count(class);
        if count < k {
            return Err(DatasetError::KExceedsClassCount { k, class, count });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![0; labels.len()];
    let mut dealer = 0;
    for class in 0..2u8 {
        let mut members: Vec<usize> = labels
            .labels()
            .iter()
            .enumerate()
            .filter(|&(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        members.shuffle(&mut rng);
        for i in members {
            assignments[i] = dealer % k;
            dealer += 1;
        }
    }
    Ok(FoldPlan {
        k,
        seed,
        assignments,
    })
}

/// Plain shuffled plan ignoring labels.
pub fn make_random_folds(n_samples: usize, k: usize, seed: u64) -> Result<FoldPlan, DatasetError> {
    if k < 2 {
        return Err(DatasetError::TooFewFolds { k });
    }
    if n_samples < k {
        return Err(DatasetError::KExceedsSamples { k, n: n_samples });
    }
    let mut order: Vec<usize> = (0..n_samples).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignments = vec![0; n_samples];
    for (pos, i) in order.into_iter().enumerate() {
        assignments[i] = pos % k;
    }
    Ok(FoldPlan {
        k,
        seed,
        assignments,
    })
}

/// Per-class counts in each fold, `counts[fold][class]`.
pub fn class_counts_per_fold(plan: &FoldPlan, labels: &LabelVector) -> Vec<[usize; 2]> {
    let mut counts = vec![[0usize; 2]; plan.k];
    for (&f, &l) in plan.assignments.iter().zip(labels.labels()) {
        counts[f][l as usize] += 1;
    }
    counts
}
