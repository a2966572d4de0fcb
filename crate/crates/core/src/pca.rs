//! Principal component analysis by singular value decomposition of the
//! centered data matrix.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{default_names, FeatureMatrix};
use crate::linalg::{dot, one_sided_jacobi};
use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum PcaError {
    #[error("PCA needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("variance ratio {0} outside (0, 1]")]
    InvalidRatio(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("requested {requested} components but the model holds {available}")]
    TooManyComponents { requested: usize, available: usize },
}

/// Fitted PCA basis. `components` is row-major, one unit-norm row per
/// component, ordered by decreasing explained variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PcaModel<T: Real> {
    pub mean: Vec<T>,
    pub n_components: usize,
    pub n_features: usize,
    pub components: Vec<T>,
    pub explained_variance: Vec<T>,
    pub explained_ratio: Vec<T>,
}

impl<T: Real> PcaModel<T> {
    pub fn component(&self, c: usize) -> &[T] {
        &self.components[c * self.n_features..(c + 1) * self.n_features]
    }

    pub fn cumulative_ratio(&self) -> Vec<T> {
        self.explained_ratio
            .iter()
            .scan(T::zero(), |acc, &r| {
                *acc += r;
                Some(*acc)
            })
            .collect()
    }
}

/// Fits all `min(n_samples - 1, n_features)` components. Variances use the
/// `n - 1` divisor, and each component is oriented so that its
/// largest-magnitude coordinate is positive.
pub fn fit_pca<T: Real>(m: &FeatureMatrix<T>) -> Result<PcaModel<T>, PcaError> {
    let n = m.n_samples();
    let d = m.n_features();
    if n < 2 {
        return Err(PcaError::TooFewSamples(n));
    }
    let nf = T::from_usize_lossy(n);
    let mut mean = vec![T::zero(); d];
    for row in m.rows() {
        for (mu, &x) in mean.iter_mut().zip(row) {
            *mu += x;
        }
    }
    for mu in &mut mean {
        *mu /= nf;
    }
    let keep = (n - 1).min(d);

    // Jacobi cost is quadratic in the column count, so rotate whichever
    // orientation of the centered matrix has fewer columns.
    let (singular, mut basis): (Vec<T>, Vec<Vec<T>>) = if d <= n {
        let mut cols: Vec<Vec<T>> = (0..d)
            .map(|j| m.rows().map(|r| r[j] - mean[j]).collect())
            .collect();
        let mut v: Vec<Vec<T>> = (0..d)
            .map(|j| (0..d).map(|i| if i == j { T::one() } else { T::zero() }).collect())
            .collect();
        one_sided_jacobi(&mut cols, Some(&mut v));
        (cols.iter().map(|c| dot(c, c).sqrt()).collect(), v)
    } else {
        let mut cols: Vec<Vec<T>> = m
            .rows()
            .map(|r| r.iter().zip(&mean).map(|(&x, &mu)| x - mu).collect())
            .collect();
        one_sided_jacobi(&mut cols, None);
        let sv: Vec<T> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
        for (c, &s) in cols.iter_mut().zip(&sv) {
            if s > T::zero() {
                c.iter_mut().for_each(|x| *x /= s);
            }
        }
        (sv, cols)
    };

    let mut order: Vec<usize> = (0..singular.len()).collect();
    order.sort_by(|&a, &b| singular[b].partial_cmp(&singular[a]).unwrap().then(a.cmp(&b)));
    order.truncate(keep);

    let top = singular[order[0]];
    let negligible = top * T::epsilon() * T::from_usize_lossy(n.max(d));
    let mut components: Vec<Vec<T>> = Vec::with_capacity(keep);
    let mut variance = Vec::with_capacity(keep);
    for &idx in &order {
        let s = singular[idx];
        let mut dir = std::mem::take(&mut basis[idx]);
        if d > n {
            // Left-hand vectors of near-null singular values carry no
            // direction information; re-orthogonalize, and rebuild from the
            // standard basis when nothing survives.
            if s <= negligible || !gram_schmidt(&mut dir, &components) {
                dir = complete_basis(&components, d);
            }
        }
        orient(&mut dir);
        components.push(dir);
        variance.push(s * s / (nf - T::one()));
    }

    let total: T = (0..d)
        .map(|j| {
            m.rows().map(|r| (r[j] - mean[j]).powi(2)).sum::<T>() / (nf - T::one())
        })
        .sum();
    let explained_ratio = variance
        .iter()
        .map(|&v| if total > T::zero() { v / total } else { T::zero() })
        .collect();
    Ok(PcaModel {
        mean,
        n_components: keep,
        n_features: d,
        components: components.concat(),
        explained_variance: variance,
        explained_ratio,
    })
}

fn gram_schmidt<T: Real>(v: &mut [T], basis: &[Vec<T>]) -> bool {
    for b in basis {
        let proj = dot(v, b);
        v.iter_mut().zip(b).for_each(|(x, &y)| *x -= proj * y);
    }
    let norm = dot(v, v).sqrt();
    if norm <= T::lit(1e-6) {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

fn complete_basis<T: Real>(basis: &[Vec<T>], d: usize) -> Vec<T> {
    (0..d)
        .find_map(|e| {
            let mut v = vec![T::zero(); d];
            v[e] = T::one();
            gram_schmidt(&mut v, basis).then_some(v)
        })
        .expect("fewer than d basis vectors always leave room")
}

fn orient<T: Real>(v: &mut [T]) {
    let mut pivot = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[pivot].abs() {
            pivot = i;
        }
    }
    if v[pivot] < T::zero() {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Smallest component count whose cumulative explained ratio reaches
/// `variance_ratio`.
pub fn select_components<T: Real>(model: &PcaModel<T>, variance_ratio: T) -> Result<usize, PcaError> {
    if !(variance_ratio > T::zero() && variance_ratio <= T::one()) {
        return Err(PcaError::InvalidRatio(variance_ratio.as_f64()));
    }
    // Absorbs summation rounding, e.g. 0.6 + 0.3 < 0.9 in binary floating point.
    let slack = T::epsilon() * T::lit(64.0) * T::from_usize_lossy(model.n_components.max(1));
    let k = model
        .cumulative_ratio()
        .iter()
        .position(|&c| c >= variance_ratio - slack)
        .map_or(model.n_components, |i| i + 1);
    Ok(k)
}

/// Projects centered rows onto the first `k` components.
pub fn transform<T: Real>(
    model: &PcaModel<T>,
    m: &FeatureMatrix<T>,
    k: usize,
) -> Result<FeatureMatrix<T>, PcaError> {
    if m.n_features() != model.n_features {
        return Err(PcaError::DimensionMismatch {
            expected: model.n_features,
            found: m.n_features(),
        });
    }
    if k > model.n_components || k == 0 {
        return Err(PcaError::TooManyComponents {
            requested: k,
            available: model.n_components,
        });
    }
    let mut out = Vec::with_capacity(m.n_samples() * k);
    let mut centered = vec![T::zero(); model.n_features];
    for row in m.rows() {
        for ((c, &x), &mu) in centered.iter_mut().zip(row).zip(&model.mean) {
            *c = x - mu;
        }
        out.extend((0..k).map(|c| dot(&centered, model.component(c))));
    }
    Ok(FeatureMatrix::from_parts_unchecked(
        m.n_samples(),
        k,
        out,
        default_names("pc", k),
    ))
}

/// Maps component scores back to feature space: `z · components + mean`.
pub fn inverse_transform<T: Real>(
    model: &PcaModel<T>,
    z: &FeatureMatrix<T>,
) -> Result<FeatureMatrix<T>, PcaError> {
    let k = z.n_features();
    if k > model.n_components {
        return Err(PcaError::DimensionMismatch {
            expected: model.n_components,
            found: k,
        });
    }
    let d = model.n_features;
    let mut out = Vec::with_capacity(z.n_samples() * d);
    for row in z.rows() {
        let mut x = model.mean.clone();
        for (c, &score) in row.iter().enumerate() {
            for (xi, &w) in x.iter_mut().zip(model.component(c)) {
                *xi += score * w;
            }
        }
        out.extend(x);
    }
    Ok(FeatureMatrix::from_parts_unchecked(
        z.n_samples(),
        d,
        out,
        default_names("f", d),
    ))
}
