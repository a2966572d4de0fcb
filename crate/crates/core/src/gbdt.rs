//! Second-order gradient-boosted decision trees on the logistic loss.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{FeatureMatrix, LabelVector};
use crate::ngboost::fit_initial;
use crate::scalar::{sigmoid, softplus, Real};
use crate::tree::{cmp_real, split_threshold, TreeNode};

pub const HESSIAN_FLOOR: f64 = 1e-16;

// Nodes with fewer sample-feature pairs than this are searched serially.
const PARALLEL_WORK: usize = 1 << 16;

#[derive(Debug, Error)]
pub enum GbdtError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("nonpositive denominator H + lambda = {0}")]
    NonPositiveDenominator(f64),
    #[error("length mismatch: {0} feature rows vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("feature count mismatch: model expects {expected}, input has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training set is empty")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub max_depth: usize,
    pub max_leaves: usize,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            learning_rate: 0.3,
            lambda: 1.0,
            gamma: 0.0,
            max_depth: 6,
            max_leaves: 64,
        }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<(), GbdtError> {
        let bad = |m: &str| Err(GbdtError::InvalidParams(m.into()));
        if self.n_rounds == 0 {
            return bad("n_rounds must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be nonnegative");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be nonnegative");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be at least 1");
        }
        if self.max_leaves == 0 {
            return bad("max_leaves must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GbdtModel<T: Real> {
    pub base_score: T,
    pub learning_rate: T,
    pub trees: Vec<TreeNode<T>>,
    pub params: GbdtParams,
    pub n_features: usize,
    /// Mean training logloss before the first round and after each round.
    pub train_loss: Vec<f64>,
}

/// `(g, h) = (p - y, p(1 - p))` with `h` floored.
pub fn grad_hess_logloss<T: Real>(pred_logit: T, y: u8) -> (T, T) {
    let p = sigmoid(pred_logit);
    let g = p - T::from_u8(y).unwrap();
    let h = (p * (T::one() - p)).max(T::lit(HESSIAN_FLOOR));
    (g, h)
}

pub fn logloss<T: Real>(pred_logit: T, y: u8) -> T {
    if y == 1 {
        softplus(-pred_logit)
    } else {
        softplus(pred_logit)
    }
}

/// `w* = -G / (H + λ)`.
pub fn leaf_weight<T: Real>(g: T, h: T, lambda: T) -> Result<T, GbdtError> {
    let denom = h + lambda;
    if !(denom > T::zero()) {
        return Err(GbdtError::NonPositiveDenominator(denom.as_f64()));
    }
    Ok(-g / denom)
}

/// `-½ Σ_j G_j² / (H_j + λ) + γT`.
pub fn structure_score<T: Real>(leaves: &[(T, T)], lambda: T, gamma: T) -> Result<T, GbdtError> {
    let half = T::lit(0.5);
    let mut total = T::zero();
    for &(g, h) in leaves {
        let denom = h + lambda;
        if !(denom > T::zero()) {
            return Err(GbdtError::NonPositiveDenominator(denom.as_f64()));
        }
        total += g * g / denom;
    }
    Ok(-half * total + gamma * T::from_usize_lossy(leaves.len()))
}

/// Gain of replacing one leaf with two: `score(parent) - score(children)`.
pub fn split_gain<T: Real>(parent: (T, T), left: (T, T), right: (T, T), lambda: T, gamma: T) -> Result<T, GbdtError> {
    Ok(structure_score(&[parent], lambda, gamma)? - structure_score(&[left, right], lambda, gamma)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice<T: Real> {
    pub feature: usize,
    pub threshold: T,
    pub gain: T,
}

fn sum_stats<T: Real>(idx: &[usize], g: &[T], h: &[T]) -> (T, T) {
    let mut gs = T::zero();
    let mut hs = T::zero();
    for &i in idx {
        gs += g[i];
        hs += h[i];
    }
    (gs, hs)
}

/// Relative roundoff allowance for gains. A gain counts only when it exceeds
/// this fraction of the magnitudes that went into it, and two gains within
/// that band are ties. Identical partitions reached through different sort
/// orders differ by a few ulps, and a mathematically zero gain can come out
/// as +1e-16.
pub const GAIN_TOL: f64 = 1e-12;

/// Roundoff band for one candidate: `GAIN_TOL · (G_L²/(H_L+λ) + G_R²/(H_R+λ) + G²/(H+λ) + γ)`.
pub fn gain_noise<T: Real>(parent: (T, T), left: (T, T), right: (T, T), lambda: T, gamma: T) -> T {
    let term = |(g, h): (T, T)| g * g / (h + lambda);
    (term(parent) + term(left) + term(right) + gamma.abs()) * T::lit(GAIN_TOL)
}

#[derive(Clone, Copy)]
struct Candidate<T: Real> {
    choice: SplitChoice<T>,
    noise: T,
}

fn beats<T: Real>(c: &Candidate<T>, best: &Option<Candidate<T>>) -> bool {
    match best {
        None => c.choice.gain > c.noise,
        Some(b) => c.choice.gain > b.choice.gain + c.noise.max(b.noise),
    }
}

/// Exact greedy search over midpoints of consecutive unique values. Only
/// gains above their roundoff band qualify; ties within the band keep the
/// lowest feature, then the lowest threshold. `idx` must be ascending.
pub fn best_split<T: Real>(
    x: &FeatureMatrix<T>,
    g: &[T],
    h: &[T],
    idx: &[usize],
    lambda: T,
    gamma: T,
) -> Result<Option<SplitChoice<T>>, GbdtError> {
    let parent = sum_stats(idx, g, h);
    let search = |f: usize| -> Result<Option<Candidate<T>>, GbdtError> {
        let mut order: Vec<usize> = idx.to_vec();
        order.sort_by(|&a, &b| cmp_real(&x.get(a, f), &x.get(b, f)).then(a.cmp(&b)));
        let mut gl = T::zero();
        let mut hl = T::zero();
        let mut best: Option<Candidate<T>> = None;
        for w in 0..order.len().saturating_sub(1) {
            let i = order[w];
            gl += g[i];
            hl += h[i];
            let lo = x.get(i, f);
            let hi = x.get(order[w + 1], f);
            if lo == hi {
                continue;
            }
            let right = (parent.0 - gl, parent.1 - hl);
            let c = Candidate {
                choice: SplitChoice {
                    feature: f,
                    threshold: split_threshold(lo, hi),
                    gain: split_gain(parent, (gl, hl), right, lambda, gamma)?,
                },
                noise: gain_noise(parent, (gl, hl), right, lambda, gamma),
            };
            if beats(&c, &best) {
                best = Some(c);
            }
        }
        Ok(best)
    };
    let per_feature: Vec<Option<Candidate<T>>> = if idx.len() * x.n_features() >= PARALLEL_WORK {
        (0..x.n_features()).into_par_iter().map(search).collect::<Result<_, _>>()?
    } else {
        (0..x.n_features()).map(search).collect::<Result<_, _>>()?
    };
    let mut best: Option<Candidate<T>> = None;
    for c in per_feature.into_iter().flatten() {
        if beats(&c, &best) {
            best = Some(c);
        }
    }
    Ok(best.map(|c| c.choice))
}

/// Grows one tree depth-first, left subtree first, within the depth and leaf
/// budgets. Leaf statistics are summed in ascending sample order.
pub fn grow_tree<T: Real>(x: &FeatureMatrix<T>, g: &[T], h: &[T], params: &GbdtParams) -> Result<TreeNode<T>, GbdtError> {
    let idx: Vec<usize> = (0..x.n_samples()).collect();
    let mut leaves = 1;
    grow(x, g, h, idx, 0, params, &mut leaves)
}

fn grow<T: Real>(
    x: &FeatureMatrix<T>,
    g: &[T],
    h: &[T],
    idx: Vec<usize>,
    depth: usize,
    params: &GbdtParams,
    leaves: &mut usize,
) -> Result<TreeNode<T>, GbdtError> {
    let lambda = T::lit(params.lambda);
    let make_leaf = |idx: &[usize]| -> Result<TreeNode<T>, GbdtError> {
        let (gs, hs) = sum_stats(idx, g, h);
        Ok(TreeNode::Leaf {
            value: leaf_weight(gs, hs, lambda)?,
        })
    };
    if depth >= params.max_depth || *leaves >= params.max_leaves || idx.len() < 2 {
        return make_leaf(&idx);
    }
    let Some(choice) = best_split(x, g, h, &idx, lambda, T::lit(params.gamma))? else {
        return make_leaf(&idx);
    };
    *leaves += 1;
    let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x.get(i, choice.feature) < choice.threshold);
    let left = grow(x, g, h, l, depth + 1, params, leaves)?;
    let right = grow(x, g, h, r, depth + 1, params, leaves)?;
    Ok(TreeNode::Split {
        feature: choice.feature,
        threshold: choice.threshold,
        left: Box::new(left),
        right: Box::new(right),
    })
}

fn mean_logloss<T: Real>(pred: &[T], labels: &[u8]) -> f64 {
    pred.iter().zip(labels).map(|(&p, &y)| logloss(p, y).as_f64()).sum::<f64>() / labels.len() as f64
}

pub fn fit<T: Real>(x: &FeatureMatrix<T>, y: &LabelVector, params: &GbdtParams) -> Result<GbdtModel<T>, GbdtError> {
    params.validate()?;
    let n = x.n_samples();
    if n != y.len() {
        return Err(GbdtError::LengthMismatch(n, y.len()));
    }
    if n == 0 {
        return Err(GbdtError::Empty);
    }
    let labels = y.labels();
    let base_score = fit_initial::<T>(labels);
    let eta = T::lit(params.learning_rate);
    let mut pred = vec![base_score; n];
    let mut model = GbdtModel {
        base_score,
        learning_rate: eta,
        trees: Vec::with_capacity(params.n_rounds),
        params: params.clone(),
        n_features: x.n_features(),
        train_loss: vec![mean_logloss(&pred, labels)],
    };
    if y.class_count(0) == 0 || y.class_count(1) == 0 {
        log::warn!("single-class training set; returning the constant model");
        return Ok(model);
    }
    let mut g = vec![T::zero(); n];
    let mut h = vec![T::zero(); n];
    for _ in 0..params.n_rounds {
        for i in 0..n {
            (g[i], h[i]) = grad_hess_logloss(pred[i], labels[i]);
        }
        let tree = grow_tree(x, &g, &h, params)?;
        for (p, row) in pred.iter_mut().zip(x.rows()) {
            *p += eta * tree.predict_row(row);
        }
        model.trees.push(tree);
        model.train_loss.push(mean_logloss(&pred, labels));
    }
    Ok(model)
}

impl<T: Real> GbdtModel<T> {
    pub fn predict_logit_row(&self, row: &[T]) -> T {
        let mut p = self.base_score;
        for tree in &self.trees {
            p += self.learning_rate * tree.predict_row(row);
        }
        p
    }

    pub fn predict(&self, x: &FeatureMatrix<T>) -> Result<Vec<T>, GbdtError> {
        if x.n_features() != self.n_features {
            return Err(GbdtError::DimensionMismatch {
                expected: self.n_features,
                found: x.n_features(),
            });
        }
        Ok(x.rows().map(|r| sigmoid(self.predict_logit_row(r))).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::two_blobs;

    fn m(rows: &[Vec<f64>]) -> FeatureMatrix<f64> {
        FeatureMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn grad_hess_values() {
        assert_eq!(grad_hess_logloss(0.0f64, 1), (-0.5, 0.25));
        assert_eq!(grad_hess_logloss(0.0f64, 0), (0.5, 0.25));
        assert_eq!(grad_hess_logloss(800.0f64, 1).1, HESSIAN_FLOOR);
    }

    #[test]
    fn grad_hess_match_finite_differences() {
        let e = 1e-4;
        for z in [-3.0f64, -0.7, 0.0, 1.2, 3.0] {
            for y in [0u8, 1] {
                let (g, h) = grad_hess_logloss(z, y);
                let fd_g = (logloss(z + e, y) - logloss(z - e, y)) / (2.0 * e);
                let fd_h = (logloss(z + e, y) - 2.0 * logloss(z, y) + logloss(z - e, y)) / (e * e);
                assert!((g - fd_g).abs() < 1e-6);
                assert!((h - fd_h).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn closed_forms() {
        assert_eq!(leaf_weight(2.0f64, 3.0, 1.0).unwrap(), -0.5);
        assert_eq!(leaf_weight(0.0f64, 3.0, 1.0).unwrap(), 0.0);
        assert!(leaf_weight(2.0f64, 3.0, 1e12).unwrap().abs() < 1e-11);
        assert!(leaf_weight(1.0f64, 0.0, 0.0).is_err());
        assert!((structure_score(&[(2.0f64, 3.0)], 1.0, 0.1).unwrap() + 0.4).abs() < 1e-15);
        assert_eq!(structure_score(&[(0.0f64, 3.0)], 1.0, 0.1).unwrap(), 0.1);
        assert!(structure_score(&[(0.0f64, -2.0)], 1.0, 0.0).is_err());
    }

    #[test]
    fn smallest_model_is_one_leaf() {
        let x = m(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
        let y = LabelVector::from_binary(vec![0, 0, 1, 1]).unwrap();
        let params = GbdtParams {
            n_rounds: 1,
            max_leaves: 1,
            ..GbdtParams::default()
        };
        let model = fit(&x, &y, &params).unwrap();
        assert_eq!(model.trees.len(), 1);
        let (g, h): (Vec<f64>, Vec<f64>) = (0..4).map(|i| grad_hess_logloss(0.0, y.labels()[i])).unzip();
        let w = leaf_weight(g.iter().sum(), h.iter().sum(), 1.0).unwrap();
        assert_eq!(model.trees[0], TreeNode::Leaf { value: w });
        let p = model.predict(&x).unwrap();
        assert_eq!(p[0], sigmoid(model.base_score + 0.3 * w));
    }

    #[test]
    fn four_point_xor_has_no_positive_gain_split() {
        let x = m(&[vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]);
        let y = LabelVector::from_binary(vec![0, 1, 1, 0]).unwrap();
        let params = GbdtParams {
            n_rounds: 10,
            learning_rate: 0.5,
            max_depth: 2,
            ..GbdtParams::default()
        };
        let model = fit(&x, &y, &params).unwrap();
        assert!(model.trees.iter().all(|t| t.leaf_count() == 1));
    }

    #[test]
    fn unbalanced_xor_is_fitted() {
        let x = m(&[vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]);
        let y = LabelVector::from_binary(vec![0, 0, 1, 1, 0]).unwrap();
        let params = GbdtParams {
            n_rounds: 10,
            learning_rate: 0.5,
            max_depth: 2,
            ..GbdtParams::default()
        };
        let model = fit(&x, &y, &params).unwrap();
        let p = model.predict(&x).unwrap();
        let pred: Vec<u8> = p.iter().map(|&v| u8::from(v >= 0.5)).collect();
        assert_eq!(pred, y.labels());
    }

    #[test]
    fn high_gamma_prunes_everything() {
        let (x, y) = two_blobs::<f64>(100, 3, 3.0, 1);
        let params = GbdtParams {
            n_rounds: 3,
            gamma: 1e6,
            ..GbdtParams::default()
        };
        let model = fit(&x, &y, &params).unwrap();
        assert!(model.trees.iter().all(|t| t.leaf_count() == 1));
    }

    #[test]
    fn blobs_loss_decreases_first_rounds() {
        let (x, y) = two_blobs::<f64>(200, 2, 2.0, 7);
        let params = GbdtParams {
            n_rounds: 5,
            ..GbdtParams::default()
        };
        let model = fit(&x, &y, &params).unwrap();
        for w in model.train_loss.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn budgets_respected() {
        let (x, y) = two_blobs::<f64>(300, 4, 1.0, 2);
        let params = GbdtParams {
            n_rounds: 4,
            max_depth: 3,
            max_leaves: 5,
            ..GbdtParams::default()
        };
        let model = fit(&x, &y, &params).unwrap();
        for t in &model.trees {
            assert!(t.depth() <= 3 && t.leaf_count() <= 5);
        }
    }

    #[test]
    fn prediction_is_row_order_invariant() {
        let (x, y) = two_blobs::<f64>(80, 3, 2.0, 4);
        let model = fit(&x, &y, &GbdtParams { n_rounds: 5, ..GbdtParams::default() }).unwrap();
        let p = model.predict(&x).unwrap();
        let rev: Vec<usize> = (0..80).rev().collect();
        let pr = model.predict(&x.select_rows(&rev).unwrap()).unwrap();
        assert!(rev.iter().zip(&pr).all(|(&i, &v)| p[i] == v));
    }

    #[test]
    fn single_class_and_mismatch() {
        let x = m(&[vec![0.0], vec![1.0]]);
        let y = LabelVector::from_binary(vec![0, 0]).unwrap();
        let model = fit(&x, &y, &GbdtParams::default()).unwrap();
        assert!(model.trees.is_empty());
        let wide = m(&[vec![0.0, 1.0]]);
        assert!(matches!(model.predict(&wide), Err(GbdtError::DimensionMismatch { .. })));
    }
}
