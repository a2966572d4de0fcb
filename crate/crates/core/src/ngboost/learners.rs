//! Base learners fitted to per-sample natural gradients.

use serde::{Deserialize, Serialize};

use super::NgbError;
use crate::dataset::FeatureMatrix;
use crate::linalg::cholesky_solve;
use crate::scalar::Real;
use crate::tree::{cmp_real, split_threshold, TreeNode};

/// A fitted real-valued regressor.
pub trait Regressor<T: Real> {
    fn predict_row(&self, row: &[T]) -> T;
}

/// Something that can be fitted to `(features, targets)`.
pub trait BaseLearner<T: Real> {
    type Fitted: Regressor<T>;

    fn fit(&self, x: &FeatureMatrix<T>, targets: &[T]) -> Result<Self::Fitted, NgbError>;
}

/// Depth-limited least-squares regression tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeLearner {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeLearner {
    fn default() -> Self {
        Self {
            max_depth: 3,
            min_samples_leaf: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RegressionTree<T: Real> {
    pub root: TreeNode<T>,
}

impl<T: Real> Regressor<T> for RegressionTree<T> {
    fn predict_row(&self, row: &[T]) -> T {
        self.root.predict_row(row)
    }
}

impl<T: Real> BaseLearner<T> for TreeLearner {
    type Fitted = RegressionTree<T>;

    fn fit(&self, x: &FeatureMatrix<T>, targets: &[T]) -> Result<RegressionTree<T>, NgbError> {
        if targets.len() != x.n_samples() {
            return Err(NgbError::LengthMismatch(x.n_samples(), targets.len()));
        }
        if self.min_samples_leaf == 0 {
            return Err(NgbError::InvalidConfig("min_samples_leaf must be positive".into()));
        }
        let indices: Vec<usize> = (0..x.n_samples()).collect();
        Ok(RegressionTree {
            root: self.grow(x, targets, indices, 0),
        })
    }
}

// Every sum below runs over a canonical ordering of the (value, target)
// pairs, so the fitted tree does not depend on the row order of the input.
impl TreeLearner {
    fn grow<T: Real>(&self, x: &FeatureMatrix<T>, t: &[T], idx: Vec<usize>, depth: usize) -> TreeNode<T> {
        let leaf = |idx: &[usize]| {
            let mut vals: Vec<T> = idx.iter().map(|&i| t[i]).collect();
            vals.sort_by(cmp_real);
            let sum: T = vals.iter().copied().sum();
            TreeNode::Leaf {
                value: sum / T::from_usize_lossy(vals.len()),
            }
        };
        if depth >= self.max_depth || idx.len() < 2 * self.min_samples_leaf {
            return leaf(&idx);
        }
        let Some((feature, threshold)) = self.best_split(x, t, &idx) else {
            return leaf(&idx);
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x.get(i, feature) < threshold);
        TreeNode::Split {
            feature,
            threshold,
            left: Box::new(self.grow(x, t, l, depth + 1)),
            right: Box::new(self.grow(x, t, r, depth + 1)),
        }
    }

    /// Maximizes `S_L²/n_L + S_R²/n_R`, which is equivalent to maximizing
    /// the squared-error reduction. Ties keep the earliest feature and lowest
    /// threshold.
    fn best_split<T: Real>(&self, x: &FeatureMatrix<T>, t: &[T], idx: &[usize]) -> Option<(usize, T)> {
        let n = idx.len();
        let mut base_sorted: Vec<T> = idx.iter().map(|&i| t[i]).collect();
        base_sorted.sort_by(cmp_real);
        let total: T = base_sorted.iter().copied().sum();
        let parent = total * total / T::from_usize_lossy(n);

        let mut best: Option<(T, usize, T)> = None;
        let mut pairs: Vec<(T, T)> = Vec::with_capacity(n);
        for f in 0..x.n_features() {
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (x.get(i, f), t[i])));
            pairs.sort_by(|a, b| cmp_real(&a.0, &b.0).then(cmp_real(&a.1, &b.1)));
            let sorted_total: T = pairs.iter().map(|p| p.1).sum();
            let mut left = T::zero();
            for i in 0..n - 1 {
                left += pairs[i].1;
                let nl = i + 1;
                if pairs[i].0 == pairs[i + 1].0 || nl < self.min_samples_leaf || n - nl < self.min_samples_leaf {
                    continue;
                }
                let right = sorted_total - left;
                let score = left * left / T::from_usize_lossy(nl) + right * right / T::from_usize_lossy(n - nl);
                let gain = score - parent;
                if gain > T::zero() && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, split_threshold(pairs[i].0, pairs[i + 1].0)));
                }
            }
        }
        best.map(|(_, f, thr)| (f, thr))
    }
}

/// L2-penalized linear least squares with an unpenalized intercept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RidgeLearner {
    pub penalty: f64,
}

impl Default for RidgeLearner {
    fn default() -> Self {
        Self { penalty: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RidgeRegressor<T: Real> {
    pub intercept: T,
    pub coefficients: Vec<T>,
}

impl<T: Real> Regressor<T> for RidgeRegressor<T> {
    fn predict_row(&self, row: &[T]) -> T {
        self.intercept + crate::linalg::dot(&self.coefficients, row)
    }
}

impl<T: Real> BaseLearner<T> for RidgeLearner {
    type Fitted = RidgeRegressor<T>;

    fn fit(&self, x: &FeatureMatrix<T>, targets: &[T]) -> Result<RidgeRegressor<T>, NgbError> {
        let n = x.n_samples();
        let d = x.n_features();
        if targets.len() != n {
            return Err(NgbError::LengthMismatch(n, targets.len()));
        }
        if !(self.penalty > 0.0) {
            return Err(NgbError::InvalidConfig(format!("ridge penalty {} must be positive", self.penalty)));
        }
        let nf = T::from_usize_lossy(n);
        let mut mean_x = vec![T::zero(); d];
        for row in x.rows() {
            for (m, &v) in mean_x.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean_x.iter_mut().for_each(|m| *m /= nf);
        let mean_t = targets.iter().copied().sum::<T>() / nf;

        let mut gram = vec![T::zero(); d * d];
        let mut rhs = vec![T::zero(); d];
        let mut centered = vec![T::zero(); d];
        for (row, &ti) in x.rows().zip(targets) {
            for ((c, &v), &m) in centered.iter_mut().zip(row).zip(&mean_x) {
                *c = v - m;
            }
            let tc = ti - mean_t;
            for a in 0..d {
                rhs[a] += centered[a] * tc;
                for b in 0..=a {
                    gram[a * d + b] += centered[a] * centered[b];
                }
            }
        }
        let penalty = T::lit(self.penalty);
        for a in 0..d {
            gram[a * d + a] += penalty;
            for b in 0..a {
                gram[b * d + a] = gram[a * d + b];
            }
        }
        let coefficients = cholesky_solve(&gram, &rhs)
            .ok_or_else(|| NgbError::Learner("ridge normal equations are not positive definite".into()))?;
        let intercept = mean_t - crate::linalg::dot(&coefficients, &mean_x);
        Ok(RidgeRegressor {
            intercept,
            coefficients,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[Vec<f64>]) -> FeatureMatrix<f64> {
        FeatureMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn tree_finds_step_function() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let t: Vec<f64> = (0..20).map(|i| if i < 10 { -1.0 } else { 2.0 }).collect();
        let tree = TreeLearner { max_depth: 1, min_samples_leaf: 5 }.fit(&matrix(&rows), &t).unwrap();
        match &tree.root {
            TreeNode::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 9.5);
            }
            _ => panic!("expected a split"),
        }
        assert_eq!(tree.predict_row(&[3.0, 0.0]), -1.0);
        assert_eq!(tree.predict_row(&[15.0, 0.0]), 2.0);
    }

    #[test]
    fn tree_respects_min_leaf_and_depth() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let t: Vec<f64> = (0..40).map(|i| ((i * 7) % 11) as f64).collect();
        let learner = TreeLearner { max_depth: 3, min_samples_leaf: 5 };
        let tree = learner.fit(&matrix(&rows), &t).unwrap();
        assert!(tree.root.depth() <= 3);
        let mut per_leaf = vec![0usize; tree.root.leaf_count()];
        for r in &rows {
            per_leaf[tree.root.leaf_index(r)] += 1;
        }
        assert!(per_leaf.iter().all(|&c| c >= 5), "{per_leaf:?}");
    }

    #[test]
    fn constant_targets_give_single_leaf() {
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64]).collect();
        let tree = TreeLearner::default().fit(&matrix(&rows), &[0.5; 12]).unwrap();
        assert_eq!(tree.root, TreeNode::Leaf { value: 0.5 });
    }

    #[test]
    fn tree_is_row_order_invariant() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![((i * 13) % 7) as f64, ((i * 5) % 4) as f64 * 0.1]).collect();
        let t: Vec<f64> = (0..30).map(|i| ((i * 17) % 9) as f64 * 0.37 - 1.1).collect();
        let a = TreeLearner::default().fit(&matrix(&rows), &t).unwrap();
        let perm: Vec<usize> = (0..30).map(|i| (i * 7) % 30).collect();
        let prow: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let pt: Vec<f64> = perm.iter().map(|&i| t[i]).collect();
        let b = TreeLearner::default().fit(&matrix(&prow), &pt).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ridge_recovers_linear_map() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 / 10.0, ((i * 7) % 13) as f64]).collect();
        let t: Vec<f64> = rows.iter().map(|r| 1.5 + 2.0 * r[0] - 0.5 * r[1]).collect();
        let model = RidgeLearner { penalty: 1e-9 }.fit(&matrix(&rows), &t).unwrap();
        assert!((model.intercept - 1.5).abs() < 1e-6);
        assert!((model.coefficients[0] - 2.0).abs() < 1e-6);
        assert!((model.coefficients[1] + 0.5).abs() < 1e-6);
        assert!((model.predict_row(&[1.0, 1.0]) - 3.0).abs() < 1e-6);
    }

    #[test]
    fn ridge_penalty_shrinks() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let t: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let weak = RidgeLearner { penalty: 1e-6 }.fit(&matrix(&rows), &t).unwrap();
        let strong = RidgeLearner { penalty: 1e6 }.fit(&matrix(&rows), &t).unwrap();
        assert!(strong.coefficients[0].abs() < weak.coefficients[0].abs());
        assert!(RidgeLearner { penalty: 0.0 }.fit(&matrix(&rows), &t).is_err());
    }
}
