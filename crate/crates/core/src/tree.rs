//! Binary decision tree shared by the NGBoost regression learner and the
//! second-order boosted trees.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Samples with `x[feature] < threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", rename_all = "snake_case")]
pub enum TreeNode<T: Real> {
    Leaf {
        value: T,
    },
    Split {
        feature: usize,
        threshold: T,
        left: Box<TreeNode<T>>,
        right: Box<TreeNode<T>>,
    },
}

impl<T: Real> TreeNode<T> {
    pub fn predict_row(&self, row: &[T]) -> T {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature] < *threshold { left } else { right };
                }
            }
        }
    }

    /// Index (in left-to-right order) of the leaf a row lands in.
    pub fn leaf_index(&self, row: &[T]) -> usize {
        let mut node = self;
        let mut offset = 0;
        loop {
            match node {
                TreeNode::Leaf { .. } => return offset,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if row[*feature] < *threshold {
                        node = left;
                    } else {
                        offset += left.leaf_count();
                        node = right;
                    }
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    /// Depth in edges; a lone leaf has depth 0.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Leaf values in left-to-right order.
    pub fn leaf_values(&self) -> Vec<T> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<T>) {
        match self {
            TreeNode::Leaf { value } => out.push(*value),
            TreeNode::Split { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }

    pub fn max_feature_index(&self) -> Option<usize> {
        match self {
            TreeNode::Leaf { .. } => None,
            TreeNode::Split {
                feature, left, right, ..
            } => Some(
                [Some(*feature), left.max_feature_index(), right.max_feature_index()]
                    .into_iter()
                    .flatten()
                    .max()
                    .unwrap(),
            ),
        }
    }
}

/// Threshold strictly above `lo` and at most `hi`, so `lo` routes left and
/// `hi` routes right even when the midpoint rounds onto `lo`.
pub(crate) fn split_threshold<T: Real>(lo: T, hi: T) -> T {
    let mid = lo + (hi - lo) / T::lit(2.0);
    if mid > lo {
        mid
    } else {
        hi
    }
}

/// Total order on finite scalars.
pub(crate) fn cmp_real<T: Real>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stump() -> TreeNode<f64> {
        TreeNode::Split {
            feature: 1,
            threshold: 0.5,
            left: Box::new(TreeNode::Leaf { value: -1.0 }),
            right: Box::new(TreeNode::Split {
                feature: 0,
                threshold: 2.0,
                left: Box::new(TreeNode::Leaf { value: 3.0 }),
                right: Box::new(TreeNode::Leaf { value: 4.0 }),
            }),
        }
    }

    #[test]
    fn routing_and_shape() {
        let t = stump();
        assert_eq!(t.predict_row(&[0.0, 0.2]), -1.0);
        assert_eq!(t.predict_row(&[1.0, 0.5]), 3.0);
        assert_eq!(t.predict_row(&[2.0, 0.9]), 4.0);
        assert_eq!(t.leaf_index(&[2.0, 0.9]), 2);
        assert_eq!((t.leaf_count(), t.depth()), (3, 2));
        assert_eq!(t.leaf_values(), vec![-1.0, 3.0, 4.0]);
        assert_eq!(t.max_feature_index(), Some(1));
    }

    #[test]
    fn threshold_separates_adjacent_floats() {
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let t = split_threshold(lo, hi);
        assert!(lo < t && hi >= t);
        assert_eq!(split_threshold(1.0f64, 3.0), 2.0);
    }
}
