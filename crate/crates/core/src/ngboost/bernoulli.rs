//! Bernoulli output distribution under the log score, parameterized by the
//! logit `θ`.

use serde::{Deserialize, Serialize};

use crate::scalar::{logit, sigmoid, softplus, Real};

/// Probabilities are kept inside `[PROB_CLAMP, 1 - PROB_CLAMP]` wherever they
/// are inverted.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BernoulliParams<T: Real> {
    pub theta: T,
}

impl<T: Real> BernoulliParams<T> {
    pub fn new(theta: T) -> Self {
        Self { theta }
    }

    pub fn probability(&self) -> T {
        sigmoid(self.theta)
    }

    /// Fisher information of the logit parameterization, `p(1 - p)`.
    pub fn fisher_information(&self) -> T {
        let p = clamp_probability(self.probability());
        p * (T::one() - p)
    }
}

pub(crate) fn clamp_probability<T: Real>(p: T) -> T {
    let eps = T::lit(PROB_CLAMP);
    p.max(eps).min(T::one() - eps)
}

/// Negative log-likelihood `-[y ln p + (1-y) ln(1-p)]`, computed as
/// `softplus(θ) - y·θ`.
pub fn log_score<T: Real>(params: BernoulliParams<T>, y: u8) -> T {
    let theta = params.theta;
    if y == 1 {
        softplus(-theta)
    } else {
        softplus(theta)
    }
}

/// `∂S/∂θ = p - y`.
pub fn score_gradient<T: Real>(params: BernoulliParams<T>, y: u8) -> T {
    params.probability() - T::from_u8(y).unwrap()
}

/// Gradient preconditioned by the inverse Fisher information:
/// `(p - y) / (p(1 - p))` with `p` clamped away from 0 and 1.
pub fn natural_gradient<T: Real>(params: BernoulliParams<T>, y: u8) -> T {
    let p = clamp_probability(params.probability());
    (p - T::from_u8(y).unwrap()) / (p * (T::one() - p))
}

/// Closed-form minimizer of `Σ log_score(θ, y_i)`: the logit of the positive
/// rate, with the rate clamped away from 0 and 1.
pub fn fit_initial<T: Real>(labels: &[u8]) -> T {
    assert!(!labels.is_empty(), "fit_initial needs at least one label");
    let positives = labels.iter().filter(|&&y| y == 1).count();
    let rate = T::from_usize_lossy(positives) / T::from_usize_lossy(labels.len());
    logit(clamp_probability(rate))
}
