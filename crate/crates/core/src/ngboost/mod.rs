//! Natural gradient boosting with a Bernoulli output distribution.

pub mod bernoulli;
pub mod learners;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{FeatureMatrix, LabelVector};
use crate::scalar::{sigmoid, Real};
pub use bernoulli::{fit_initial, log_score, natural_gradient, score_gradient, BernoulliParams, PROB_CLAMP};
pub use learners::{BaseLearner, RegressionTree, Regressor, RidgeLearner, RidgeRegressor, TreeLearner};

#[derive(Debug, Error)]
pub enum NgbError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("length mismatch: {0} feature rows vs {1} targets")]
    LengthMismatch(usize, usize),
    #[error("feature count mismatch: model expects {expected}, input has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training set is empty")]
    Empty,
    #[error("base learner failed: {0}")]
    Learner(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseLearnerKind {
    Tree,
    Ridge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NgbConfig {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub base_learner: BaseLearnerKind,
    pub tree: TreeLearner,
    pub ridge: RidgeLearner,
}

impl Default for NgbConfig {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            learning_rate: 0.1,
            base_learner: BaseLearnerKind::Tree,
            tree: TreeLearner::default(),
            ridge: RidgeLearner::default(),
        }
    }
}

impl NgbConfig {
    pub fn validate(&self) -> Result<(), NgbError> {
        if self.n_estimators == 0 {
            return Err(NgbError::InvalidConfig("n_estimators must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NgbError::InvalidConfig(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.tree.max_depth == 0 || self.tree.min_samples_leaf == 0 {
            return Err(NgbError::InvalidConfig("tree depth and leaf size must be positive".into()));
        }
        if !(self.ridge.penalty > 0.0) {
            return Err(NgbError::InvalidConfig("ridge penalty must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", tag = "kind", rename_all = "snake_case")]
pub enum Stage<T: Real> {
    Tree(RegressionTree<T>),
    Ridge(RidgeRegressor<T>),
}

impl<T: Real> Regressor<T> for Stage<T> {
    fn predict_row(&self, row: &[T]) -> T {
        match self {
            Stage::Tree(t) => t.predict_row(row),
            Stage::Ridge(r) => r.predict_row(row),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct NgbModel<T: Real> {
    pub theta0: T,
    pub learning_rate: T,
    pub stages: Vec<Stage<T>>,
    pub config: NgbConfig,
    pub n_features: usize,
    /// Mean training log score before the first stage and after each stage.
    pub train_loss: Vec<f64>,
}

fn mean_log_score<T: Real>(theta: &[T], labels: &[u8]) -> f64 {
    let total: f64 = theta
        .iter()
        .zip(labels)
        .map(|(&t, &y)| log_score(BernoulliParams::new(t), y).as_f64())
        .sum();
    total / labels.len() as f64
}

/// Fits `config.n_estimators` stages. Every stage regresses the per-sample
/// natural gradients and steps each logit by `-learning_rate · f(x)`.
pub fn fit<T: Real>(x: &FeatureMatrix<T>, y: &LabelVector, config: &NgbConfig) -> Result<NgbModel<T>, NgbError> {
    config.validate()?;
    let n = x.n_samples();
    if n != y.len() {
        return Err(NgbError::LengthMismatch(n, y.len()));
    }
    if n == 0 {
        return Err(NgbError::Empty);
    }
    let labels = y.labels();
    let theta0 = fit_initial::<T>(labels);
    let lr = T::lit(config.learning_rate);
    let mut theta = vec![theta0; n];
    let mut model = NgbModel {
        theta0,
        learning_rate: lr,
        stages: Vec::with_capacity(config.n_estimators),
        config: config.clone(),
        n_features: x.n_features(),
        train_loss: vec![mean_log_score(&theta, labels)],
    };
    if y.class_count(0) == 0 || y.class_count(1) == 0 {
        log::warn!("single-class training set; returning the constant model");
        return Ok(model);
    }

    let mut targets = vec![T::zero(); n];
    for _ in 0..config.n_estimators {
        for ((g, &t), &yi) in targets.iter_mut().zip(&theta).zip(labels) {
            *g = natural_gradient(BernoulliParams::new(t), yi);
        }
        let stage = match config.base_learner {
            BaseLearnerKind::Tree => Stage::Tree(config.tree.fit(x, &targets)?),
            BaseLearnerKind::Ridge => Stage::Ridge(config.ridge.fit(x, &targets)?),
        };
        for (t, row) in theta.iter_mut().zip(x.rows()) {
            *t -= lr * stage.predict_row(row);
        }
        model.stages.push(stage);
        model.train_loss.push(mean_log_score(&theta, labels));
    }
    Ok(model)
}

impl<T: Real> NgbModel<T> {
    fn check_dims(&self, x: &FeatureMatrix<T>) -> Result<(), NgbError> {
        if x.n_features() != self.n_features {
            return Err(NgbError::DimensionMismatch {
                expected: self.n_features,
                found: x.n_features(),
            });
        }
        Ok(())
    }

    /// Logit `θ0 - lr·Σ f_m(x)`, accumulated stage by stage as during fitting.
    pub fn predict_logit_row(&self, row: &[T]) -> T {
        let mut theta = self.theta0;
        for stage in &self.stages {
            theta -= self.learning_rate * stage.predict_row(row);
        }
        theta
    }

    pub fn predict_proba(&self, x: &FeatureMatrix<T>) -> Result<Vec<T>, NgbError> {
        self.check_dims(x)?;
        Ok(x.rows().map(|r| sigmoid(self.predict_logit_row(r))).collect())
    }

    /// Label 1 iff `p >= threshold`.
    pub fn predict_label(&self, x: &FeatureMatrix<T>, threshold: T) -> Result<Vec<u8>, NgbError> {
        Ok(threshold_labels(&self.predict_proba(x)?, threshold))
    }
}

/// Shared decision rule: positive iff `p >= threshold`.
pub fn threshold_labels<T: Real>(proba: &[T], threshold: T) -> Vec<u8> {
    proba.iter().map(|&p| u8::from(p >= threshold)).collect()
}
