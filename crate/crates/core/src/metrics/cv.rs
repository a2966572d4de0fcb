use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{confusion, roc_auc, scalar_metrics, summarize, ConfusionMatrix, RocCurve, ScalarMetrics};
use crate::dataset::{FeatureMatrix, FoldPlan, LabelVector};
use crate::ngboost::threshold_labels;
use crate::pipeline::{fit_pipeline, PipelineError, PipelineSpec};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum CvError {
    #[error("fold plan covers {plan} samples but the data has {data}")]
    PlanMismatch { plan: usize, data: usize },
    #[error("fold {fold}: {source}")]
    Fit {
        fold: usize,
        #[source]
        source: PipelineError,
    },
    #[error("fold {fold}: configuration failed: {message}")]
    Configure { fold: usize, message: String },
}

impl CvError {
    pub fn fold(&self) -> Option<usize> {
        match self {
            CvError::PlanMismatch { .. } => None,
            CvError::Fit { fold, .. } | CvError::Configure { fold, .. } => Some(*fold),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub reduced_dimension: usize,
    pub spec: PipelineSpec,
    pub confusion: ConfusionMatrix,
    pub metrics: ScalarMetrics,
    #[serde(with = "super::undefined")]
    pub auc: Option<f64>,
    pub roc: Option<RocCurve>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    #[serde(with = "super::undefined")]
    pub mean: Option<f64>,
    /// Population standard deviation.
    #[serde(with = "super::undefined")]
    pub sd: Option<f64>,
    /// Folds on which the metric was defined.
    pub n_defined: usize,
}

impl MetricSummary {
    pub fn from_values(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let defined: Vec<f64> = values.into_iter().flatten().collect();
        let stats = summarize(&defined);
        Self {
            mean: stats.map(|s| s.0),
            sd: stats.map(|s| s.1),
            n_defined: defined.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub accuracy: MetricSummary,
    pub precision: MetricSummary,
    pub recall: MetricSummary,
    pub specificity: MetricSummary,
    pub f1: MetricSummary,
    pub kappa: MetricSummary,
    pub auc: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub seed: u64,
    pub n_samples: usize,
    pub class_names: Vec<String>,
    pub folds: Vec<FoldRecord>,
    pub summary: SummaryTable,
    /// Sum of the per-fold confusion matrices.
    pub overlapped: ConfusionMatrix,
    pub overlapped_metrics: ScalarMetrics,
}

impl CvReport {
    pub fn from_folds(folds: Vec<FoldRecord>, seed: u64, class_names: Vec<String>) -> Self {
        let col = |f: fn(&FoldRecord) -> Option<f64>| MetricSummary::from_values(folds.iter().map(f));
        let summary = SummaryTable {
            accuracy: col(|r| r.metrics.accuracy),
            precision: col(|r| r.metrics.precision),
            recall: col(|r| r.metrics.recall),
            specificity: col(|r| r.metrics.specificity),
            f1: col(|r| r.metrics.f1),
            kappa: col(|r| r.metrics.kappa),
            auc: col(|r| r.auc),
        };
        let overlapped = folds
            .iter()
            .fold(ConfusionMatrix::default(), |acc, r| acc.add(&r.confusion));
        Self {
            k: folds.len(),
            seed,
            n_samples: folds.iter().map(|r| r.n_test).sum(),
            class_names,
            summary,
            overlapped,
            overlapped_metrics: scalar_metrics(&overlapped),
            folds,
        }
    }
}

/// Fits scaling, PCA and the classifier on each fold's training part and
/// scores the held-out part. Folds run in parallel.
pub fn cross_validate<T: Real>(
    x: &FeatureMatrix<T>,
    y: &LabelVector,
    spec: &PipelineSpec,
    plan: &FoldPlan,
) -> Result<CvReport, CvError> {
    cross_validate_with(x, y, plan, &|_, _| Ok(spec.clone()))
}

/// As [`cross_validate`], with the pipeline chosen per fold from the fold
/// index and its training row indices.
pub fn cross_validate_with<T: Real>(
    x: &FeatureMatrix<T>,
    y: &LabelVector,
    plan: &FoldPlan,
    spec_for_fold: &(dyn Fn(usize, &[usize]) -> Result<PipelineSpec, String> + Sync),
) -> Result<CvReport, CvError> {
    if plan.assignments.len() != x.n_samples() || y.len() != x.n_samples() {
        return Err(CvError::PlanMismatch {
            plan: plan.assignments.len(),
            data: x.n_samples(),
        });
    }
    let folds: Vec<FoldRecord> = (0..plan.k)
        .into_par_iter()
        .map(|fold| evaluate_fold(x, y, plan, fold, spec_for_fold))
        .collect::<Result<_, _>>()?;
    Ok(CvReport::from_folds(folds, plan.seed, y.class_names().to_vec()))
}

fn evaluate_fold<T: Real>(
    x: &FeatureMatrix<T>,
    y: &LabelVector,
    plan: &FoldPlan,
    fold: usize,
    spec_for_fold: &(dyn Fn(usize, &[usize]) -> Result<PipelineSpec, String> + Sync),
) -> Result<FoldRecord, CvError> {
    let train = plan.train_indices(fold);
    let test = plan.test_indices(fold);
    let fit_err = |source| CvError::Fit { fold, source };
    let spec = spec_for_fold(fold, &train).map_err(|message| CvError::Configure { fold, message })?;
    let x_train = x.select_rows(&train).map_err(|e| fit_err(e.into()))?;
    let x_test = x.select_rows(&test).map_err(|e| fit_err(e.into()))?;
    let y_train = y.select(&train);
    let y_test = y.select(&test);
    let fitted = fit_pipeline(&x_train, &y_train, &spec).map_err(fit_err)?;
    let proba = fitted.predict_proba(&x_test).map_err(fit_err)?;
    let pred = threshold_labels(&proba, T::lit(0.5));
    let cm = confusion(&pred, y_test.labels()).expect("aligned fold");
    let scores: Vec<f64> = proba.iter().map(|p| p.as_f64()).collect();
    let roc = roc_auc(&scores, y_test.labels()).ok();
    Ok(FoldRecord {
        fold,
        n_train: train.len(),
        n_test: test.len(),
        reduced_dimension: fitted.reduced_dimension(),
        spec,
        confusion: cm,
        metrics: scalar_metrics(&cm),
        auc: roc.as_ref().map(|r| r.auc),
        roc,
    })
}
