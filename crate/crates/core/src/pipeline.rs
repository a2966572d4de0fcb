//! Min-Max scaling, optional PCA reduction and a boosted classifier, fitted
//! and applied as one unit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{apply_minmax, fit_minmax, DatasetError, FeatureMatrix, LabelVector, NormalizerParams};
use crate::gbdt::{self, GbdtError, GbdtModel, GbdtParams};
use crate::ngboost::{self, NgbConfig, NgbError, NgbModel};
use crate::pca::{fit_pca, select_components, transform, PcaError, PcaModel};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Pca(#[from] PcaError),
    #[error(transparent)]
    Ngboost(#[from] NgbError),
    #[error(transparent)]
    Gbdt(#[from] GbdtError),
}

impl PipelineError {
    /// True when the input width disagrees with the fitted model.
    pub fn is_dimension_mismatch(&self) -> bool {
        matches!(
            self,
            PipelineError::Dataset(DatasetError::FeatureCountMismatch { .. })
                | PipelineError::Pca(PcaError::DimensionMismatch { .. })
                | PipelineError::Ngboost(NgbError::DimensionMismatch { .. })
                | PipelineError::Gbdt(GbdtError::DimensionMismatch { .. })
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierSpec {
    Ngboost(NgbConfig),
    Gbdt(GbdtParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    /// Keep the fewest principal components reaching this explained-variance
    /// ratio. `None` skips PCA.
    pub variance_ratio: Option<f64>,
    pub classifier: ClassifierSpec,
}

impl Default for PipelineSpec {
    fn default() -> Self {
        Self {
            variance_ratio: Some(0.97),
            classifier: ClassifierSpec::Ngboost(NgbConfig::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", tag = "kind", rename_all = "snake_case")]
pub enum FittedClassifier<T: Real> {
    Ngboost(NgbModel<T>),
    Gbdt(GbdtModel<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FittedPipeline<T: Real> {
    pub spec: PipelineSpec,
    pub n_features: usize,
    pub class_names: Vec<String>,
    pub normalizer: NormalizerParams<T>,
    /// Truncated to the selected components.
    pub pca: Option<PcaModel<T>>,
    pub classifier: FittedClassifier<T>,
}

fn truncate<T: Real>(model: PcaModel<T>, k: usize) -> PcaModel<T> {
    let d = model.n_features;
    PcaModel {
        mean: model.mean,
        n_components: k,
        n_features: d,
        components: model.components[..k * d].to_vec(),
        explained_variance: model.explained_variance[..k].to_vec(),
        explained_ratio: model.explained_ratio[..k].to_vec(),
    }
}

pub fn fit_pipeline<T: Real>(
    x: &FeatureMatrix<T>,
    y: &LabelVector,
    spec: &PipelineSpec,
) -> Result<FittedPipeline<T>, PipelineError> {
    if x.n_samples() != y.len() {
        return Err(DatasetError::LengthMismatch(x.n_samples(), y.len()).into());
    }
    let normalizer = fit_minmax(x);
    let scaled = apply_minmax(x, &normalizer)?;
    let (pca, features) = match spec.variance_ratio {
        Some(ratio) => {
            let full = fit_pca(&scaled)?;
            let k = select_components(&full, T::lit(ratio))?;
            let model = truncate(full, k);
            let z = transform(&model, &scaled, k)?;
            (Some(model), z)
        }
        None => (None, scaled),
    };
    let classifier = match &spec.classifier {
        ClassifierSpec::Ngboost(cfg) => FittedClassifier::Ngboost(ngboost::fit(&features, y, cfg)?),
        ClassifierSpec::Gbdt(params) => FittedClassifier::Gbdt(gbdt::fit(&features, y, params)?),
    };
    Ok(FittedPipeline {
        spec: spec.clone(),
        n_features: x.n_features(),
        class_names: y.class_names().to_vec(),
        normalizer,
        pca,
        classifier,
    })
}

impl<T: Real> FittedPipeline<T> {
    /// Number of features the classifier sees.
    pub fn reduced_dimension(&self) -> usize {
        self.pca.as_ref().map_or(self.n_features, |p| p.n_components)
    }

    pub fn predict_proba(&self, x: &FeatureMatrix<T>) -> Result<Vec<T>, PipelineError> {
        let scaled = apply_minmax(x, &self.normalizer)?;
        let features = match &self.pca {
            Some(p) => transform(p, &scaled, p.n_components)?,
            None => scaled,
        };
        Ok(match &self.classifier {
            FittedClassifier::Ngboost(m) => m.predict_proba(&features)?,
            FittedClassifier::Gbdt(m) => m.predict(&features)?,
        })
    }
}
