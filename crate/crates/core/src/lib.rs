pub mod avoa;
pub mod cli;
pub mod dataset;
pub mod gbdt;
mod linalg;
pub mod metrics;
pub mod ngboost;
pub mod pca;
pub mod pipeline;
pub mod scalar;
pub mod synth;
pub mod tree;
pub mod tuner;

/// Double-precision aliases.
pub type FeatureMatrix = dataset::FeatureMatrix<f64>;
pub type NormalizerParams = dataset::NormalizerParams<f64>;
pub type PcaModel = pca::PcaModel<f64>;
pub type NgbModel = ngboost::NgbModel<f64>;
pub type GbdtModel = gbdt::GbdtModel<f64>;
pub type FittedPipeline = pipeline::FittedPipeline<f64>;
pub type AvoaParams = avoa::AvoaParams<f64>;
pub type SearchBounds = avoa::SearchBounds<f64>;
pub type ConvergenceTrace = avoa::ConvergenceTrace<f64>;

/// Single-precision aliases.
pub type FeatureMatrix32 = dataset::FeatureMatrix<f32>;
pub type PcaModel32 = pca::PcaModel<f32>;
pub type NgbModel32 = ngboost::NgbModel<f32>;
pub type GbdtModel32 = gbdt::GbdtModel<f32>;
pub type FittedPipeline32 = pipeline::FittedPipeline<f32>;

pub use dataset::LabelVector;
pub use metrics::ConfusionMatrix;
