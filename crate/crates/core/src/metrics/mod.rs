//! Confusion matrices, scalar classification metrics, ROC/AUC and k-fold
//! cross-validation reports.

mod cv;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use cv::{cross_validate, cross_validate_with, CvError, CvReport, FoldRecord, MetricSummary};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} predictions vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("ROC needs both classes present")]
    SingleClass,
    #[error("non-finite score at index {0}")]
    NonFiniteScore(usize),
}

/// Counts with class 1 as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn add(&self, other: &ConfusionMatrix) -> ConfusionMatrix {
        ConfusionMatrix {
            tp: self.tp + other.tp,
            tn: self.tn + other.tn,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
        }
    }
}

pub fn confusion(pred: &[u8], truth: &[u8]) -> Result<ConfusionMatrix, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(pred.len(), truth.len()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p == 1, t == 1) {
            (true, true) => cm.tp += 1,
            (false, false) => cm.tn += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

/// Metric values; `None` marks a zero denominator and serializes as the
/// string `"undefined"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarMetrics {
    #[serde(with = "undefined")]
    pub accuracy: Option<f64>,
    #[serde(with = "undefined")]
    pub precision: Option<f64>,
    #[serde(with = "undefined")]
    pub recall: Option<f64>,
    #[serde(with = "undefined")]
    pub specificity: Option<f64>,
    #[serde(with = "undefined")]
    pub f1: Option<f64>,
    #[serde(with = "undefined")]
    pub kappa: Option<f64>,
}

pub(crate) mod undefined {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Value(f64),
        Marker(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => s.serialize_f64(*x),
            None => s.serialize_str("undefined"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Value(x) => Ok(Some(x)),
            Repr::Marker(m) if m == "undefined" => Ok(None),
            Repr::Marker(m) => Err(serde::de::Error::custom(format!("unexpected metric value {m:?}"))),
        }
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn scalar_metrics(cm: &ConfusionMatrix) -> ScalarMetrics {
    let ConfusionMatrix { tp, tn, fp, fn_ } = *cm;
    let n = cm.total();
    ScalarMetrics {
        accuracy: ratio(tp + tn, n),
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        specificity: ratio(tn, tn + fp),
        f1: ratio(2 * tp, 2 * tp + fp + fn_),
        kappa: cohen_kappa(cm),
    }
}

/// `(Po - Pe) / (1 - Pe)`, evaluated over integer counts scaled by `N²` so
/// the only rounding is the final division.
pub fn cohen_kappa(cm: &ConfusionMatrix) -> Option<f64> {
    let (tp, tn, fp, fn_) = (cm.tp as i128, cm.tn as i128, cm.fp as i128, cm.fn_ as i128);
    let n = tp + tn + fp + fn_;
    let chance = (tp + fp) * (tp + fn_) + (fn_ + tn) * (fp + tn);
    let num = n * (tp + tn) - chance;
    let den = n * n - chance;
    (den != 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    /// Score at which each point after the first is reached (`score >= t`).
    pub thresholds: Vec<f64>,
    pub auc: f64,
}

/// Sweeps the threshold down through the sorted unique scores. Equal scores
/// form one step, so ties earn half credit in the trapezoidal area.
pub fn roc_auc(scores: &[f64], truth: &[u8]) -> Result<RocCurve, MetricsError> {
    if scores.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(scores.len(), truth.len()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFiniteScore(i));
    }
    let pos = truth.iter().filter(|&&t| t == 1).count() as u128;
    let neg = truth.len() as u128 - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = Vec::new();
    let (mut tp, mut fp) = (0u128, 0u128);
    // Twice the area, in units of 1/(P·N).
    let mut doubled = 0u128;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (prev_tp, prev_fp) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if truth[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        doubled += (fp - prev_fp) * (tp + prev_tp);
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        thresholds.push(s);
    }
    Ok(RocCurve {
        points,
        thresholds,
        auc: doubled as f64 / (2 * pos * neg) as f64,
    })
}

/// Mean and population standard deviation.
pub fn summarize(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cm(tp: u64, tn: u64, fp: u64, fn_: u64) -> ConfusionMatrix {
        ConfusionMatrix { tp, tn, fp, fn_ }
    }

    #[test]
    fn confusion_counts() {
        assert_eq!(confusion(&[1, 0], &[1, 0]).unwrap(), cm(1, 1, 0, 0));
        assert_eq!(confusion(&[0, 1], &[1, 0]).unwrap(), cm(0, 0, 1, 1));
        assert!(confusion(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn metric_endpoints() {
        let m = scalar_metrics(&cm(50, 50, 0, 0));
        assert_eq!((m.accuracy, m.kappa), (Some(1.0), Some(1.0)));
        let m = scalar_metrics(&cm(25, 25, 25, 25));
        assert_eq!((m.accuracy, m.kappa), (Some(0.5), Some(0.0)));
    }

    #[test]
    fn fold_scale_accuracy() {
        let m = scalar_metrics(&cm(214, 200, 7, 8));
        assert!((m.accuracy.unwrap() * 100.0 - 96.503).abs() < 1e-3);
    }

    #[test]
    fn undefined_metrics_are_flagged() {
        let m = scalar_metrics(&cm(0, 10, 0, 0));
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, None);
        assert_eq!(m.specificity, Some(1.0));
        assert_eq!(m.kappa, None);
        let json = serde_json::to_value(m).unwrap();
        assert_eq!(json["precision"], "undefined");
        let back: ScalarMetrics = serde_json::from_value(json).unwrap();
        assert_eq!(back, m);
        assert_eq!(scalar_metrics(&ConfusionMatrix::default()).accuracy, None);
    }

    #[test]
    fn roc_examples() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.3, 0.1], &[1, 1, 0, 0]).unwrap().auc, 1.0);
        assert_eq!(roc_auc(&[0.9, 0.1, 0.8, 0.3], &[1, 0, 0, 1]).unwrap().auc, 0.75);
        let flat = roc_auc(&[0.4; 6], &[1, 0, 1, 0, 0, 1]).unwrap();
        assert_eq!(flat.auc, 0.5);
        assert_eq!(flat.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(roc_auc(&[0.1, 0.2], &[1, 1]).unwrap_err(), MetricsError::SingleClass);
        assert!(roc_auc(&[f64::NAN, 0.2], &[1, 0]).is_err());
    }

    #[test]
    fn population_sd() {
        let (mean, sd) = summarize(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!((mean, sd), (5.0, 2.0));
        assert_eq!(summarize(&[]), None);
    }

    proptest! {
        #[test]
        fn kappa_bounded_and_f1_harmonic(tp in 0u64..200, tn in 0u64..200, fp in 0u64..200, fn_ in 0u64..200) {
            let m = scalar_metrics(&cm(tp, tn, fp, fn_));
            if let Some(k) = m.kappa {
                prop_assert!((-1.0..=1.0).contains(&k));
            }
            if let (Some(p), Some(r)) = (m.precision, m.recall) {
                if p + r > 0.0 {
                    prop_assert!((m.f1.unwrap() - 2.0 * p * r / (p + r)).abs() < 1e-12);
                }
            }
            if fp == 0 && fn_ == 0 && tp > 0 && tn > 0 {
                prop_assert_eq!(m.kappa, Some(1.0));
            }
        }

        #[test]
        fn roc_points_monotone(scores in proptest::collection::vec(0u8..10, 2..60), seed in any::<u64>()) {
            let truth: Vec<u8> = (0..scores.len()).map(|i| ((seed >> (i % 64)) & 1) as u8).collect();
            let s: Vec<f64> = scores.iter().map(|&v| v as f64).collect();
            if let Ok(roc) = roc_auc(&s, &truth) {
                prop_assert_eq!(roc.points[0], (0.0, 0.0));
                prop_assert_eq!(*roc.points.last().unwrap(), (1.0, 1.0));
                for w in roc.points.windows(2) {
                    prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
                }
            }
        }
    }
}
