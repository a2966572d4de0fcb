//! Hyperparameter search: mixed spaces encoded into the unit box and scored by
//! inner stratified cross-validation, minimized with AVOA.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Instant;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::avoa::{Avoa, AvoaError, AvoaParams, ConvergenceTrace, Objective, SearchBounds, VultureState};
use crate::dataset::{make_stratified_folds, FeatureMatrix, FoldPlan, LabelVector};
use crate::gbdt::GbdtParams;
use crate::metrics::{cross_validate, cross_validate_with, CvError, CvReport};
use crate::ngboost::{threshold_labels, BaseLearnerKind, NgbConfig};
use crate::pipeline::{fit_pipeline, ClassifierSpec, PipelineSpec};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum TunerError {
    #[error("search space has no dimensions")]
    EmptySpace,
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("invalid tuner configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Avoa(#[from] AvoaError),
    #[error("no trial produced a usable configuration")]
    NoFeasibleTrial,
    #[error(transparent)]
    Cv(#[from] CvError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DimKind {
    Continuous { lo: f64, hi: f64 },
    Integer { lo: i64, hi: i64 },
    Categorical { options: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperDim {
    pub name: String,
    #[serde(flatten)]
    pub kind: DimKind,
}

impl HyperDim {
    pub fn continuous(name: &str, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            kind: DimKind::Continuous { lo, hi },
        }
    }

    pub fn integer(name: &str, lo: i64, hi: i64) -> Self {
        Self {
            name: name.into(),
            kind: DimKind::Integer { lo, hi },
        }
    }

    pub fn categorical(name: &str, options: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind: DimKind::Categorical {
                options: options.iter().map(|s| s.to_string()).collect(),
            },
        }
    }
}

/// Ordered list of dimensions; position `j` of an encoded vector belongs to
/// `dims[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperSpace {
    pub dims: Vec<HyperDim>,
}

impl HyperSpace {
    pub fn validate(&self) -> Result<(), TunerError> {
        if self.dims.is_empty() {
            return Err(TunerError::EmptySpace);
        }
        for d in &self.dims {
            let ok = match &d.kind {
                DimKind::Continuous { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
                DimKind::Integer { lo, hi } => lo < hi,
                DimKind::Categorical { options } => !options.is_empty(),
            };
            if !ok {
                return Err(TunerError::InvalidSpace(format!("dimension {:?}", d.name)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Choice(String),
}

pub type ParamRecord = IndexMap<String, ParamValue>;

/// One unit interval per dimension; the ranges are applied in decoding.
pub fn encode_space(space: &HyperSpace) -> Result<SearchBounds<f64>, TunerError> {
    space.validate()?;
    Ok(SearchBounds::uniform(space.dims.len(), 0.0, 1.0)?)
}

fn log_scaled(lo: f64, hi: f64) -> bool {
    lo > 0.0 && hi / lo > 100.0
}

pub fn decode_position(space: &HyperSpace, position: &[f64]) -> ParamRecord {
    space
        .dims
        .iter()
        .zip(position)
        .map(|(d, &u)| {
            let u = u.clamp(0.0, 1.0);
            let v = match &d.kind {
                DimKind::Continuous { lo, hi } => {
                    let x = if log_scaled(*lo, *hi) {
                        (lo.ln() + u * (hi.ln() - lo.ln())).exp()
                    } else {
                        lo + u * (hi - lo)
                    };
                    ParamValue::Real(x.clamp(*lo, *hi))
                }
                DimKind::Integer { lo, hi } => {
                    let x = (*lo as f64 + u * (hi - lo + 1) as f64).floor() as i64;
                    ParamValue::Int(x.clamp(*lo, *hi))
                }
                DimKind::Categorical { options } => {
                    let i = ((u * options.len() as f64).floor() as usize).min(options.len() - 1);
                    ParamValue::Choice(options[i].clone())
                }
            };
            (d.name.clone(), v)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Ngboost,
    Gbdt,
}

/// Learning rate, estimator count, base learner and output distribution,
/// restricted to the options this crate implements.
pub fn ngboost_space() -> HyperSpace {
    HyperSpace {
        dims: vec![
            HyperDim::continuous("learning_rate", 1e-7, 0.9),
            HyperDim::integer("n_estimators", 3, 20),
            HyperDim::categorical("base_learner", &["tree", "ridge"]),
            HyperDim::categorical("distribution", &["bernoulli"]),
        ],
    }
}

/// The published NGBoost domain. `svr` and `k_categorical` are not
/// implemented and score as failed trials.
pub fn ngboost_reference_space() -> HyperSpace {
    HyperSpace {
        dims: vec![
            HyperDim::continuous("learning_rate", 1e-7, 0.9),
            HyperDim::integer("n_estimators", 3, 20),
            HyperDim::categorical("base_learner", &["svr", "tree", "ridge"]),
            HyperDim::categorical("distribution", &["k_categorical", "bernoulli"]),
        ],
    }
}

pub fn gbdt_space() -> HyperSpace {
    HyperSpace {
        dims: vec![
            HyperDim::categorical("booster", &["gbtree"]),
            HyperDim::continuous("learning_rate", 1e-7, 0.9),
            HyperDim::continuous("gamma", 1e-5, 0.9),
            HyperDim::integer("max_depth", 5, 200),
            HyperDim::integer("max_leaves", 5, 800),
        ],
    }
}

/// The published boosted-tree domain. `gblinear` is not implemented and
/// scores as a failed trial.
pub fn gbdt_reference_space() -> HyperSpace {
    let mut space = gbdt_space();
    space.dims[0] = HyperDim::categorical("booster", &["gblinear", "gbtree"]);
    space
}

pub fn default_space(kind: ClassifierKind) -> HyperSpace {
    match kind {
        ClassifierKind::Ngboost => ngboost_space(),
        ClassifierKind::Gbdt => gbdt_space(),
    }
}

fn real(v: &ParamValue, name: &str) -> Result<f64, String> {
    match v {
        ParamValue::Real(x) => Ok(*x),
        ParamValue::Int(x) => Ok(*x as f64),
        ParamValue::Choice(_) => Err(format!("{name} must be numeric")),
    }
}

fn count(v: &ParamValue, name: &str) -> Result<usize, String> {
    match v {
        ParamValue::Int(x) if *x >= 0 => Ok(*x as usize),
        _ => Err(format!("{name} must be a nonnegative integer")),
    }
}

fn choice<'a>(v: &'a ParamValue, name: &str) -> Result<&'a str, String> {
    match v {
        ParamValue::Choice(s) => Ok(s),
        _ => Err(format!("{name} must be categorical")),
    }
}

/// Applies decoded parameters on top of `base`. Unknown names and
/// unimplemented options are errors.
pub fn spec_from_params(kind: ClassifierKind, params: &ParamRecord, base: &PipelineSpec) -> Result<PipelineSpec, String> {
    let classifier = match kind {
        ClassifierKind::Ngboost => {
            let mut cfg = match &base.classifier {
                ClassifierSpec::Ngboost(c) => c.clone(),
                _ => NgbConfig::default(),
            };
            for (name, v) in params {
                match name.as_str() {
                    "learning_rate" => cfg.learning_rate = real(v, name)?,
                    "n_estimators" => cfg.n_estimators = count(v, name)?,
                    "tree_max_depth" => cfg.tree.max_depth = count(v, name)?,
                    "tree_min_samples_leaf" => cfg.tree.min_samples_leaf = count(v, name)?,
                    "ridge_penalty" => cfg.ridge.penalty = real(v, name)?,
                    "base_learner" => {
                        cfg.base_learner = match choice(v, name)? {
                            "tree" => BaseLearnerKind::Tree,
                            "ridge" => BaseLearnerKind::Ridge,
                            other => return Err(format!("base learner {other:?} is not implemented")),
                        }
                    }
                    "distribution" => match choice(v, name)? {
                        "bernoulli" => {}
                        other => return Err(format!("distribution {other:?} is not implemented")),
                    },
                    _ => return Err(format!("unknown NGBoost parameter {name:?}")),
                }
            }
            cfg.validate().map_err(|e| e.to_string())?;
            ClassifierSpec::Ngboost(cfg)
        }
        ClassifierKind::Gbdt => {
            let mut p = match &base.classifier {
                ClassifierSpec::Gbdt(p) => p.clone(),
                _ => GbdtParams::default(),
            };
            for (name, v) in params {
                match name.as_str() {
                    "learning_rate" => p.learning_rate = real(v, name)?,
                    "gamma" => p.gamma = real(v, name)?,
                    "lambda" => p.lambda = real(v, name)?,
                    "max_depth" => p.max_depth = count(v, name)?,
                    "max_leaves" => p.max_leaves = count(v, name)?,
                    "n_rounds" => p.n_rounds = count(v, name)?,
                    "booster" => match choice(v, name)? {
                        "gbtree" => {}
                        other => return Err(format!("booster {other:?} is not implemented")),
                    },
                    _ => return Err(format!("unknown GBDT parameter {name:?}")),
                }
            }
            p.validate().map_err(|e| e.to_string())?;
            ClassifierSpec::Gbdt(p)
        }
    };
    Ok(PipelineSpec {
        variance_ratio: base.variance_ratio,
        classifier,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunerConfig {
    pub avoa: AvoaParams<f64>,
    pub inner_folds: usize,
    pub seed: u64,
    /// Cap on fitness evaluations. When below `population·(iterations+1)` the
    /// iteration count is cut to fit.
    pub budget: Option<usize>,
    /// Adds `wall_time_ms` to trial records, which makes them
    /// run-dependent.
    pub record_timing: bool,
}

impl Default for TunerConfig {
    fn default() -> Self {
        Self {
            avoa: AvoaParams::default(),
            inner_folds: 3,
            seed: 0,
            budget: None,
            record_timing: false,
        }
    }
}

impl TunerConfig {
    /// AVOA parameters actually used: the tuner seed, and the iteration count
    /// after the budget cap.
    pub fn effective_avoa(&self) -> Result<AvoaParams<f64>, TunerError> {
        let mut p = self.avoa.clone();
        p.seed = self.seed;
        if let Some(budget) = self.budget {
            let pop = p.population_size.max(1);
            if budget < 2 * pop {
                return Err(TunerError::InvalidConfig(format!(
                    "budget {budget} cannot cover one iteration of a population of {pop}"
                )));
            }
            p.max_iterations = p.max_iterations.min(budget / pop - 1);
        }
        if self.inner_folds < 2 {
            return Err(TunerError::InvalidConfig("inner_folds must be at least 2".into()));
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessOutcome {
    /// `1 - mean inner-fold accuracy`, or 1 for a failed trial.
    pub fitness: f64,
    pub fold_accuracies: Vec<f64>,
    pub error: Option<String>,
    #[serde(skip)]
    pub wall_time_ms: f64,
}

impl FitnessOutcome {
    fn failed(message: String) -> Self {
        Self {
            fitness: 1.0,
            fold_accuracies: Vec::new(),
            error: Some(message),
            wall_time_ms: 0.0,
        }
    }
}

/// Receives the row indices (into the tuning data) each inner fit or
/// evaluation reads.
pub type AuditHook<'a> = &'a (dyn Fn(&[usize]) + Sync);

/// Inner stratified CV accuracy on `(x, y)` only.
pub fn fitness<T: Real>(
    spec: &PipelineSpec,
    x: &FeatureMatrix<T>,
    y: &LabelVector,
    inner_folds: usize,
    seed: u64,
    audit: Option<AuditHook<'_>>,
) -> FitnessOutcome {
    let plan = match make_stratified_folds(y, inner_folds, seed) {
        Ok(p) => p,
        Err(e) => return FitnessOutcome::failed(e.to_string()),
    };
    let mut accs = Vec::with_capacity(plan.k);
    for fold in 0..plan.k {
        let train = plan.train_indices(fold);
        let test = plan.test_indices(fold);
        if let Some(hook) = audit {
            hook(&train);
            hook(&test);
        }
        let run = || -> Result<f64, String> {
            let xt = x.select_rows(&train).map_err(|e| e.to_string())?;
            let xv = x.select_rows(&test).map_err(|e| e.to_string())?;
            let fitted = fit_pipeline(&xt, &y.select(&train), spec).map_err(|e| e.to_string())?;
            let proba = fitted.predict_proba(&xv).map_err(|e| e.to_string())?;
            let pred = threshold_labels(&proba, T::lit(0.5));
            let truth = y.select(&test);
            let hits = pred.iter().zip(truth.labels()).filter(|(a, b)| a == b).count();
            Ok(hits as f64 / test.len() as f64)
        };
        match run() {
            Ok(a) => accs.push(a),
            Err(e) => return FitnessOutcome::failed(format!("inner fold {fold}: {e}")),
        }
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    FitnessOutcome {
        fitness: 1.0 - mean,
        fold_accuracies: accs,
        error: None,
        wall_time_ms: 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    /// 0 for the initial population.
    pub iteration: usize,
    pub vulture: usize,
    pub params: ParamRecord,
    pub fitness: f64,
    pub fold_accuracies: Vec<f64>,
    pub flagged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best_params: ParamRecord,
    pub best_fitness: f64,
    pub best_spec: PipelineSpec,
    pub avoa: AvoaParams<f64>,
    pub trials: Vec<TrialRecord>,
    pub trace: ConvergenceTrace<f64>,
}

impl TuneResult {
    /// Best mean inner-CV accuracy after each iteration.
    pub fn best_accuracy_per_iteration(&self) -> Vec<f64> {
        self.trace.best_fitness_per_iteration.iter().map(|f| 1.0 - f).collect()
    }
}

struct CvObjective<'a, T: Real> {
    space: &'a HyperSpace,
    kind: ClassifierKind,
    base: &'a PipelineSpec,
    x: &'a FeatureMatrix<T>,
    y: &'a LabelVector,
    inner_folds: usize,
    seed: u64,
    audit: Option<AuditHook<'a>>,
    // Decoded parameters (as JSON) to outcome; distinct positions often
    // decode to the same configuration.
    cache: Mutex<HashMap<String, FitnessOutcome>>,
}

impl<T: Real> CvObjective<'_, T> {
    fn outcome(&self, position: &[f64]) -> (ParamRecord, FitnessOutcome) {
        let params = decode_position(self.space, position);
        let key = serde_json::to_string(&params).expect("parameters serialize");
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return (params, hit.clone());
        }
        let start = Instant::now();
        let mut out = match spec_from_params(self.kind, &params, self.base) {
            Ok(spec) => fitness(&spec, self.x, self.y, self.inner_folds, self.seed, self.audit),
            Err(e) => FitnessOutcome::failed(e),
        };
        out.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
        self.cache.lock().unwrap().entry(key).or_insert_with(|| out.clone());
        (params, out)
    }
}

impl<T: Real> Objective<f64> for CvObjective<'_, T> {
    fn evaluate(&self, position: &[f64]) -> f64 {
        self.outcome(position).1.fitness
    }
}

/// Minimizes `1 - inner CV accuracy` over `space`. The inner fold plan uses
/// the tuner seed, so repeated runs give identical results.
pub fn tune<T: Real>(
    space: &HyperSpace,
    kind: ClassifierKind,
    base: &PipelineSpec,
    x: &FeatureMatrix<T>,
    y: &LabelVector,
    config: &TunerConfig,
    audit: Option<AuditHook<'_>>,
) -> Result<TuneResult, TunerError> {
    let bounds = encode_space(space)?;
    let params = config.effective_avoa()?;
    if params.max_iterations < config.avoa.max_iterations {
        log::warn!(
            "evaluation budget cuts AVOA from {} to {} iterations",
            config.avoa.max_iterations,
            params.max_iterations
        );
    }
    let objective = CvObjective {
        space,
        kind,
        base,
        x,
        y,
        inner_folds: config.inner_folds,
        seed: config.seed,
        audit,
        cache: Mutex::new(HashMap::new()),
    };
    let mut log: Vec<VultureState<f64>> = Vec::with_capacity(params.evaluation_count());
    let (best, trace) = Avoa::new(params.clone())?.run_logged(&objective, &bounds, None, &mut |_| {}, &mut log)?;

    let pop = params.population_size;
    let trials: Vec<TrialRecord> = log
        .iter()
        .enumerate()
        .map(|(t, state)| {
            let (p, out) = objective.outcome(&state.position);
            TrialRecord {
                trial: t,
                iteration: t / pop,
                vulture: t % pop,
                params: p,
                fitness: out.fitness,
                fold_accuracies: out.fold_accuracies,
                flagged: out.error.is_some(),
                error: out.error,
                wall_time_ms: config.record_timing.then_some(out.wall_time_ms),
            }
        })
        .collect();

    let best_params = decode_position(space, &best.position);
    let best_spec = spec_from_params(kind, &best_params, base).map_err(|_| TunerError::NoFeasibleTrial)?;
    if trials.iter().all(|t| t.flagged) {
        return Err(TunerError::NoFeasibleTrial);
    }
    Ok(TuneResult {
        best_params,
        best_fitness: best.fitness,
        best_spec,
        avoa: params,
        trials,
        trace,
    })
}

/// How hyperparameters are chosen inside an outer cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningMode {
    /// Tune once on all supplied rows, then cross-validate that optimum.
    Once,
    /// Tune separately on each outer training partition.
    PerFold,
}

pub struct TunedCv {
    pub report: CvReport,
    /// One result for `Once`, one per fold for `PerFold`.
    pub tuning: Vec<TuneResult>,
}

/// Receives the outer fold being tuned (`None` when tuning once on all rows)
/// and row indices into the full data.
pub type FoldAuditHook<'a> = &'a (dyn Fn(Option<usize>, &[usize]) + Sync);

/// Outer cross-validation with AVOA tuning.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate_tuned<T: Real>(
    x: &FeatureMatrix<T>,
    y: &LabelVector,
    plan: &FoldPlan,
    space: &HyperSpace,
    kind: ClassifierKind,
    base: &PipelineSpec,
    config: &TunerConfig,
    mode: TuningMode,
    audit: Option<FoldAuditHook<'_>>,
) -> Result<TunedCv, TunerError> {
    match mode {
        TuningMode::Once => {
            let whole = |rows: &[usize]| {
                if let Some(hook) = audit {
                    hook(None, rows);
                }
            };
            let result = tune(space, kind, base, x, y, config, Some(&whole))?;
            let report = cross_validate(x, y, &result.best_spec, plan)?;
            Ok(TunedCv {
                report,
                tuning: vec![result],
            })
        }
        TuningMode::PerFold => {
            let results: Mutex<Vec<Option<TuneResult>>> = Mutex::new(vec![None; plan.k]);
            let report = cross_validate_with(x, y, plan, &|fold, train| {
                let xt = x.select_rows(train).map_err(|e| e.to_string())?;
                let yt = y.select(train);
                let mapped = |local: &[usize]| {
                    if let Some(hook) = audit {
                        let global: Vec<usize> = local.iter().map(|&i| train[i]).collect();
                        hook(Some(fold), &global);
                    }
                };
                let r = tune(space, kind, base, &xt, &yt, config, Some(&mapped)).map_err(|e| e.to_string())?;
                let spec = r.best_spec.clone();
                results.lock().unwrap()[fold] = Some(r);
                Ok(spec)
            })?;
            let tuning = results.into_inner().unwrap().into_iter().map(|r| r.expect("every fold tuned")).collect();
            Ok(TunedCv { report, tuning })
        }
    }
}
