//! Command-line front end: `preprocess`, `cv`, `tune`, `train`, `evaluate`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::avoa::AvoaParams;
use crate::dataset::{
    apply_minmax, fit_minmax, load_feature_table, make_stratified_folds, DatasetError, FeatureMatrix, LabelVector,
};
use crate::gbdt::GbdtParams;
use crate::metrics::{confusion, cross_validate, roc_auc, scalar_metrics, CvReport};
use crate::ngboost::{threshold_labels, NgbConfig};
use crate::pipeline::{fit_pipeline, ClassifierSpec, FittedPipeline, PipelineSpec};
use crate::tuner::{
    cross_validate_tuned, default_space, gbdt_reference_space, ngboost_reference_space, ClassifierKind, HyperSpace,
    TuneResult, TunerConfig, TuningMode,
};

pub const OUT_ENV: &str = "VULTUREBOOST_OUT";
pub const DEFAULT_OUT: &str = "vultureboost-out";

pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const SCHEMA: i32 = 2;
    pub const CV: i32 = 3;
    pub const TUNER: i32 = 4;
    pub const MISMATCH: i32 = 5;
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl std::fmt::Display) -> Self {
        Self {
            code,
            message: message.to_string(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "vultureboost", version, about = "AVOA-tuned NGBoost over PCA-reduced features")]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default: config `out`, then $VULTUREBOOST_OUT, then ./vultureboost-out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Min-Max scale a feature table and encode its labels.
    Preprocess(DataArgs),
    /// Stratified k-fold cross-validation of the pipeline.
    Cv(CvArgs),
    /// Search classifier hyperparameters with AVOA.
    Tune(TuneArgs),
    /// Fit the pipeline on a full table and save it.
    Train(TrainArgs),
    /// Score a saved pipeline on a labelled table.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub label_column: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ClassifierArg {
    Ngboost,
    Gbdt,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long, value_enum)]
    pub classifier: Option<ClassifierArg>,
    #[arg(long)]
    pub variance_ratio: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TunerArgs {
    #[arg(long)]
    pub population: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub inner_folds: Option<usize>,
    #[arg(long)]
    pub budget: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub tuner: TunerArgs,
    #[arg(long)]
    pub k: Option<usize>,
    /// Tune hyperparameters once on all rows before cross-validating.
    #[arg(long)]
    pub tune: bool,
    /// Tune separately inside every outer training partition.
    #[arg(long, conflicts_with = "tune")]
    pub tune_per_fold: bool,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub tuner: TunerArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// `best_params.json` from `tune`; its pipeline replaces the configured one.
    #[arg(long)]
    pub params: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// `model.json` from `train`.
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpacePreset {
    /// Only options this crate implements.
    Default,
    /// The published domains, unimplemented options included.
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TunerSection {
    pub population: usize,
    pub iterations: usize,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub l1: f64,
    pub l2: f64,
    pub w: f64,
    pub levy_beta: f64,
    pub inner_folds: usize,
    pub budget: Option<usize>,
    pub record_timing: bool,
    pub mode: TuningMode,
    pub space: SpacePreset,
}

impl Default for TunerSection {
    fn default() -> Self {
        let a = AvoaParams::<f64>::default();
        Self {
            population: a.population_size,
            iterations: a.max_iterations,
            p1: a.p1,
            p2: a.p2,
            p3: a.p3,
            l1: a.l1,
            l2: a.l2,
            w: a.w_exponent,
            levy_beta: a.levy_beta,
            inner_folds: 3,
            budget: None,
            record_timing: false,
            mode: TuningMode::Once,
            space: SpacePreset::Default,
        }
    }
}

/// Settings file. Nested tables may be written as dotted keys, e.g.
/// `ngboost.learning_rate = 0.1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    pub label_column: String,
    /// `[negative, positive]`; labels are encoded by first appearance when absent.
    pub class_names: Option<Vec<String>>,
    pub variance_ratio: f64,
    pub classifier: ClassifierKind,
    pub k: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub ngboost: NgbConfig,
    pub gbdt: GbdtParams,
    pub tuner: TunerSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: None,
            label_column: "label".into(),
            class_names: None,
            variance_ratio: 0.97,
            classifier: ClassifierKind::Ngboost,
            k: 5,
            seed: 0,
            out: None,
            ngboost: NgbConfig::default(),
            gbdt: GbdtParams::default(),
            tuner: TunerSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::new(exit::SCHEMA, format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::new(exit::SCHEMA, format!("invalid config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> CliResult<()> {
        if !(self.variance_ratio > 0.0 && self.variance_ratio <= 1.0) {
            return Err(CliError::new(
                exit::SCHEMA,
                format!("variance_ratio {} outside (0, 1]", self.variance_ratio),
            ));
        }
        if self.k < 2 {
            return Err(CliError::new(exit::SCHEMA, "k must be at least 2"));
        }
        match self.classifier {
            ClassifierKind::Ngboost => self.ngboost.validate().map_err(|e| CliError::new(exit::SCHEMA, e))?,
            ClassifierKind::Gbdt => self.gbdt.validate().map_err(|e| CliError::new(exit::SCHEMA, e))?,
        }
        Ok(())
    }

    pub fn pipeline_spec(&self) -> PipelineSpec {
        PipelineSpec {
            variance_ratio: Some(self.variance_ratio),
            classifier: match self.classifier {
                ClassifierKind::Ngboost => ClassifierSpec::Ngboost(self.ngboost.clone()),
                ClassifierKind::Gbdt => ClassifierSpec::Gbdt(self.gbdt.clone()),
            },
        }
    }

    pub fn tuner_config(&self) -> TunerConfig {
        let t = &self.tuner;
        TunerConfig {
            avoa: AvoaParams {
                population_size: t.population,
                max_iterations: t.iterations,
                p1: t.p1,
                p2: t.p2,
                p3: t.p3,
                l1: t.l1,
                l2: t.l2,
                w_exponent: t.w,
                levy_beta: t.levy_beta,
                seed: self.seed,
                parallel: true,
            },
            inner_folds: t.inner_folds,
            seed: self.seed,
            budget: t.budget,
            record_timing: t.record_timing,
        }
    }

    pub fn search_space(&self) -> HyperSpace {
        match (self.tuner.space, self.classifier) {
            (SpacePreset::Default, kind) => default_space(kind),
            (SpacePreset::Reference, ClassifierKind::Ngboost) => ngboost_reference_space(),
            (SpacePreset::Reference, ClassifierKind::Gbdt) => gbdt_reference_space(),
        }
    }

    fn apply_data(&mut self, a: &DataArgs) {
        if let Some(p) = &a.input {
            self.input = Some(p.clone());
        }
        if let Some(l) = &a.label_column {
            self.label_column = l.clone();
        }
    }

    fn apply_pipeline(&mut self, a: &PipelineArgs) {
        if let Some(c) = a.classifier {
            self.classifier = match c {
                ClassifierArg::Ngboost => ClassifierKind::Ngboost,
                ClassifierArg::Gbdt => ClassifierKind::Gbdt,
            };
        }
        if let Some(v) = a.variance_ratio {
            self.variance_ratio = v;
        }
    }

    fn apply_tuner(&mut self, a: &TunerArgs) {
        let t = &mut self.tuner;
        t.population = a.population.unwrap_or(t.population);
        t.iterations = a.iterations.unwrap_or(t.iterations);
        t.inner_folds = a.inner_folds.unwrap_or(t.inner_folds);
        if a.budget.is_some() {
            t.budget = a.budget;
        }
    }
}

fn out_dir(cli: &Cli, cfg: &PipelineConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.out.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::new(exit::IO, format!("cannot write {}: {e}", path.display()))
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
    log::info!("wrote {}", path.display());
    Ok(path)
}

fn write_json<S: Serialize>(dir: &Path, name: &str, value: &S) -> CliResult<PathBuf> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_file(dir, name, text.as_bytes())
}

fn load_data(cfg: &PipelineConfig, class_names: Option<&[String]>) -> CliResult<(FeatureMatrix<f64>, LabelVector)> {
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| CliError::new(exit::SCHEMA, "no input table given (--input or config `input`)"))?;
    let map = class_names.or(cfg.class_names.as_deref());
    load_feature_table::<f64>(input, &cfg.label_column, map).map_err(|e| CliError::new(exit::SCHEMA, e))
}

fn check_two_classes(y: &LabelVector) -> CliResult<()> {
    if y.class_names().len() != 2 {
        return Err(CliError::new(exit::SCHEMA, "the label column must contain two classes"));
    }
    Ok(())
}

/// Parses arguments from the process and runs; returns the exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::SCHEMA } else { exit::OK };
        }
    };
    match run(&cli) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match &cli.command {
        Command::Preprocess(a) => {
            cfg.apply_data(a);
            cfg.validate()?;
            cmd_preprocess(&cfg, &out_dir(cli, &cfg))
        }
        Command::Cv(a) => {
            cfg.apply_data(&a.data);
            cfg.apply_pipeline(&a.pipeline);
            cfg.apply_tuner(&a.tuner);
            if let Some(k) = a.k {
                cfg.k = k;
            }
            cfg.validate()?;
            let tuning = if a.tune_per_fold {
                Some(TuningMode::PerFold)
            } else if a.tune {
                Some(cfg.tuner.mode)
            } else {
                None
            };
            cmd_cv(&cfg, tuning, &out_dir(cli, &cfg))
        }
        Command::Tune(a) => {
            cfg.apply_data(&a.data);
            cfg.apply_pipeline(&a.pipeline);
            cfg.apply_tuner(&a.tuner);
            cfg.validate()?;
            cmd_tune(&cfg, &out_dir(cli, &cfg))
        }
        Command::Train(a) => {
            cfg.apply_data(&a.data);
            cfg.apply_pipeline(&a.pipeline);
            cfg.validate()?;
            cmd_train(&cfg, a.params.as_deref(), &out_dir(cli, &cfg))
        }
        Command::Evaluate(a) => {
            cfg.apply_data(&a.data);
            cmd_evaluate(&cfg, &a.model, &out_dir(cli, &cfg))
        }
    }
}

pub fn cmd_preprocess(cfg: &PipelineConfig, out: &Path) -> CliResult<()> {
    let (x, y) = load_data(cfg, None)?;
    let normalizer = fit_minmax(&x);
    let scaled = apply_minmax(&x, &normalizer).map_err(|e| CliError::new(exit::SCHEMA, e))?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = scaled.feature_names().iter().map(String::as_str).collect();
    header.push(&cfg.label_column);
    w.write_record(&header).expect("in-memory write");
    for (row, &label) in scaled.rows().zip(y.labels()) {
        let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        fields.push(y.decode(label).expect("encoded label").to_string());
        w.write_record(&fields).expect("in-memory write");
    }
    write_file(out, "normalized.csv", &w.into_inner().expect("in-memory flush"))?;

    let classes: Vec<_> = y
        .class_names()
        .iter()
        .enumerate()
        .map(|(code, name)| json!({"code": code, "name": name, "count": y.class_count(code as u8)}))
        .collect();
    write_json(out, "label_map.json", &json!({"label_column": cfg.label_column, "classes": classes}))?;
    write_json(
        out,
        "normalizer.json",
        &json!({"feature_names": x.feature_names(), "params": normalizer}),
    )?;
    Ok(())
}

fn write_cv_outputs(report: &CvReport, out: &Path) -> CliResult<()> {
    write_json(out, "cv_report.json", report)?;
    let mut roc = String::from("fold,fpr,tpr\n");
    for f in &report.folds {
        if let Some(r) = &f.roc {
            for (fpr, tpr) in &r.points {
                roc.push_str(&format!("{},{fpr},{tpr}\n", f.fold));
            }
        }
    }
    write_file(out, "roc.csv", roc.as_bytes())?;
    let folds: Vec<_> = report
        .folds
        .iter()
        .map(|f| json!({"fold": f.fold, "confusion": f.confusion}))
        .collect();
    write_json(
        out,
        "confusion_matrices.json",
        &json!({"class_names": report.class_names, "folds": folds, "overlapped": report.overlapped}),
    )?;
    Ok(())
}

fn write_tuning_outputs(result: &TuneResult, kind: ClassifierKind, out: &Path) -> CliResult<()> {
    let best = json!({
        "classifier": kind,
        "params": result.best_params,
        "fitness": result.best_fitness,
        "best_accuracy": 1.0 - result.best_fitness,
        "pipeline": result.best_spec,
    });
    write_json(out, "best_params.json", &best)?;
    let mut trials = String::new();
    for t in &result.trials {
        trials.push_str(&serde_json::to_string(t).expect("trial serializes"));
        trials.push('\n');
    }
    write_file(out, "trials.jsonl", trials.as_bytes())?;

    let a = &result.avoa;
    let mut csv = format!(
        "# avoa population={} iterations={} p1={} p2={} p3={} l1={} l2={} w={} levy_beta={} seed={}\n",
        a.population_size, a.max_iterations, a.p1, a.p2, a.p3, a.l1, a.l2, a.w_exponent, a.levy_beta, a.seed
    )
    .into_bytes();
    result
        .trace
        .write_csv(&mut csv, "best_accuracy", |f| 1.0 - f)
        .expect("in-memory write");
    write_file(out, "convergence.csv", &csv)?;
    Ok(())
}

pub fn cmd_cv(cfg: &PipelineConfig, tuning: Option<TuningMode>, out: &Path) -> CliResult<()> {
    let (x, y) = load_data(cfg, None)?;
    check_two_classes(&y)?;
    let plan = make_stratified_folds(&y, cfg.k, cfg.seed).map_err(|e| CliError::new(exit::SCHEMA, e))?;
    let spec = cfg.pipeline_spec();
    let report = match tuning {
        None => cross_validate(&x, &y, &spec, &plan).map_err(|e| CliError::new(exit::CV, e))?,
        Some(mode) => {
            let tuned = cross_validate_tuned(
                &x,
                &y,
                &plan,
                &cfg.search_space(),
                cfg.classifier,
                &spec,
                &cfg.tuner_config(),
                mode,
                None,
            )
            .map_err(|e| match e {
                crate::tuner::TunerError::Cv(cv) => CliError::new(exit::CV, cv),
                other => CliError::new(exit::TUNER, other),
            })?;
            match mode {
                TuningMode::Once => write_tuning_outputs(&tuned.tuning[0], cfg.classifier, &out.join("tuning"))?,
                TuningMode::PerFold => {
                    for (fold, r) in tuned.tuning.iter().enumerate() {
                        write_tuning_outputs(r, cfg.classifier, &out.join("tuning").join(format!("fold{fold}")))?;
                    }
                }
            }
            tuned.report
        }
    };
    write_cv_outputs(&report, out)?;
    if let Some(acc) = report.summary.accuracy.mean {
        log::info!("mean accuracy {acc:.5}");
    }
    Ok(())
}

pub fn cmd_tune(cfg: &PipelineConfig, out: &Path) -> CliResult<()> {
    let (x, y) = load_data(cfg, None)?;
    check_two_classes(&y)?;
    let result = crate::tuner::tune(
        &cfg.search_space(),
        cfg.classifier,
        &cfg.pipeline_spec(),
        &x,
        &y,
        &cfg.tuner_config(),
        None,
    )
    .map_err(|e| CliError::new(exit::TUNER, e))?;
    write_tuning_outputs(&result, cfg.classifier, out)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::new(exit::SCHEMA, format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::new(exit::SCHEMA, format!("invalid {}: {e}", path.display())))
}

pub fn cmd_train(cfg: &PipelineConfig, params: Option<&Path>, out: &Path) -> CliResult<()> {
    let spec = match params {
        Some(p) => {
            #[derive(Deserialize)]
            struct Best {
                pipeline: PipelineSpec,
            }
            read_json::<Best>(p)?.pipeline
        }
        None => cfg.pipeline_spec(),
    };
    let (x, y) = load_data(cfg, None)?;
    check_two_classes(&y)?;
    let fitted = fit_pipeline(&x, &y, &spec).map_err(|e| CliError::new(exit::SCHEMA, e))?;
    write_json(out, "model.json", &fitted)?;
    Ok(())
}

pub fn cmd_evaluate(cfg: &PipelineConfig, model: &Path, out: &Path) -> CliResult<()> {
    let fitted: FittedPipeline<f64> = read_json(model)?;
    let (x, y) = load_data(cfg, Some(&fitted.class_names)).map_err(|e| {
        if e.message.contains("not listed in the class map") {
            CliError::new(exit::MISMATCH, e)
        } else {
            e
        }
    })?;
    if x.n_features() != fitted.n_features {
        return Err(CliError::new(
            exit::MISMATCH,
            DatasetError::FeatureCountMismatch {
                expected: fitted.n_features,
                found: x.n_features(),
            },
        ));
    }
    let proba = fitted.predict_proba(&x).map_err(|e| {
        let code = if e.is_dimension_mismatch() { exit::MISMATCH } else { exit::SCHEMA };
        CliError::new(code, e)
    })?;
    let pred = threshold_labels(&proba, 0.5);
    let cm = confusion(&pred, y.labels()).expect("aligned predictions");
    let roc = roc_auc(&proba, y.labels()).ok();
    let report = json!({
        "n_samples": x.n_samples(),
        "class_names": fitted.class_names,
        "confusion": cm,
        "metrics": scalar_metrics(&cm),
        "auc": roc.as_ref().map_or(json!("undefined"), |r| json!(r.auc)),
        "roc": roc.as_ref().map(|r| &r.points),
    });
    write_json(out, "metrics.json", &report)?;
    Ok(())
}
