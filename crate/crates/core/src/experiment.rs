//! Experiment configuration and the runs behind each command.
//!
//! A config is one JSON document. Unknown keys are rejected at every level.
//!
//! ```json
//! {
//!   "dataset": { "synthetic": { "num_identities": 64 } },
//!   "model": { "hidden": [128], "feature_dim": 32, "activation": "relu" },
//!   "train": { "loss": { "alpha": 1.0, "penalties": [ { "confidence_penalty": { "beta": 0.085 } } ] } },
//!   "eval": { "max_rank": 20, "rerank": true },
//!   "output_dir": "runs/cp",
//!   "seed": 7
//! }
//! ```
//!
//! `dataset` takes exactly one of `synthetic` (a generator spec),
//! `synthetic_file` (a dataset table), `market_dir` (a Market-style directory)
//! or `features` (`{"query": path, "gallery": path}`, evaluation only).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::data::{generate_confusable, load_market_dir, read_dataset_table, write_dataset_table, Dataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::eval::{cmc_svg, evaluate_features, metrics_rows, read_features, write_cmc_csv, write_metrics_csv, EvalReport, EvalSettings, FeatureSet};
use crate::losses::{LossConfig, Penalty};
use crate::model::{Activation, ModelSpec};
use crate::train::{eval_feature_sets, input_dim, train, TrainConfig, TrainOutcome, TrainReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    SyntheticFile(PathBuf),
    MarketDir(PathBuf),
    Features { query: PathBuf, gallery: PathBuf },
}

impl Default for DatasetSource {
    fn default() -> Self {
        Self::Synthetic(SyntheticSpec::default())
    }
}

impl DatasetSource {
    fn paths(&self) -> Vec<&Path> {
        match self {
            Self::Synthetic(_) => vec![],
            Self::SyntheticFile(p) | Self::MarketDir(p) => vec![p],
            Self::Features { query, gallery } => vec![query, gallery],
        }
    }
}

/// Encoder shape; the input width comes from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub activation: Activation,
    /// VIB latent width; defaults to half the feature width.
    pub latent_dim: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128],
            feature_dim: 32,
            activation: Activation::Relu,
            latent_dim: None,
        }
    }
}

impl ModelConfig {
    pub fn spec(&self, input_dim: usize, vib: bool) -> ModelSpec {
        let mut layer_sizes = vec![input_dim];
        layer_sizes.extend(&self.hidden);
        layer_sizes.push(self.feature_dim);
        ModelSpec {
            layer_sizes,
            activation: self.activation,
            latent_dim: vib.then(|| self.latent_dim.unwrap_or((self.feature_dim / 2).max(1))),
        }
    }
}

/// One arm of a comparison. `base_lr` overrides the shared training rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    pub loss: LossConfig,
    #[serde(default)]
    pub base_lr: Option<f64>,
}

/// Cross-entropy, label smoothing, confidence penalty and VIB with the
/// per-method learning rate and α selected on held-out synthetic seeds.
pub fn default_variants() -> Vec<Variant> {
    let v = |name: &str, alpha: f64, penalty: Option<Penalty>, lr: f64| Variant {
        name: name.into(),
        loss: LossConfig {
            alpha,
            penalties: penalty.into_iter().collect(),
        },
        base_lr: Some(lr),
    };
    vec![
        v("xent", 1.0, None, 3e-3),
        v("ls", 2.0, Some(Penalty::LabelSmoothing { beta: 0.1 }), 1e-2),
        v("cp", 6.0, Some(Penalty::ConfidencePenalty { beta: 0.085 }), 3e-3),
        v("vib", 1.0, Some(Penalty::Vib { beta: 0.01 }), 1e-2),
    ]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("reid-lab-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub dataset: DatasetSource,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    /// Arms for `compare`; empty means [`default_variants`].
    #[serde(default)]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub eval: EvalSettings,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            variants: Vec::new(),
            eval: EvalSettings::default(),
            output_dir: default_output_dir(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingPath(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Checks everything that can be checked without running: referenced
    /// paths, hyperparameters and variant definitions.
    pub fn validate(&self) -> Result<()> {
        for p in self.dataset.paths() {
            if !p.exists() {
                return Err(Error::MissingPath(p.to_path_buf()));
            }
        }
        if let DatasetSource::Synthetic(spec) = &self.dataset {
            spec.validate()?;
        }
        self.train.validate()?;
        if self.model.feature_dim == 0 || self.model.hidden.contains(&0) || self.model.latent_dim == Some(0) {
            return Err(Error::Config("model widths must be positive".into()));
        }
        if self.eval.max_rank == 0 {
            return Err(Error::Config("eval.max_rank must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.eval.rerank_params.lambda) {
            return Err(Error::Config("eval.rerank_params.lambda must lie in [0, 1]".into()));
        }
        for v in &self.variants {
            v.loss.validate()?;
            if v.base_lr.is_some_and(|lr| !(lr >= 0.0 && lr.is_finite())) {
                return Err(Error::Config(format!("variant {}: invalid base_lr", v.name)));
            }
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn variants(&self) -> Vec<Variant> {
        if self.variants.is_empty() {
            default_variants()
        } else {
            self.variants.clone()
        }
    }
}

/// Loads or generates the dataset. Feature-file sources have no dataset.
pub fn load_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    match &config.dataset {
        DatasetSource::Synthetic(spec) => generate_confusable(spec, config.seed),
        DatasetSource::SyntheticFile(p) => read_dataset_table(p),
        DatasetSource::MarketDir(p) => load_market_dir(p),
        DatasetSource::Features { .. } => Err(Error::Config(
            "a feature-file dataset can only be evaluated, not trained on".into(),
        )),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_train_report(path: impl AsRef<Path>, report: &TrainReport) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "lr", "mean_loss", "mean_entropy", "mean_sigma", "map", "rank1"])?;
    for r in &report.epochs {
        w.write_record([
            r.epoch.to_string(),
            r.lr.to_string(),
            r.mean_loss.to_string(),
            r.mean_entropy.to_string(),
            fmt_opt(r.mean_sigma),
            fmt_opt(r.map),
            fmt_opt(r.rank1),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parses a report written by [`write_train_report`] back into epoch records.
pub fn read_train_report(path: impl AsRef<Path>) -> Result<Vec<crate::train::EpochRecord>> {
    let path = path.as_ref();
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("bad number {s:?}: {e}")));
    let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            if rec.len() != 7 {
                return Err(bad(format!("expected 7 fields, got {}", rec.len())));
            }
            Ok(crate::train::EpochRecord {
                epoch: rec[0].parse().map_err(|e| bad(format!("bad epoch: {e}")))?,
                lr: num(&rec[1])?,
                mean_loss: num(&rec[2])?,
                mean_entropy: num(&rec[3])?,
                mean_sigma: opt(&rec[4])?,
                map: opt(&rec[5])?,
                rank1: opt(&rec[6])?,
            })
        })
        .collect()
}

/// Trains one model with `loss` and returns the outcome and its spec.
fn train_variant(config: &ExperimentConfig, dataset: &Dataset, loss: &LossConfig, base_lr: Option<f64>) -> Result<(TrainOutcome, ModelSpec)> {
    let mut tc = config.train_config();
    tc.loss = loss.clone();
    if let Some(lr) = base_lr {
        tc.base_lr = lr;
    }
    let spec = config.model.spec(input_dim(dataset, &tc.pipeline)?, loss.uses_vib());
    Ok((train(dataset, &spec, &tc)?, spec))
}

pub struct TrainRun {
    pub outcome: TrainOutcome,
    pub checkpoint: PathBuf,
    pub report: PathBuf,
}

/// Trains with `config.train`, then writes `checkpoint.json` and `train_report.csv`.
pub fn run_train(config: &ExperimentConfig) -> Result<TrainRun> {
    config.validate()?;
    let dataset = load_dataset(config)?;
    let (outcome, _) = train_variant(config, &dataset, &config.train.loss, None)?;
    create_dir(&config.output_dir)?;
    let checkpoint = config.output_dir.join("checkpoint.json");
    let report = config.output_dir.join("train_report.csv");
    Checkpoint::new(
        outcome.network.clone(),
        outcome.optimizer.clone(),
        outcome.class_ids.clone(),
        config.train.pipeline.clone(),
        outcome.report.epochs.len(),
    )
    .save(&checkpoint)?;
    write_train_report(&report, &outcome.report)?;
    Ok(TrainRun {
        outcome,
        checkpoint,
        report,
    })
}

/// Query and gallery features from feature files, or from a checkpoint
/// applied to the configured dataset.
pub fn feature_sets(config: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<(FeatureSet, FeatureSet)> {
    if let DatasetSource::Features { query, gallery } = &config.dataset {
        let q = read_features(query)?;
        let g = read_features(gallery)?;
        if q.features.cols() != g.features.cols() {
            return Err(Error::ShapeMismatch {
                context: "query vs gallery feature dimension",
                expected: q.features.cols(),
                actual: g.features.cols(),
            });
        }
        return Ok((q, g));
    }
    let path = checkpoint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.output_dir.join("checkpoint.json"));
    let ck = Checkpoint::load(&path)?;
    let dataset = load_dataset(config)?;
    dataset.validate_eval_splits()?;
    eval_feature_sets(&ck.network, &dataset, &ck.pipeline)
}

pub struct EvalRun {
    pub base: EvalReport,
    pub reranked: Option<EvalReport>,
    pub metrics: PathBuf,
    pub cmc: PathBuf,
    pub plot: PathBuf,
}

/// Writes `metrics.csv`, `cmc.csv` and `cmc.svg`.
pub fn run_evaluate(config: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<EvalRun> {
    config.validate()?;
    if let Some(p) = checkpoint {
        if !p.exists() {
            return Err(Error::MissingPath(p.to_path_buf()));
        }
    }
    let (q, g) = feature_sets(config, checkpoint)?;
    let (base, reranked) = evaluate_features(&q, &g, &config.eval)?;
    create_dir(&config.output_dir)?;
    let metrics = config.output_dir.join("metrics.csv");
    let cmc = config.output_dir.join("cmc.csv");
    let plot = config.output_dir.join("cmc.svg");
    let mut rows = metrics_rows(&base, "");
    if let Some(r) = &reranked {
        rows.extend(metrics_rows(r, "_rerank"));
    }
    write_metrics_csv(&metrics, &rows)?;
    write_cmc_csv(&cmc, &base.cmc, reranked.as_ref().map(|r| r.cmc.as_slice()))?;
    let mut curves: Vec<(&str, &[f64])> = vec![("L2", &base.cmc)];
    if let Some(r) = &reranked {
        curves.push(("re-ranked", &r.cmc));
    }
    std::fs::write(&plot, cmc_svg(&curves)).map_err(|e| Error::io(&plot, e))?;
    Ok(EvalRun {
        base,
        reranked,
        metrics,
        cmc,
        plot,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub variant: String,
    pub map: f64,
    pub rank1: f64,
    pub final_entropy: f64,
    pub final_loss: f64,
}

/// Trains and evaluates every variant with the shared seed and epoch budget;
/// writes `compare.csv`.
pub fn run_compare(config: &ExperimentConfig) -> Result<Vec<CompareRow>> {
    config.validate()?;
    let variants = config.variants();
    if variants.len() < 2 {
        return Err(Error::Config("compare needs at least two variants".into()));
    }
    let dataset = load_dataset(config)?;
    dataset.validate_eval_splits()?;
    let mut rows = Vec::with_capacity(variants.len());
    for v in &variants {
        log::info!("training variant {}", v.name);
        let (outcome, _) = train_variant(config, &dataset, &v.loss, v.base_lr)?;
        let (q, g) = eval_feature_sets(&outcome.network, &dataset, &config.train.pipeline)?;
        let (report, _) = evaluate_features(&q, &g, &config.eval)?;
        rows.push(CompareRow {
            variant: v.name.clone(),
            map: report.map,
            rank1: report.rank(1),
            final_entropy: outcome.report.final_entropy,
            final_loss: outcome.report.epochs.last().map_or(f64::NAN, |r| r.mean_loss),
        });
    }
    create_dir(&config.output_dir)?;
    let path = config.output_dir.join("compare.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["variant", "map", "rank1", "final_entropy", "final_loss"])?;
    for r in &rows {
        w.write_record([
            r.variant.clone(),
            r.map.to_string(),
            r.rank1.to_string(),
            r.final_entropy.to_string(),
            r.final_loss.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

/// Writes the synthetic dataset of `config` as a dataset table.
pub fn run_synth(config: &ExperimentConfig, path: impl AsRef<Path>) -> Result<Dataset> {
    config.validate()?;
    let DatasetSource::Synthetic(spec) = &config.dataset else {
        return Err(Error::Config("synth needs a synthetic dataset source".into()));
    };
    let ds = generate_confusable(spec, config.seed)?;
    if let Some(parent) = path.as_ref().parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_dataset_table(&ds, path)?;
    Ok(ds)
}
