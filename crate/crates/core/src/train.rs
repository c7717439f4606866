//! Training loop: per-sample forward/backward, batch reduction, AMSGrad.
//!
//! Per-sample gradients are computed in parallel and summed in sample order,
//! so results do not depend on the number of worker threads. Every random
//! draw comes from a stream forked by (purpose, epoch, sample index).

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ImagePipeline, Payload, Sample, Split};
use crate::error::{Error, Result};
use crate::eval::{evaluate_features, EvalSettings, FeatureSet};
use crate::losses::{compose_losses, LossConfig, LossOutput};
use crate::matrix::Matrix;
use crate::model::{init_model, ClassifierHead, EncoderModel, ModelSpec, Network};
use crate::optim::{LrSchedule, OptimizerState};
use crate::rng::RngStream;
use crate::vib::{reparameterize, reparameterize_with_noise, LatentTerm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub base_lr: f64,
    pub schedule: LrSchedule,
    pub epochs: usize,
    pub batch_size: usize,
    /// Set by the surrounding experiment, never read from a config file.
    #[serde(skip)]
    pub seed: u64,
    /// Evaluate on query/gallery every n epochs; 0 disables.
    pub eval_every: usize,
    /// Reparameterized draws averaged per sample in VIB mode.
    pub vib_samples: usize,
    pub pipeline: ImagePipeline,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            base_lr: 5e-4,
            schedule: LrSchedule::default(),
            epochs: 60,
            batch_size: 32,
            seed: 0,
            eval_every: 0,
            vib_samples: 1,
            pipeline: ImagePipeline::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.schedule.validate()?;
        if self.epochs == 0 || self.batch_size == 0 || self.vib_samples == 0 {
            return Err(Error::Config("epochs, batch_size and vib_samples must be >= 1".into()));
        }
        if !(self.base_lr >= 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("invalid base_lr {}", self.base_lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub mean_entropy: f64,
    /// Mean posterior σ (VIB only).
    pub mean_sigma: Option<f64>,
    pub map: Option<f64>,
    pub rank1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Mean predicted entropy over the training split after the last epoch,
    /// with augmentation and sampling noise switched off.
    pub final_entropy: f64,
}

/// Statistics of one sample or the mean over a batch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossStats {
    pub loss: f64,
    pub entropy: f64,
    pub mean_sigma: Option<f64>,
}

/// Source of reparameterization noise.
pub enum Noise<'a> {
    Draw(&'a mut RngStream),
    Fixed(&'a [f64]),
}

fn check_mode(net: &Network, loss: &LossConfig) -> Result<()> {
    match (net.encoder.vib.is_some(), loss.uses_vib()) {
        (true, false) => Err(Error::Config("model has a VIB head but the loss has no VIB term".into())),
        (false, true) => Err(Error::Config("VIB loss requires a model with a VIB head".into())),
        _ => Ok(()),
    }
}

/// Loss at one input. When `grads` is given, parameter gradients scaled by
/// `weight` are added to it.
pub fn sample_loss(
    net: &Network,
    input: &[f64],
    label: usize,
    loss: &LossConfig,
    noise: Noise<'_>,
    weight: f64,
    grads: Option<&mut Network>,
) -> Result<LossStats> {
    check_mode(net, loss)?;
    let (feature, cache) = net.encoder.forward(input)?;
    let head = &net.head.layer;

    let (out, embedding, latent): (LossOutput, Vec<f64>, _) = match &net.encoder.vib {
        None => {
            let logits = net.head.logits(&feature)?;
            (compose_losses(loss, &logits, label, None)?, feature.clone(), None)
        }
        Some(_) => {
            let (gaussian, raw) = net.encoder.latent(&feature)?;
            let sample = match noise {
                Noise::Draw(rng) => reparameterize(&gaussian, rng),
                Noise::Fixed(eps) => reparameterize_with_noise(&gaussian, eps.to_vec())?,
            };
            let logits = net.head.logits(&sample.z)?;
            let pull_back = |g: &[f64]| head.pull_back(g);
            let term = LatentTerm {
                gaussian: &gaussian,
                sample: &sample,
                pull_back: &pull_back,
            };
            let out = compose_losses(loss, &logits, label, Some(&term))?;
            let mean_sigma = gaussian.sigma().iter().sum::<f64>() / gaussian.dim() as f64;
            (out, sample.z, Some((raw, mean_sigma)))
        }
    };

    if let Some(grads) = grads {
        let scaled = |v: &[f64]| v.iter().map(|g| g * weight).collect::<Vec<_>>();
        let grad_logits = scaled(&out.grad_logits);
        grads.head.layer.accumulate(&grad_logits, &embedding);
        let grad_feature = match &latent {
            None => head.pull_back(&grad_logits),
            Some((raw, _)) => {
                let gm = scaled(out.grad_latent_mu.as_deref().expect("VIB output"));
                let gs = scaled(out.grad_latent_sigma.as_deref().expect("VIB output"));
                net.encoder.backward_latent(&feature, raw, &gm, &gs, &mut grads.encoder)
            }
        };
        net.encoder.backward(&cache, &grad_feature, &mut grads.encoder);
    }

    Ok(LossStats {
        loss: out.loss,
        entropy: out.predicted_entropy,
        mean_sigma: latent.map(|(_, s)| s),
    })
}

/// One prepared training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Vec<f64>,
    pub label: usize,
}

fn mean_stats(stats: &[LossStats]) -> LossStats {
    let n = stats.len() as f64;
    let sigma: Option<Vec<f64>> = stats.iter().map(|s| s.mean_sigma).collect();
    LossStats {
        loss: stats.iter().map(|s| s.loss).sum::<f64>() / n,
        entropy: stats.iter().map(|s| s.entropy).sum::<f64>() / n,
        mean_sigma: sigma.map(|s| s.iter().sum::<f64>() / n),
    }
}

/// Mean loss and mean parameter gradient over a batch. `noise[i]` supplies the
/// draws for example `i`.
pub fn batch_gradient(
    net: &Network,
    batch: &[Example],
    loss: &LossConfig,
    vib_samples: usize,
    noise: Vec<RngStream>,
) -> Result<(Network, LossStats)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if noise.len() != batch.len() {
        return Err(Error::invalid("one noise stream per example is required"));
    }
    let draws = if net.encoder.vib.is_some() { vib_samples.max(1) } else { 1 };
    let per_sample: Vec<(Network, LossStats)> = batch
        .par_iter()
        .zip(noise)
        .map(|(ex, mut rng)| {
            let mut g = net.zeros_like();
            let mut stats = Vec::with_capacity(draws);
            for _ in 0..draws {
                let s = sample_loss(net, &ex.input, ex.label, loss, Noise::Draw(&mut rng), 1.0 / draws as f64, Some(&mut g))?;
                stats.push(s);
            }
            Ok((g, mean_stats(&stats)))
        })
        .collect::<Result<_>>()?;

    let mut total = net.zeros_like();
    let mut stats = Vec::with_capacity(batch.len());
    for (g, s) in &per_sample {
        total.add_assign(g);
        stats.push(*s);
    }
    total.scale(1.0 / batch.len() as f64);
    Ok((total, mean_stats(&stats)))
}

/// One AMSGrad update on the batch. Per-example noise streams are forked from `rng`.
pub fn train_step(
    net: &mut Network,
    state: &mut OptimizerState,
    batch: &[Example],
    loss: &LossConfig,
    lr: f64,
    rng: &RngStream,
) -> Result<LossStats> {
    let noise = (0..batch.len()).map(|i| rng.fork(i as u64)).collect();
    let (grads, stats) = batch_gradient(net, batch, loss, 1, noise)?;
    apply_update(net, state, &grads, lr)?;
    Ok(stats)
}

fn apply_update(net: &mut Network, state: &mut OptimizerState, grads: &Network, lr: f64) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::NonFinite {
            context: "parameter gradient",
            index: grads.to_flat().iter().position(|v| !v.is_finite()).unwrap_or(0),
        });
    }
    let g = grads.param_slices();
    let mut p = net.param_slices_mut();
    state.update_slices(&mut p, &g, lr)
}

/// Network input for a sample; `augment` is only passed for training images.
pub fn prepare_input(sample: &Sample, pipeline: &ImagePipeline, augment: Option<&mut RngStream>) -> Result<Vec<f64>> {
    match &sample.payload {
        Payload::Features(v) => Ok(v.clone()),
        Payload::Image(img) => pipeline.prepare(img, augment),
    }
}

/// Input width the encoder needs for this dataset.
pub fn input_dim(dataset: &Dataset, pipeline: &ImagePipeline) -> Result<usize> {
    let first = dataset
        .train
        .iter()
        .chain(&dataset.query)
        .chain(&dataset.gallery)
        .next()
        .ok_or_else(|| Error::invalid("dataset is empty"))?;
    Ok(match &first.payload {
        Payload::Features(v) => v.len(),
        Payload::Image(_) => pipeline.input_dim(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// The encoder output.
    Deterministic,
    /// The VIB posterior mean.
    VibMean,
}

impl FeatureMode {
    pub fn for_model(model: &EncoderModel) -> Self {
        if model.vib.is_some() {
            Self::VibMean
        } else {
            Self::Deterministic
        }
    }
}

/// Ranking features, one row per sample in input order. No noise is drawn.
pub fn extract_features(model: &EncoderModel, samples: &[Sample], pipeline: &ImagePipeline, mode: FeatureMode) -> Result<Matrix> {
    if mode == FeatureMode::VibMean && model.vib.is_none() {
        return Err(Error::Config("vib_mean features need a model with a VIB head".into()));
    }
    let width = match mode {
        FeatureMode::Deterministic => model.spec.feature_dim(),
        FeatureMode::VibMean => model.spec.embedding_dim(),
    };
    let rows: Vec<Vec<f64>> = samples
        .par_iter()
        .map(|s| {
            let input = prepare_input(s, pipeline, None)?;
            let (feature, _) = model.forward(&input)?;
            Ok(match mode {
                FeatureMode::Deterministic => feature,
                FeatureMode::VibMean => model.latent(&feature)?.0.mu().to_vec(),
            })
        })
        .collect::<Result<_>>()?;
    Matrix::new(samples.len(), width, rows.concat())
}

/// Query and gallery feature sets in the model's default mode.
pub fn eval_feature_sets(net: &Network, dataset: &Dataset, pipeline: &ImagePipeline) -> Result<(FeatureSet, FeatureSet)> {
    let mode = FeatureMode::for_model(&net.encoder);
    let q = extract_features(&net.encoder, &dataset.query, pipeline, mode)?;
    let g = extract_features(&net.encoder, &dataset.gallery, pipeline, mode)?;
    Ok((
        FeatureSet::new(q, dataset.metas(Split::Query))?,
        FeatureSet::new(g, dataset.metas(Split::Gallery))?,
    ))
}

/// Mean predicted entropy with the deterministic embedding (posterior mean in
/// VIB mode).
pub fn mean_predicted_entropy(net: &Network, examples: &[Example]) -> Result<f64> {
    let mode = FeatureMode::for_model(&net.encoder);
    let entropies: Vec<f64> = examples
        .par_iter()
        .map(|ex| {
            let (feature, _) = net.encoder.forward(&ex.input)?;
            let emb = match mode {
                FeatureMode::Deterministic => feature,
                FeatureMode::VibMean => net.encoder.latent(&feature)?.0.mu().to_vec(),
            };
            let p = crate::numerics::softmax(&net.head.logits(&emb)?)?;
            crate::losses::entropy(&p)
        })
        .collect::<Result<_>>()?;
    Ok(entropies.iter().sum::<f64>() / entropies.len() as f64)
}

/// Everything a finished run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub network: Network,
    pub optimizer: OptimizerState,
    /// Training identity of each class index.
    pub class_ids: Vec<u32>,
    pub report: TrainReport,
}

/// Class index for every training identity, in ascending identity order.
pub fn label_map(train: &[Sample]) -> BTreeMap<u32, usize> {
    let ids: std::collections::BTreeSet<u32> = train.iter().map(|s| s.identity).collect();
    ids.into_iter().enumerate().map(|(i, id)| (id, i)).collect()
}

pub fn train(dataset: &Dataset, spec: &ModelSpec, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    spec.validate()?;
    if dataset.train.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    let labels = label_map(&dataset.train);
    if labels.len() < 2 {
        return Err(Error::invalid("training needs at least two identities"));
    }
    let needed = input_dim(dataset, &config.pipeline)?;
    if needed != spec.input_dim() {
        return Err(Error::ShapeMismatch {
            context: "model input width vs dataset",
            expected: needed,
            actual: spec.input_dim(),
        });
    }
    if spec.latent_dim.is_some() != config.loss.uses_vib() {
        return Err(Error::Config("a latent dimension must be configured exactly when the loss has a VIB term".into()));
    }
    let evaluating = config.eval_every > 0;
    if evaluating {
        dataset.validate_eval_splits()?;
    }

    let root = RngStream::new(config.seed);
    let encoder = init_model(spec, rand::RngCore::next_u64(&mut root.fork_named("encoder")))?;
    let head = ClassifierHead::init(spec.embedding_dim(), labels.len(), rand::RngCore::next_u64(&mut root.fork_named("head")))?;
    let mut net = Network::new(encoder, head)?;
    let mut state = OptimizerState::new(net.num_params());

    let label_of: Vec<usize> = dataset.train.iter().map(|s| labels[&s.identity]).collect();
    let has_images = dataset.train.iter().any(|s| matches!(s.payload, Payload::Image(_)));
    let plain: Option<Vec<Vec<f64>>> = if has_images {
        None
    } else {
        Some(
            dataset
                .train
                .iter()
                .map(|s| prepare_input(s, &config.pipeline, None))
                .collect::<Result<_>>()?,
        )
    };

    let shuffle = root.fork_named("shuffle");
    let augment = root.fork_named("augment");
    let noise = root.fork_named("noise");
    let n = dataset.train.len();
    let mut records = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let lr = config.schedule.lr_at(epoch, config.base_lr);
        let order = shuffle.fork(epoch as u64).permutation(n);
        let epoch_aug = augment.fork(epoch as u64);
        let epoch_noise = noise.fork(epoch as u64);
        let mut sums = (0.0, 0.0, 0.0);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Example> = chunk
                .par_iter()
                .map(|&i| {
                    let input = match &plain {
                        Some(inputs) => inputs[i].clone(),
                        None => prepare_input(&dataset.train[i], &config.pipeline, Some(&mut epoch_aug.fork(i as u64)))?,
                    };
                    Ok(Example { input, label: label_of[i] })
                })
                .collect::<Result<_>>()?;
            let streams = chunk.iter().map(|&i| epoch_noise.fork(i as u64)).collect();
            let (grads, stats) = batch_gradient(&net, &batch, &config.loss, config.vib_samples, streams)?;
            apply_update(&mut net, &mut state, &grads, lr)?;
            let w = chunk.len() as f64;
            sums.0 += stats.loss * w;
            sums.1 += stats.entropy * w;
            sums.2 += stats.mean_sigma.unwrap_or(0.0) * w;
        }
        let (map, rank1) = if evaluating && (epoch % config.eval_every == 0 || epoch == config.epochs) {
            let (q, g) = eval_feature_sets(&net, dataset, &config.pipeline)?;
            let (report, _) = evaluate_features(&q, &g, &EvalSettings::default())?;
            (Some(report.map), Some(report.rank(1)))
        } else {
            (None, None)
        };
        let record = EpochRecord {
            epoch,
            lr,
            mean_loss: sums.0 / n as f64,
            mean_entropy: sums.1 / n as f64,
            mean_sigma: net.encoder.vib.as_ref().map(|_| sums.2 / n as f64),
            map,
            rank1,
        };
        log::info!(
            "epoch {epoch}: lr {lr:.2e} loss {:.5} entropy {:.5}",
            record.mean_loss,
            record.mean_entropy
        );
        records.push(record);
    }

    let examples: Vec<Example> = dataset
        .train
        .iter()
        .zip(&label_of)
        .map(|(s, &label)| Ok(Example { input: prepare_input(s, &config.pipeline, None)?, label }))
        .collect::<Result<_>>()?;
    let final_entropy = mean_predicted_entropy(&net, &examples)?;
    Ok(TrainOutcome {
        network: net,
        optimizer: state,
        class_ids: labels.keys().copied().collect(),
        report: TrainReport {
            epochs: records,
            final_entropy,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_confusable, SyntheticSpec};
    use crate::losses::Penalty;
    use crate::model::Activation;
    use crate::numerics::{finite_diff_grad, relative_error};

    fn toy_dataset(seed: u64) -> Dataset {
        let mut rng = RngStream::new(seed);
        let centers = [[3.0, 0.0], [-3.0, 0.0], [0.0, 3.0]];
        let mut ds = Dataset::default();
        for (id, c) in centers.iter().enumerate() {
            for k in 0..20 {
                let x = vec![c[0] + 0.3 * rng.normal(), c[1] + 0.3 * rng.normal()];
                let s = Sample {
                    payload: Payload::Features(x),
                    identity: id as u32,
                    camera: k % 2,
                };
                match k {
                    0 => ds.query.push(s.clone()),
                    1..=4 => ds.gallery.push(s.clone()),
                    _ => {}
                }
                ds.train.push(s);
            }
        }
        ds
    }

    fn spec(latent: Option<usize>) -> ModelSpec {
        ModelSpec {
            layer_sizes: vec![2, 8, 4],
            activation: Activation::Tanh,
            latent_dim: latent,
        }
    }

    fn config(loss: LossConfig, epochs: usize) -> TrainConfig {
        TrainConfig {
            loss,
            base_lr: 1e-2,
            epochs,
            batch_size: 8,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn separable_toy_reaches_low_loss() {
        let out = train(&toy_dataset(1), &spec(None), &config(LossConfig::default(), 50)).unwrap();
        assert_eq!(out.report.epochs.len(), 50);
        let last = out.report.epochs.last().unwrap();
        assert!(last.mean_loss < 0.1, "{}", last.mean_loss);
        assert_eq!(out.class_ids, vec![0, 1, 2]);
    }

    #[test]
    fn runs_are_bit_identical() {
        let ds = toy_dataset(2);
        let cfg = TrainConfig {
            eval_every: 2,
            ..config(LossConfig::default().with(Penalty::Vib { beta: 0.01 }), 5)
        };
        let a = train(&ds, &spec(Some(3)), &cfg).unwrap();
        let b = train(&ds, &spec(Some(3)), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.report.epochs.len(), 5);
        assert!(a.report.epochs[1].map.is_some());
        assert!(a.report.epochs[0].map.is_none());
        assert!(a.report.epochs[0].mean_sigma.is_some());
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let ds = toy_dataset(4);
        let cfg = config(LossConfig::default(), 3);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| train(&ds, &spec(None), &cfg).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn lr_zero_keeps_parameters() {
        let ds = toy_dataset(5);
        let root = RngStream::new(0);
        let mut net = Network::new(init_model(&spec(None), 1).unwrap(), ClassifierHead::init(4, 3, 1).unwrap()).unwrap();
        let before = net.clone();
        let batch: Vec<Example> = ds.train[..6]
            .iter()
            .map(|s| Example {
                input: prepare_input(s, &ImagePipeline::default(), None).unwrap(),
                label: s.identity as usize,
            })
            .collect();
        let mut state = OptimizerState::new(net.num_params());
        let stats = train_step(&mut net, &mut state, &batch, &LossConfig::default(), 0.0, &root).unwrap();
        assert!(stats.loss > 0.0);
        assert_eq!(net, before);
    }

    #[test]
    fn batch_gradient_matches_finite_differences() {
        let ds = toy_dataset(6);
        for loss in [
            LossConfig::default(),
            LossConfig::default().with(Penalty::LabelSmoothing { beta: 0.1 }).with(Penalty::ConfidencePenalty { beta: 0.085 }),
            LossConfig::default().with(Penalty::Vib { beta: 0.01 }),
        ] {
            let latent = loss.uses_vib().then_some(3);
            let s = spec(latent);
            let net = Network::new(init_model(&s, 7).unwrap(), ClassifierHead::init(s.embedding_dim(), 3, 7).unwrap()).unwrap();
            let batch: Vec<Example> = ds.train[..5]
                .iter()
                .map(|s| Example {
                    input: prepare_input(s, &ImagePipeline::default(), None).unwrap(),
                    label: s.identity as usize,
                })
                .collect();
            let streams = || (0..5).map(|i| RngStream::new(11).fork(i)).collect::<Vec<_>>();
            let (grads, _) = batch_gradient(&net, &batch, &loss, 1, streams()).unwrap();
            let f = |theta: &[f64]| {
                let mut n = net.clone();
                n.set_flat(theta).unwrap();
                batch_gradient(&n, &batch, &loss, 1, streams()).unwrap().1.loss
            };
            let numeric = finite_diff_grad(f, &net.to_flat(), 1e-5).unwrap();
            let err = relative_error(&grads.to_flat(), &numeric);
            assert!(err < 1e-6, "{}: {err}", loss.name());
        }
    }

    #[test]
    fn feature_extraction_modes() {
        let ds = toy_dataset(7);
        let s = spec(Some(3));
        let mut enc = init_model(&s, 1).unwrap();
        let p = ImagePipeline::default();
        let a = extract_features(&enc, &ds.query, &p, FeatureMode::VibMean).unwrap();
        let b = extract_features(&enc, &ds.query, &p, FeatureMode::VibMean).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cols(), 3);
        let vib = enc.vib.as_mut().unwrap();
        vib.mean.weights.fill(0.0);
        vib.mean.bias.fill(0.0);
        let z = extract_features(&enc, &ds.query, &p, FeatureMode::VibMean).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 0.0));
        let plain = init_model(&spec(None), 1).unwrap();
        assert!(extract_features(&plain, &ds.query, &p, FeatureMode::VibMean).is_err());
        assert_eq!(extract_features(&plain, &ds.query, &p, FeatureMode::Deterministic).unwrap().cols(), 4);
    }

    #[test]
    fn confidence_penalty_raises_entropy() {
        let spec_ds = SyntheticSpec {
            num_identities: 16,
            confusable_pairs: 4,
            ..SyntheticSpec::default()
        };
        let ds = generate_confusable(&spec_ds, 1).unwrap();
        let s = ModelSpec {
            layer_sizes: vec![32, 32, 16],
            activation: Activation::Relu,
            latent_dim: None,
        };
        let run = |loss| train(&ds, &s, &config(loss, 20)).unwrap().report.final_entropy;
        let xent = run(LossConfig::default());
        let cp = run(LossConfig::default().with(Penalty::ConfidencePenalty { beta: 0.085 }));
        assert!(cp > xent, "cp {cp} xent {xent}");
    }

    #[test]
    fn rejects_inconsistent_setup() {
        let ds = toy_dataset(8);
        let vib = LossConfig::default().with(Penalty::Vib { beta: 0.01 });
        assert!(train(&ds, &spec(None), &config(vib, 1)).is_err());
        assert!(train(&ds, &spec(Some(2)), &config(LossConfig::default(), 1)).is_err());
        let wide = ModelSpec {
            layer_sizes: vec![3, 4],
            ..spec(None)
        };
        assert!(train(&ds, &wide, &config(LossConfig::default(), 1)).is_err());
        assert!(train(&Dataset::default(), &spec(None), &config(LossConfig::default(), 1)).is_err());
        let bad = TrainConfig {
            batch_size: 0,
            ..config(LossConfig::default(), 1)
        };
        assert!(train(&ds, &spec(None), &bad).is_err());
    }
}
