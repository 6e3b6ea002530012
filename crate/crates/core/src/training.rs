//! Training regimes: enhancer pre-training on manual weights (stage 1),
//! classifier training behind a frozen enhancer (stage 2), end-to-end
//! fine-tuning (stage 3), and the single-stage DANet-h and baseline CNN.
//!
//! Every run is deterministic for a given seed: batches are shuffled with a
//! per-epoch generator, per-sample gradients are summed in batch order, and
//! Adam starts from fresh moments at each stage.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{apply_weights, augment_noise, AttentionWeights};
use crate::ecg_io::{EcgRecord, Label};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvalInput, MetricsReport, Predictor, DEFAULT_THRESHOLD};
use crate::models::{record_tensor, Classifier, ClassifierModel, DanetModel, StageTag};
use crate::nn::{AdamConfig, AdamState, Gradients, Graph, ParamStore, Tensor};

/// One prepared record: preprocessed signal, manual weights, label.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub record: EcgRecord,
    pub weights: Option<AttentionWeights>,
    pub label: Option<Label>,
}

impl Example {
    fn weights(&self) -> Result<&AttentionWeights> {
        let w = self
            .weights
            .as_ref()
            .ok_or_else(|| Error::Data(format!("record {} has no manual weights", self.id)))?;
        if w.len() != self.record.frames() {
            return Err(Error::Data(format!(
                "record {}: {} manual weights for {} frames",
                self.id,
                w.len(),
                self.record.frames()
            )));
        }
        Ok(w)
    }

    fn label(&self) -> Result<Label> {
        self.label
            .ok_or_else(|| Error::Data(format!("record {} has no label", self.id)))
    }

    fn eval_input(&self) -> Result<EvalInput<'_>> {
        Ok(EvalInput {
            id: &self.id,
            record: &self.record,
            weights: self.weights.as_ref(),
            label: self.label()?,
        })
    }
}

/// Training-time augmentation; off by default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Standard deviation of additive Gaussian noise in mV; 0 disables it.
    pub noise_sigma_mv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub shuffle: bool,
    pub augment: AugmentConfig,
    /// Restore the parameters of the epoch with the best validation score
    /// (F_AVG, or MSE during pre-training) once training ends.
    pub keep_best_on_validation: bool,
    /// Save an in-progress checkpoint every N epochs (0 = never).
    pub checkpoint_every: usize,
    pub checkpoint_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            epochs: 100,
            adam: AdamConfig::default(),
            seed: 0,
            shuffle: true,
            augment: AugmentConfig::default(),
            keep_best_on_validation: false,
            checkpoint_every: 0,
            checkpoint_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be at least 1".into()));
        }
        if !(self.augment.noise_sigma_mv >= 0.0) {
            return Err(Error::Config("augmentation noise must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: StageTag,
    pub train_loss: Vec<f64>,
    /// Per-epoch validation score: MSE for pre-training, F_AVG otherwise.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub validation_curve: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_mse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_metrics: Option<MetricsReport>,
    /// 1-based epoch whose parameters were kept, when restoring the best.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    pub wall_time_s: f64,
}

impl StageReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

/// Loss curves of several stages as `stage,epoch,train_loss,validation`.
pub fn write_loss_csv(reports: &[StageReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let err = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    w.write_record(["stage", "epoch", "train_loss", "validation"]).map_err(err)?;
    for r in reports {
        for (i, loss) in r.train_loss.iter().enumerate() {
            let val = r.validation_curve.get(i).map(|v| v.to_string()).unwrap_or_default();
            w.write_record([r.stage.as_str(), &(i + 1).to_string(), &loss.to_string(), &val])
                .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn sequencing(expected: StageTag, found: StageTag) -> Error {
    Error::Sequencing {
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

/// Noise generator for one sample visit, independent of batch layout.
fn sample_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(((epoch as u64) << 32) | index as u64);
    rng
}

/// Direction in which a validation score improves.
#[derive(Clone, Copy)]
enum Better {
    Lower,
    Higher,
}

struct Loop<'c> {
    cfg: &'c TrainConfig,
    tag: StageTag,
}

impl Loop<'_> {
    /// Runs `cfg.epochs` epochs over `n` samples. `sample` returns the loss
    /// and gradients of one sample; `after_epoch` may return a validation
    /// score for the epoch.
    fn run<S, E>(&self, store: &mut ParamStore, n: usize, sample: S, mut after_epoch: E, better: Better) -> Result<LoopResult>
    where
        S: Fn(&ParamStore, usize, usize) -> Result<(f64, Gradients)>,
        E: FnMut(&ParamStore, usize) -> Result<Option<f64>>,
    {
        let cfg = self.cfg;
        cfg.validate()?;
        if n == 0 {
            return Err(Error::Data(format!("{}: empty training set", self.tag)));
        }
        let mut adam = AdamState::new(cfg.adam);
        let mut order: Vec<usize> = (0..n).collect();
        let mut losses = Vec::with_capacity(cfg.epochs);
        let mut curve = Vec::new();
        let mut best: Option<(f64, usize, Vec<f64>)> = None;

        for epoch in 0..cfg.epochs {
            if cfg.shuffle {
                order.sort_unstable();
                order.shuffle(&mut epoch_rng(cfg.seed, epoch));
            }
            let mut total = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                store.zero_grad();
                let scale = 1.0 / batch.len() as f64;
                for &i in batch {
                    let (loss, grads) = sample(store, i, epoch)?;
                    if !loss.is_finite() {
                        return Err(Error::Numeric(format!(
                            "{}: loss is {loss} at epoch {}, sample {i}",
                            self.tag,
                            epoch + 1
                        )));
                    }
                    total += loss;
                    grads.accumulate_into(store, scale);
                }
                adam.step(store)?;
            }
            let mean = total / n as f64;
            losses.push(mean);

            if let Some(score) = after_epoch(store, epoch)? {
                curve.push(score);
                let improved = match (&best, better) {
                    (None, _) => true,
                    (Some((b, _, _)), Better::Lower) => score < *b,
                    (Some((b, _, _)), Better::Higher) => score > *b,
                };
                if cfg.keep_best_on_validation && improved {
                    best = Some((score, epoch + 1, store.flatten()));
                }
                debug!("{} epoch {}: loss {mean:.6}, validation {score:.6}", self.tag, epoch + 1);
            } else {
                debug!("{} epoch {}: loss {mean:.6}", self.tag, epoch + 1);
            }
        }

        let best_epoch = match best {
            Some((_, epoch, values)) => {
                store.load_flat(&values)?;
                Some(epoch)
            }
            None => None,
        };
        Ok(LoopResult { losses, curve, best_epoch })
    }
}

struct LoopResult {
    losses: Vec<f64>,
    curve: Vec<f64>,
    best_epoch: Option<usize>,
}

fn input_for(ex: &Example, cfg: &TrainConfig, epoch: usize, index: usize) -> Result<Tensor> {
    if cfg.augment.noise_sigma_mv > 0.0 {
        let noisy = augment_noise(&ex.record, cfg.augment.noise_sigma_mv, &mut sample_rng(cfg.seed, epoch, index))?;
        Ok(record_tensor(&noisy))
    } else {
        Ok(record_tensor(&ex.record))
    }
}

fn mean_enhancer_mse(model: &DanetModel, data: &[Example]) -> Result<f64> {
    let mut total = 0.0;
    for ex in data {
        let w2 = model.enhance(&ex.record)?;
        total += crate::nn::mse_loss(w2.as_slice(), ex.weights()?.as_slice())?;
    }
    Ok(total / data.len().max(1) as f64)
}

fn validation_metrics(predictor: Predictor, data: &[Example]) -> Result<MetricsReport> {
    let inputs = data.iter().map(Example::eval_input).collect::<Result<Vec<_>>>()?;
    Ok(evaluate(predictor, &inputs, DEFAULT_THRESHOLD)?.metrics)
}

fn save_partial(model: &DanetModel, cfg: &TrainConfig, epoch: usize) -> Result<()> {
    if let Some(path) = &cfg.checkpoint_path {
        if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
            model.save(path)?;
        }
    }
    Ok(())
}

/// Stage 1: fit the enhancer output to the manual weights with MSE.
pub fn pretrain_enhancer(
    model: &mut DanetModel,
    data: &[Example],
    cfg: &TrainConfig,
    validation: Option<&[Example]>,
) -> Result<StageReport> {
    if model.stage != StageTag::Init {
        return Err(sequencing(StageTag::Init, model.stage));
    }
    for ex in data.iter().chain(validation.unwrap_or_default()) {
        ex.weights()?;
        model.check_enhancer_input(&ex.record).map_err(to_data)?;
    }
    let started = Instant::now();
    let enhancer = model.enhancer.clone();
    let targets: Vec<Tensor> = data
        .iter()
        .map(|ex| {
            let w = ex.weights.as_ref().unwrap().as_slice().to_vec();
            Tensor::new(vec![1, w.len()], w)
        })
        .collect::<Result<_>>()?;

    let sample = |store: &ParamStore, i: usize, epoch: usize| {
        let mut g = Graph::new(store);
        let x = g.input(input_for(&data[i], cfg, epoch, i)?);
        let out = enhancer.forward(&mut g, x)?;
        let t = g.input(targets[i].clone());
        let loss = g.mse(out.weights, t)?;
        Ok((g.value(loss).data()[0], g.backward(loss)?))
    };

    let strategy = model.strategy;
    let classifier = model.classifier.clone();
    let after = |store: &ParamStore, epoch: usize| -> Result<Option<f64>> {
        let snapshot = DanetModel {
            store: store.clone(),
            enhancer: enhancer.clone(),
            classifier: classifier.clone(),
            strategy,
            stage: StageTag::Init,
        };
        save_partial(&snapshot, cfg, epoch)?;
        match validation {
            Some(v) if !v.is_empty() => Ok(Some(mean_enhancer_mse(&snapshot, v)?)),
            _ => Ok(None),
        }
    };

    let lp = Loop { cfg, tag: StageTag::Stage1 };
    let result = lp.run(&mut model.store, data.len(), sample, after, Better::Lower)?;
    model.stage = StageTag::Stage1;
    let validation_mse = match validation {
        Some(v) if !v.is_empty() => Some(mean_enhancer_mse(model, v)?),
        _ => None,
    };
    info!("stage-1 finished: final loss {:.6}", result.losses.last().unwrap());
    Ok(StageReport {
        stage: StageTag::Stage1,
        train_loss: result.losses,
        validation_curve: result.curve,
        validation_mse,
        validation_metrics: None,
        best_epoch: result.best_epoch,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

fn to_data(e: Error) -> Error {
    match e {
        Error::Shape(msg) => Error::Data(msg),
        other => other,
    }
}

/// BCE step through a classifier for a precomputed input.
fn classifier_sample(store: &ParamStore, classifier: &Classifier, x: Tensor, label: Label) -> Result<(f64, Gradients)> {
    let mut g = Graph::new(store);
    let xn = g.input(x);
    let out = classifier.forward(&mut g, xn)?;
    let loss = g.bce(out.prob, label.target())?;
    Ok((g.value(loss).data()[0], g.backward(loss)?))
}

fn labels(data: &[Example]) -> Result<Vec<Label>> {
    data.iter().map(Example::label).collect()
}

/// Stage 2: train the classifier on `x * w2` with the enhancer frozen.
pub fn train_stage2(
    model: &mut DanetModel,
    data: &[Example],
    cfg: &TrainConfig,
    validation: Option<&[Example]>,
) -> Result<StageReport> {
    if model.stage != StageTag::Stage1 {
        return Err(sequencing(StageTag::Stage1, model.stage));
    }
    for ex in data.iter().chain(validation.unwrap_or_default()) {
        model.check_record(&ex.record).map_err(to_data)?;
        ex.label()?;
    }
    let started = Instant::now();
    let ys = labels(data)?;
    let enhancer_ids = model.enhancer_params();
    model.store.set_trainable(&enhancer_ids, false);

    // with the enhancer frozen and no augmentation, x * w2 never changes
    let precomputed: Option<Vec<Tensor>> = if cfg.augment.noise_sigma_mv == 0.0 {
        Some(
            data.iter()
                .map(|ex| Ok(record_tensor(&apply_weights(&ex.record, &model.enhance(&ex.record)?)?)))
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };

    let frozen = model.clone();
    let sample = |store: &ParamStore, i: usize, epoch: usize| match &precomputed {
        Some(inputs) => classifier_sample(store, &frozen.classifier, inputs[i].clone(), ys[i]),
        None => danet_sample(store, &frozen, input_for(&data[i], cfg, epoch, i)?, ys[i]),
    };
    let result = run_classification(model, cfg, StageTag::Stage2, data.len(), sample, validation);
    model.store.set_trainable(&enhancer_ids, true);
    let (result, metrics) = result?;
    model.stage = StageTag::Stage2;
    Ok(StageReport {
        stage: StageTag::Stage2,
        train_loss: result.losses,
        validation_curve: result.curve,
        validation_mse: None,
        validation_metrics: metrics,
        best_epoch: result.best_epoch,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

fn danet_sample(store: &ParamStore, model: &DanetModel, x: Tensor, label: Label) -> Result<(f64, Gradients)> {
    let mut g = Graph::new(store);
    let xn = g.input(x);
    let out = model.graph_forward(&mut g, xn)?;
    let loss = g.bce(out.classifier.prob, label.target())?;
    Ok((g.value(loss).data()[0], g.backward(loss)?))
}

fn run_classification<S>(
    model: &mut DanetModel,
    cfg: &TrainConfig,
    tag: StageTag,
    n: usize,
    sample: S,
    validation: Option<&[Example]>,
) -> Result<(LoopResult, Option<MetricsReport>)>
where
    S: Fn(&ParamStore, usize, usize) -> Result<(f64, Gradients)>,
{
    let template = model.clone();
    let after = |store: &ParamStore, epoch: usize| -> Result<Option<f64>> {
        let snapshot = DanetModel {
            store: store.clone(),
            stage: tag,
            ..template.clone()
        };
        save_partial(&DanetModel { stage: template.stage, ..snapshot.clone() }, cfg, epoch)?;
        match validation {
            Some(v) if !v.is_empty() => Ok(Some(validation_metrics(Predictor::Danet(&snapshot), v)?.f_avg)),
            _ => Ok(None),
        }
    };
    let lp = Loop { cfg, tag };
    let result = lp.run(&mut model.store, n, sample, after, Better::Higher)?;
    let metrics = match validation {
        Some(v) if !v.is_empty() => {
            let snapshot = DanetModel { stage: tag, ..model.clone() };
            Some(validation_metrics(Predictor::Danet(&snapshot), v)?)
        }
        _ => None,
    };
    Ok((result, metrics))
}

/// Stage 3: fine-tune enhancer and classifier together.
pub fn train_stage3(
    model: &mut DanetModel,
    data: &[Example],
    cfg: &TrainConfig,
    validation: Option<&[Example]>,
) -> Result<StageReport> {
    if model.stage != StageTag::Stage2 {
        return Err(sequencing(StageTag::Stage2, model.stage));
    }
    for ex in data.iter().chain(validation.unwrap_or_default()) {
        model.check_record(&ex.record).map_err(to_data)?;
        ex.label()?;
    }
    let started = Instant::now();
    let ys = labels(data)?;
    let all: Vec<_> = model.store.iter().map(|(id, _)| id).collect();
    model.store.set_trainable(&all, true);
    let template = model.clone();
    let sample = |store: &ParamStore, i: usize, epoch: usize| {
        danet_sample(store, &template, input_for(&data[i], cfg, epoch, i)?, ys[i])
    };
    let (result, metrics) = run_classification(model, cfg, StageTag::Stage3, data.len(), sample, validation)?;
    model.stage = StageTag::Stage3;
    Ok(StageReport {
        stage: StageTag::Stage3,
        train_loss: result.losses,
        validation_curve: result.curve,
        validation_mse: None,
        validation_metrics: metrics,
        best_epoch: result.best_epoch,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

fn train_classifier(
    model: &mut ClassifierModel,
    data: &[Example],
    cfg: &TrainConfig,
    validation: Option<&[Example]>,
    tag: StageTag,
) -> Result<StageReport> {
    if model.stage != StageTag::Init {
        return Err(sequencing(StageTag::Init, model.stage));
    }
    let hard = tag == StageTag::DanetH;
    for ex in data.iter().chain(validation.unwrap_or_default()) {
        model.check_record(&ex.record).map_err(to_data)?;
        ex.label()?;
        if hard {
            ex.weights()?;
        }
    }
    let started = Instant::now();
    let ys = labels(data)?;
    let amend = |ex: &Example, rec: &EcgRecord| -> Result<EcgRecord> {
        if hard {
            apply_weights(rec, ex.weights()?)
        } else {
            Ok(rec.clone())
        }
    };
    let precomputed: Option<Vec<Tensor>> = if cfg.augment.noise_sigma_mv == 0.0 {
        Some(
            data.iter()
                .map(|ex| Ok(record_tensor(&amend(ex, &ex.record)?)))
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };

    let classifier = model.classifier.clone();
    let sample = |store: &ParamStore, i: usize, epoch: usize| {
        let x = match &precomputed {
            Some(inputs) => inputs[i].clone(),
            None => {
                let ex = &data[i];
                let noisy = augment_noise(&ex.record, cfg.augment.noise_sigma_mv, &mut sample_rng(cfg.seed, epoch, i))?;
                record_tensor(&amend(ex, &noisy)?)
            }
        };
        classifier_sample(store, &classifier, x, ys[i])
    };

    let predictor_of = |m: &ClassifierModel| -> ClassifierModel { ClassifierModel { stage: tag, ..m.clone() } };
    let template = model.clone();
    let after = |store: &ParamStore, _epoch: usize| -> Result<Option<f64>> {
        match validation {
            Some(v) if !v.is_empty() => {
                let snap = predictor_of(&ClassifierModel {
                    store: store.clone(),
                    ..template.clone()
                });
                let p = if hard { Predictor::DanetH(&snap) } else { Predictor::Baseline(&snap) };
                Ok(Some(validation_metrics(p, v)?.f_avg))
            }
            _ => Ok(None),
        }
    };
    let lp = Loop { cfg, tag };
    let result = lp.run(&mut model.store, data.len(), sample, after, Better::Higher)?;
    model.stage = tag;
    let metrics = match validation {
        Some(v) if !v.is_empty() => {
            let p = if hard { Predictor::DanetH(model) } else { Predictor::Baseline(model) };
            Some(validation_metrics(p, v)?)
        }
        _ => None,
    };
    Ok(StageReport {
        stage: tag,
        train_loss: result.losses,
        validation_curve: result.curve,
        validation_mse: None,
        validation_metrics: metrics,
        best_epoch: result.best_epoch,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// DANet-h: the classifier trained on `x * w1`.
pub fn train_danet_h(
    model: &mut ClassifierModel,
    data: &[Example],
    cfg: &TrainConfig,
    validation: Option<&[Example]>,
) -> Result<StageReport> {
    train_classifier(model, data, cfg, validation, StageTag::DanetH)
}

/// The plain CNN on preprocessed records.
pub fn train_baseline(
    model: &mut ClassifierModel,
    data: &[Example],
    cfg: &TrainConfig,
    validation: Option<&[Example]>,
) -> Result<StageReport> {
    train_classifier(model, data, cfg, validation, StageTag::Baseline)
}
