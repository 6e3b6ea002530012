use std::path::{Path, PathBuf};

use danet::attention::AttentionWeights;
use danet::ecg_io::{load_record, save_record, synth_dataset, write_labels, DatasetManifest, EcgRecord, SynthParams};
use danet::evaluation::{evaluate, EvalInput, Evaluation, Predictor};
use danet::models::{load_checkpoint, ClassifierConfig, ClassifierModel, DanetModel, EnhancerConfig, LeadStrategy, StageTag};
use danet::pipeline::{delineate_record, prepare_dataset, prepare_record, PrepareConfig};
use danet::signal::preprocess as preprocess_record;
use danet::training::{self, Example, StageReport, TrainConfig};
use danet::{Error, Result};
use log::{info, warn};
use serde::de::DeserializeOwned;

use crate::args::*;
use crate::run::{checkpoint_file, record_stage};
use crate::{CliResult, Failure};

pub fn synth(a: SynthArgs, seed: u64) -> CliResult {
    let mut params = SynthParams {
        fs: a.fs,
        duration: a.duration,
        noise_sigma: a.noise,
        rr_jitter: a.rr_jitter,
        ..SynthParams::default()
    };
    params.apc_config.prematurity = a.prematurity;
    let ds = synth_dataset(a.n, a.apc_fraction, &params, seed, &a.out)?;
    info!("wrote {} records to {}", a.n, ds.records_dir.display());
    println!("{}", ds.manifest.display());
    Ok(())
}

pub fn preprocess(a: PreprocessArgs) -> CliResult {
    let cfg = a.prep.preprocess_config()?;
    let manifest = DatasetManifest::load(&a.data)?;
    let labels = manifest.load_labels()?;
    let records_dir = a.out.join("records");
    for entry in &labels {
        let raw = manifest.load_record(&entry.record_id)?.with_id(entry.record_id.clone());
        let rec = preprocess_record(&raw, &cfg)?;
        save_record(&rec, &records_dir.join(&entry.record_id).join("record.csv"))?;
    }
    write_labels(&a.out.join("labels.csv"), &labels)?;
    let out_manifest = DatasetManifest {
        records_dir: PathBuf::from("records"),
        labels: PathBuf::from("labels.csv"),
        truth: None,
        format: Default::default(),
    };
    let path = a.out.join("manifest.json");
    out_manifest.save(&path)?;
    info!("preprocessed {} records", labels.len());
    println!("{}", path.display());
    Ok(())
}

pub fn prepare_config(prep: &PrepArgs) -> CliResult<PrepareConfig> {
    Ok(PrepareConfig {
        preprocess: prep.preprocess_config()?,
        rule: prep.rule()?,
        delineator: Default::default(),
    })
}

pub fn read_record(input: &RecordArgs) -> CliResult<EcgRecord> {
    Ok(load_record(&input.record, input.format)?)
}

pub fn delineate(a: DelineateArgs) -> CliResult {
    let cfg = prepare_config(&a.prep)?;
    let rec = preprocess_record(&read_record(&a.input)?, &cfg.preprocess)?;
    let fid = delineate_record(&rec, &cfg.delineator)?;
    let json = serde_json::to_string_pretty(&fid).map_err(Error::from)?;
    match a.out {
        Some(path) => std::fs::write(&path, json).map_err(|e| io_failure(&path, e))?,
        None => println!("{json}"),
    }
    info!("{} beats", fid.beats.len());
    Ok(())
}

pub fn weights(a: WeightsArgs) -> CliResult {
    let cfg = prepare_config(&a.prep)?;
    let p = prepare_record(&read_record(&a.input)?, &cfg)?;
    p.weights.save(&a.out)?;
    let inside = p.weights.as_slice().iter().filter(|&&w| w == cfg.rule.in_weight).count();
    info!("{} of {} frames inside the {:?} region", inside, p.weights.len(), cfg.rule.region);
    Ok(())
}

pub fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Core {
        step: None,
        error: Error::Io {
            path: path.to_path_buf(),
            source: e,
        },
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn optional_config<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> CliResult<T> {
    match path {
        Some(p) => Ok(read_json(p)?),
        None => Ok(T::default()),
    }
}

pub fn load_examples(manifest: &Path, cfg: &PrepareConfig) -> CliResult<Vec<Example>> {
    let step = format!("preparing {}", manifest.display());
    let m = DatasetManifest::load(manifest).map_err(Failure::at(step.clone()))?;
    let examples = prepare_dataset(&m, cfg).map_err(Failure::at(step))?;
    info!("prepared {} records from {}", examples.len(), manifest.display());
    Ok(examples)
}

/// Training and validation sets for a stage command.
fn load_data(data: &DataArgs, cfg: &PrepareConfig) -> CliResult<(Vec<Example>, Option<Vec<Example>>)> {
    let train = load_examples(&data.train, cfg)?;
    let validation = data.validation.as_deref().map(|p| load_examples(p, cfg)).transpose()?;
    Ok((train, validation))
}

pub fn strategy_for(cls: &ClassifierConfig) -> LeadStrategy {
    match cls.in_channels {
        1 => LeadStrategy::SingleLead,
        n => LeadStrategy::AllLeads(n),
    }
}

fn stage_config(args: &TrainArgs, seed: u64, out: &Path, stage: StageTag) -> CliResult<TrainConfig> {
    std::fs::create_dir_all(out).map_err(|e| io_failure(out, e))?;
    let mut cfg = args.config(seed);
    if cfg.checkpoint_every > 0 {
        cfg.checkpoint_path = Some(out.join(format!("{}.partial", checkpoint_file(stage))));
    }
    Ok(cfg)
}

fn finish_stage(out: &Path, report: StageReport) -> CliResult {
    let stage = report.stage;
    if let Some(mse) = report.validation_mse {
        info!("{stage}: validation MSE {mse:.6}");
    }
    if let Some(m) = &report.validation_metrics {
        info!("{stage}: validation F_AVG {:.4}", m.f_avg);
    }
    record_stage(out, report)?;
    info!("wrote {}", out.join(checkpoint_file(stage)).display());
    Ok(())
}

pub fn pretrain(a: PretrainArgs, seed: u64) -> CliResult {
    let enh: EnhancerConfig = optional_config(&a.model.enhancer_config)?;
    let cls: ClassifierConfig = optional_config(&a.model.classifier_config)?;
    let prep = prepare_config(&a.prep)?;
    let (train, validation) = load_data(&a.data, &prep)?;
    let cfg = stage_config(&a.train, seed, &a.data.out, StageTag::Stage1)?;
    let mut model = DanetModel::new(&enh, &cls, strategy_for(&cls), seed)?;
    let report = training::pretrain_enhancer(&mut model, &train, &cfg, validation.as_deref())
        .map_err(Failure::at(StageTag::Stage1.as_str()))?;
    model.save(&a.data.out.join(checkpoint_file(StageTag::Stage1)))?;
    finish_stage(&a.data.out, report)
}

type DanetStage = fn(&mut DanetModel, &[Example], &TrainConfig, Option<&[Example]>) -> Result<StageReport>;

fn danet_stage(a: StageArgs, seed: u64, stage: StageTag, run: DanetStage) -> CliResult {
    let mut model = DanetModel::load(&a.checkpoint).map_err(Failure::at(format!("loading {}", a.checkpoint.display())))?;
    let prep = prepare_config(&a.prep)?;
    let (train, validation) = load_data(&a.data, &prep)?;
    let cfg = stage_config(&a.train, seed, &a.data.out, stage)?;
    let report = run(&mut model, &train, &cfg, validation.as_deref()).map_err(Failure::at(stage.as_str()))?;
    model.save(&a.data.out.join(checkpoint_file(stage)))?;
    finish_stage(&a.data.out, report)
}

pub fn train(a: StageArgs, seed: u64) -> CliResult {
    danet_stage(a, seed, StageTag::Stage2, training::train_stage2)
}

pub fn finetune(a: StageArgs, seed: u64) -> CliResult {
    danet_stage(a, seed, StageTag::Stage3, training::train_stage3)
}

type ClassifierStage = fn(&mut ClassifierModel, &[Example], &TrainConfig, Option<&[Example]>) -> Result<StageReport>;

fn classifier_stage(a: ClassifierArgs, seed: u64, stage: StageTag, run: ClassifierStage) -> CliResult {
    let cls: ClassifierConfig = optional_config(&a.classifier_config)?;
    let prep = prepare_config(&a.prep)?;
    let (train, validation) = load_data(&a.data, &prep)?;
    let cfg = stage_config(&a.train, seed, &a.data.out, stage)?;
    let mut model = ClassifierModel::new(&cls, StageTag::Init, seed)?;
    let report = run(&mut model, &train, &cfg, validation.as_deref()).map_err(Failure::at(stage.as_str()))?;
    model.save(&a.data.out.join(checkpoint_file(stage)))?;
    finish_stage(&a.data.out, report)
}

pub fn train_h(a: ClassifierArgs, seed: u64) -> CliResult {
    classifier_stage(a, seed, StageTag::DanetH, training::train_danet_h)
}

pub fn train_baseline(a: ClassifierArgs, seed: u64) -> CliResult {
    classifier_stage(a, seed, StageTag::Baseline, training::train_baseline)
}

/// Scores `predictor` on prepared examples.
pub fn evaluate_examples(predictor: Predictor, examples: &[Example], threshold: f64) -> CliResult<Evaluation> {
    let inputs = examples
        .iter()
        .map(|ex| {
            let label = ex
                .label
                .ok_or_else(|| Error::Data(format!("record {} has no label", ex.id)))?;
            Ok(EvalInput {
                id: &ex.id,
                record: &ex.record,
                weights: ex.weights.as_ref(),
                label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(evaluate(predictor, &inputs, threshold).map_err(Failure::at("evaluation"))?)
}

pub fn eval(a: EvalArgs) -> CliResult {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let predictor = Predictor::from_checkpoint(&ckpt);
    if matches!(predictor.stage(), StageTag::Init | StageTag::Stage1) {
        warn!("{} checkpoint has an untrained classifier", predictor.stage());
    }
    let prep = prepare_config(&a.prep)?;
    let examples = load_examples(&a.data, &prep)?;
    let report = evaluate_examples(predictor, &examples, a.threshold)?;
    let out = a.out.unwrap_or_else(|| {
        let dir = a.checkpoint.parent().unwrap_or(Path::new("."));
        dir.join(format!("eval-{}.json", predictor.stage()))
    });
    report.save(&out)?;
    print!("{}", report.table());
    Ok(())
}

/// Manual weights file, checked against the record it belongs to.
pub fn read_weights(path: &Path, frames: usize) -> CliResult<AttentionWeights> {
    let w = AttentionWeights::load(path)?;
    if w.len() != frames {
        return Err(Error::Data(format!(
            "{}: {} weights for a record of {frames} frames",
            path.display(),
            w.len()
        ))
        .into());
    }
    Ok(w)
}
