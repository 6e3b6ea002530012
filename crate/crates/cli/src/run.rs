//! Run-directory layout and the end-to-end `pipeline` command.

use std::path::{Path, PathBuf};

use danet::delineator::DelineatorConfig;
use danet::evaluation::{evaluate_enhancer, format_table, mean_weight, ConfusionMatrix, MetricsReport, Predictor, DEFAULT_THRESHOLD};
use danet::models::{ClassifierConfig, DanetModel, EnhancerConfig, StageTag};
use danet::pipeline::PrepareConfig;
use danet::signal::PreprocessConfig;
use danet::training::{self, write_loss_csv, Example, StageReport, TrainConfig};
use danet::{attention::DiseaseRule, Error};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::args::PipelineArgs;
use crate::commands::{evaluate_examples, io_failure, load_examples, read_json, strategy_for};
use crate::{CliResult, Failure};

pub const REPORT_FILE: &str = "report.json";
pub const LOSSES_FILE: &str = "losses.csv";

pub fn checkpoint_file(stage: StageTag) -> String {
    match stage {
        StageTag::Stage1 => "ckpt-stage1.dant".into(),
        StageTag::Stage2 => "ckpt-stage2.dant".into(),
        StageTag::Stage3 => "ckpt-stage3.dant".into(),
        other => format!("ckpt-{}.dant", other.as_str()),
    }
}

pub fn eval_file(stage: StageTag) -> String {
    format!("eval-{}.json", stage.as_str())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub stage: StageTag,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enhancer_mse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant_mse: Option<f64>,
}

/// Contents of `report.json`: every stage trained in the run directory and
/// the test-set scores of the pipeline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub stages: Vec<StageReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub evaluations: Vec<EvalSummary>,
}

impl RunReport {
    pub fn load_or_default(dir: &Path) -> CliResult<Self> {
        let path = dir.join(REPORT_FILE);
        if path.exists() {
            Ok(read_json(&path)?)
        } else {
            Ok(Self::default())
        }
    }

    pub fn save(&self, dir: &Path) -> CliResult {
        let path = dir.join(REPORT_FILE);
        let text = serde_json::to_string_pretty(self).map_err(Error::from)?;
        std::fs::write(&path, text).map_err(|e| io_failure(&path, e))?;
        write_loss_csv(&self.stages, &dir.join(LOSSES_FILE))?;
        Ok(())
    }
}

/// Adds or replaces the report of one stage in `dir/report.json` and
/// rewrites `dir/losses.csv`.
pub fn record_stage(dir: &Path, report: StageReport) -> CliResult {
    let mut run = RunReport::load_or_default(dir)?;
    run.stages.retain(|r| r.stage != report.stage);
    run.stages.push(report);
    run.stages.sort_by_key(|r| r.stage);
    run.save(dir)
}

fn default_rule() -> String {
    "apc".into()
}

/// Describes one end-to-end run. Relative paths are resolved against the
/// directory holding the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub train: PathBuf,
    #[serde(default)]
    pub validation: Option<PathBuf>,
    #[serde(default)]
    pub test: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    /// Built-in rule name or a path to a rule JSON file.
    #[serde(default = "default_rule")]
    pub rule: String,
    #[serde(default)]
    pub delineator: DelineatorConfig,
    #[serde(default)]
    pub enhancer: EnhancerConfig,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    /// Shared by the three stages; `seed` is taken from the command line.
    #[serde(default)]
    pub train_config: TrainConfig,
    /// Per-stage epoch overrides for stages 1, 2 and 3.
    #[serde(default)]
    pub stage_epochs: Option<[usize; 3]>,
}

impl RunManifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let mut m: RunManifest = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        m.train = base.join(&m.train);
        m.validation = m.validation.map(|p| base.join(p));
        m.test = m.test.map(|p| base.join(p));
        m.output_dir = base.join(&m.output_dir);
        if Path::new(&m.rule).extension().is_some_and(|e| e == "json") {
            m.rule = base.join(&m.rule).to_string_lossy().into_owned();
        }
        Ok(m)
    }

    /// Every referenced dataset manifest must exist before anything runs.
    pub fn check_inputs(&self) -> CliResult {
        let datasets = std::iter::once(&self.train).chain(&self.validation).chain(&self.test);
        for p in datasets {
            if !p.is_file() {
                return Err(Error::Data(format!("dataset manifest {} not found", p.display())).into());
            }
        }
        Ok(())
    }

    fn prepare_config(&self) -> CliResult<PrepareConfig> {
        self.preprocess.validate()?;
        Ok(PrepareConfig {
            preprocess: self.preprocess.clone(),
            rule: DiseaseRule::resolve(&self.rule)?,
            delineator: self.delineator.clone(),
        })
    }

    fn stage_config(&self, index: usize, seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig {
            seed,
            ..self.train_config.clone()
        };
        if let Some(epochs) = self.stage_epochs {
            cfg.epochs = epochs[index];
        }
        cfg
    }
}

const STAGES: [StageTag; 3] = [StageTag::Stage1, StageTag::Stage2, StageTag::Stage3];

/// Latest DANet checkpoint in `dir`, checked against the tag its file name promises.
fn resume_point(dir: &Path) -> CliResult<Option<DanetModel>> {
    for stage in STAGES.iter().rev() {
        let path = dir.join(checkpoint_file(*stage));
        if path.is_file() {
            let model = DanetModel::load(&path).map_err(Failure::at(format!("loading {}", path.display())))?;
            if model.stage != *stage {
                return Err(Error::Sequencing {
                    expected: stage.to_string(),
                    found: model.stage.to_string(),
                }
                .into());
            }
            info!("resuming from {}", path.display());
            return Ok(Some(model));
        }
    }
    Ok(None)
}

fn run_stage(
    model: &mut DanetModel,
    stage: StageTag,
    train: &[Example],
    cfg: &TrainConfig,
    validation: Option<&[Example]>,
) -> danet::Result<StageReport> {
    match stage {
        StageTag::Stage1 => training::pretrain_enhancer(model, train, cfg, validation),
        StageTag::Stage2 => training::train_stage2(model, train, cfg, validation),
        _ => training::train_stage3(model, train, cfg, validation),
    }
}

pub fn cmd_pipeline(a: PipelineArgs, seed: u64) -> CliResult {
    let manifest = RunManifest::load(&a.manifest)?;
    manifest.check_inputs()?;
    let prep = manifest.prepare_config()?;
    let out = &manifest.output_dir;
    std::fs::create_dir_all(out).map_err(|e| io_failure(out, e))?;

    let mut model = if a.resume { resume_point(out)? } else { None };
    if model.is_none() {
        let stale = out.join(REPORT_FILE);
        if stale.exists() {
            std::fs::remove_file(&stale).map_err(|e| io_failure(&stale, e))?;
        }
    }

    let train = load_examples(&manifest.train, &prep)?;
    let validation = manifest.validation.as_deref().map(|p| load_examples(p, &prep)).transpose()?;

    let mut current = match model.take() {
        Some(m) => m,
        None => DanetModel::new(
            &manifest.enhancer,
            &manifest.classifier,
            strategy_for(&manifest.classifier),
            seed,
        )
        .map_err(Failure::at("building the model"))?,
    };
    for (i, &stage) in STAGES.iter().enumerate() {
        if current.stage >= stage {
            info!("skipping {stage}: checkpoint already present");
            continue;
        }
        info!("running {stage}");
        let cfg = manifest.stage_config(i, seed);
        let report =
            run_stage(&mut current, stage, &train, &cfg, validation.as_deref()).map_err(Failure::at(stage.as_str()))?;
        current.save(&out.join(checkpoint_file(stage)))?;
        record_stage(out, report)?;
    }

    let Some(test_path) = manifest.test.as_ref().or(manifest.validation.as_ref()) else {
        warn!("no test or validation set in the manifest; skipping evaluation");
        return Ok(());
    };
    let test = load_examples(test_path, &prep)?;
    let constant = mean_weight(train.iter().filter_map(|ex| ex.weights.as_ref()));
    let mut summaries = Vec::new();
    let mut rows = Vec::new();
    for stage in STAGES {
        let model = DanetModel::load(&out.join(checkpoint_file(stage)))?;
        if stage == StageTag::Stage1 {
            let pairs: Vec<_> = test
                .iter()
                .filter_map(|ex| ex.weights.as_ref().map(|w| (&ex.record, w)))
                .collect();
            let e = evaluate_enhancer(&model, &pairs, constant).map_err(Failure::at("evaluation"))?;
            e.save(&out.join(eval_file(stage)))?;
            info!("{stage}: enhancer MSE {:.6} (constant {:.6})", e.mse, e.constant_mse);
            summaries.push(EvalSummary {
                stage,
                model: stage.model_name().into(),
                confusion: None,
                metrics: None,
                enhancer_mse: Some(e.mse),
                constant_mse: Some(e.constant_mse),
            });
            continue;
        }
        let e = evaluate_examples(Predictor::Danet(&model), &test, DEFAULT_THRESHOLD)?;
        e.save(&out.join(eval_file(stage)))?;
        rows.push((e.model.clone(), e.metrics.clone()));
        summaries.push(EvalSummary {
            stage,
            model: e.model,
            confusion: Some(e.confusion),
            metrics: Some(e.metrics),
            enhancer_mse: None,
            constant_mse: None,
        });
    }
    let mut run = RunReport::load_or_default(out)?;
    run.evaluations = summaries;
    run.save(out)?;
    print!("{}", format_table(&rows));
    Ok(())
}
