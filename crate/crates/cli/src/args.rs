use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use danet::attention::DiseaseRule;
use danet::ecg_io::RecordFormat;
use danet::nn::AdamConfig;
use danet::signal::{Normalize, PreprocessConfig};
use danet::training::{AugmentConfig, TrainConfig};

use crate::{CliResult, Failure};

#[derive(Debug, Parser)]
#[command(name = "danet", version, about = "Attention-guided APC detection on ECG records")]
pub struct Cli {
    /// Seed for every random choice (data synthesis, initialization, shuffling).
    #[arg(long, global = true, env = "DANET_SEED", default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a labelled synthetic dataset with fiducial ground truth.
    Synth(SynthArgs),
    /// Resample, band-pass and select leads for every record of a dataset.
    Preprocess(PreprocessArgs),
    /// Locate P, QRS and T boundaries in one record.
    Delineate(DelineateArgs),
    /// Build manual attention weights for one record.
    Weights(WeightsArgs),
    /// Stage 1: pre-train the waveform enhancer on manual weights.
    Pretrain(PretrainArgs),
    /// Stage 2: train the classifier behind the frozen enhancer.
    Train(StageArgs),
    /// Stage 3: fine-tune the whole network.
    Finetune(StageArgs),
    /// Train the classifier on records multiplied by their manual weights.
    TrainH(ClassifierArgs),
    /// Train the plain CNN on preprocessed records.
    TrainBaseline(ClassifierArgs),
    /// Score a checkpoint on a labelled dataset.
    Eval(EvalArgs),
    /// Draw a record with its attention weights as SVG and CSV.
    Plot(PlotArgs),
    /// Run every step from a run manifest.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of records.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Fraction of APC records.
    #[arg(long, default_value_t = 0.07)]
    pub apc_fraction: f64,
    /// Sampling rate in Hz.
    #[arg(long, default_value_t = 150.0)]
    pub fs: f64,
    /// Record length in seconds.
    #[arg(long, default_value_t = 10.0)]
    pub duration: f64,
    /// Standard deviation of additive noise in mV.
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    /// Premature RR interval as a fraction of the mean RR.
    #[arg(long, default_value_t = 0.6)]
    pub prematurity: f64,
    /// Standard deviation of sinus RR intervals in seconds.
    #[arg(long, default_value_t = 0.02)]
    pub rr_jitter: f64,
}

/// Preprocessing and weighting flags shared by every command that reads raw records.
#[derive(Debug, Clone, Args)]
pub struct PrepArgs {
    /// Target sampling rate in Hz.
    #[arg(long, default_value_t = 150.0)]
    pub target_fs: f64,
    /// Band-pass edges as LOW,HIGH in Hz, or "none".
    #[arg(long, default_value = "0.5,50")]
    pub band: String,
    /// Band-pass order (2, 4, 6 or 8).
    #[arg(long, default_value_t = 6)]
    pub filter_order: usize,
    /// Comma-separated leads to keep; empty keeps all.
    #[arg(long, default_value = "II")]
    pub leads: String,
    /// Per-lead normalization: none or zscore.
    #[arg(long, default_value = "none")]
    pub normalize: String,
    /// Disease rule: a built-in name (apc, stt) or a JSON file.
    #[arg(long, default_value = "apc")]
    pub rule: String,
}

impl PrepArgs {
    pub fn preprocess_config(&self) -> CliResult<PreprocessConfig> {
        let band = if self.band.eq_ignore_ascii_case("none") {
            None
        } else {
            let parts: Vec<&str> = self.band.split(',').collect();
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Failure::Usage(format!("bad band edge {s:?}")))
            };
            match parts.as_slice() {
                [lo, hi] => Some((parse(lo)?, parse(hi)?)),
                _ => return Err(Failure::Usage(format!("--band expects LOW,HIGH, got {:?}", self.band))),
            }
        };
        let normalize = match self.normalize.as_str() {
            "none" => Normalize::None,
            "zscore" => Normalize::Zscore,
            other => return Err(Failure::Usage(format!("unknown normalization {other:?}"))),
        };
        let cfg = PreprocessConfig {
            target_fs: self.target_fs,
            band,
            filter_order: self.filter_order,
            leads_keep: split_list(&self.leads),
            normalize,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn rule(&self) -> CliResult<DiseaseRule> {
        Ok(DiseaseRule::resolve(&self.rule)?)
    }
}

pub fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(String::from).collect()
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Dataset manifest (manifest.json).
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for the preprocessed dataset.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub prep: PrepArgs,
}

#[derive(Debug, Args)]
pub struct RecordArgs {
    /// Record file (record.csv, or a competition .txt dump).
    #[arg(long)]
    pub record: PathBuf,
    /// Record format: csv or tianchi.
    #[arg(long, default_value = "csv")]
    pub format: RecordFormat,
}

#[derive(Debug, Args)]
pub struct DelineateArgs {
    #[command(flatten)]
    pub input: RecordArgs,
    /// Output JSON; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub prep: PrepArgs,
}

#[derive(Debug, Args)]
pub struct WeightsArgs {
    #[command(flatten)]
    pub input: RecordArgs,
    /// Output JSON array of weights.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub prep: PrepArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Keep the sample order fixed across epochs.
    #[arg(long)]
    pub no_shuffle: bool,
    /// Standard deviation of training-time noise in mV (0 disables it).
    #[arg(long, default_value_t = 0.0)]
    pub noise_aug: f64,
    /// Restore the parameters of the best validation epoch at the end.
    #[arg(long)]
    pub keep_best: bool,
    /// Save an in-progress checkpoint every N epochs (0 = never).
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,
}

impl TrainArgs {
    pub fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            adam: AdamConfig {
                lr: self.lr,
                ..AdamConfig::default()
            },
            seed,
            shuffle: !self.no_shuffle,
            augment: AugmentConfig {
                noise_sigma_mv: self.noise_aug,
            },
            keep_best_on_validation: self.keep_best,
            checkpoint_every: self.checkpoint_every,
            checkpoint_path: None,
        }
    }
}

/// Data locations for a training command.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// Training dataset manifest.
    #[arg(long)]
    pub train: PathBuf,
    /// Optional validation dataset manifest.
    #[arg(long)]
    pub validation: Option<PathBuf>,
    /// Run directory for checkpoints and reports.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Enhancer configuration (JSON); defaults to the standard architecture.
    #[arg(long)]
    pub enhancer_config: Option<PathBuf>,
    /// Classifier configuration (JSON); defaults to the standard architecture.
    #[arg(long)]
    pub classifier_config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub prep: PrepArgs,
}

#[derive(Debug, Args)]
pub struct StageArgs {
    /// Checkpoint of the previous stage.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub prep: PrepArgs,
}

#[derive(Debug, Args)]
pub struct ClassifierArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Classifier configuration (JSON); defaults to the standard architecture.
    #[arg(long)]
    pub classifier_config: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub prep: PrepArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint to score.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Labelled dataset manifest.
    #[arg(long)]
    pub data: PathBuf,
    /// Report JSON path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// A record is called APC when its probability exceeds this value.
    #[arg(long, default_value_t = danet::evaluation::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[command(flatten)]
    pub prep: PrepArgs,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[command(flatten)]
    pub input: RecordArgs,
    /// Manual weights (JSON array) to draw.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// DANet checkpoint whose enhancer supplies automatic weights.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Output SVG path.
    #[arg(long)]
    pub out: PathBuf,
    /// Output CSV path; defaults to the SVG path with a .csv extension.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub prep: PrepArgs,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Run manifest (JSON).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Skip stages whose checkpoints already exist in the output directory.
    #[arg(long)]
    pub resume: bool,
}
