//! Binary detection metrics with APC as the positive class, and the
//! table/JSON reports built from them.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attention::AttentionWeights;
use crate::ecg_io::{EcgRecord, Label};
use crate::error::{Error, Result};
use crate::models::{Checkpoint, ClassifierModel, DanetModel, StageTag};
use crate::nn::mse_loss;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }

    pub fn total(&self) -> u64 {
        self.positives() + self.negatives()
    }

    pub fn add(&mut self, predicted_apc: bool, label: Label) {
        match (predicted_apc, label.is_positive()) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

/// Tallies predictions; a record is called APC when `prob > threshold`.
pub fn confusion(probs: &[f64], labels: &[Label], threshold: f64) -> Result<ConfusionMatrix> {
    if probs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} probabilities for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &l) in probs.iter().zip(labels) {
        cm.add(p > threshold, l);
    }
    Ok(cm)
}

/// Rates in [0, 1]. Any 0/0 is reported as 0 and named in `undefined`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub se: f64,
    pub sp: f64,
    pub acc: f64,
    pub f_apc: f64,
    pub f_nonapc: f64,
    pub f_avg: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<String>,
}

fn ratio(num: u64, den: u64, name: &str, undefined: &mut Vec<String>) -> f64 {
    if den == 0 {
        undefined.push(name.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f_score(precision: f64, recall: f64, name: &str, undefined: &mut Vec<String>) -> f64 {
    if precision + recall == 0.0 {
        undefined.push(name.to_string());
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    if cm.total() == 0 {
        return Err(Error::EmptyMatrix);
    }
    let mut undefined = Vec::new();
    let se = ratio(cm.tp, cm.positives(), "se", &mut undefined);
    let sp = ratio(cm.tn, cm.negatives(), "sp", &mut undefined);
    let acc = (cm.tp + cm.tn) as f64 / cm.total() as f64;
    let p_apc = ratio(cm.tp, cm.tp + cm.fp, "precision_apc", &mut undefined);
    let p_non = ratio(cm.tn, cm.tn + cm.fn_, "precision_nonapc", &mut undefined);
    let f_apc = f_score(p_apc, se, "f_apc", &mut undefined);
    let f_nonapc = f_score(p_non, sp, "f_nonapc", &mut undefined);
    Ok(MetricsReport {
        se,
        sp,
        acc,
        f_apc,
        f_nonapc,
        f_avg: (f_apc + f_nonapc) / 2.0,
        undefined,
    })
}

/// Model-name column followed by the six rates as percentages.
pub fn format_table(rows: &[(String, MetricsReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(5).max(5);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>7}  {:>7}  {:>7}  {:>7}  {:>8}  {:>7}",
        "Model", "Se", "Sp", "Acc", "F_APC", "F_NonAPC", "F_AVG"
    );
    for (name, m) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>6.2}%  {:>6.2}%  {:>6.2}%  {:>6.2}%  {:>7.2}%  {:>6.2}%",
            name,
            100.0 * m.se,
            100.0 * m.sp,
            100.0 * m.acc,
            100.0 * m.f_apc,
            100.0 * m.f_nonapc,
            100.0 * m.f_avg
        );
    }
    out
}

/// A labelled input for evaluation. `weights` are the manual weights, needed
/// only by the hard-coded model.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalInput<'a> {
    pub id: &'a str,
    pub record: &'a EcgRecord,
    pub weights: Option<&'a AttentionWeights>,
    pub label: Label,
}

/// Anything that maps a prepared record to an APC probability.
#[derive(Debug, Clone, Copy)]
pub enum Predictor<'a> {
    Danet(&'a DanetModel),
    Baseline(&'a ClassifierModel),
    /// Classifier fed the record multiplied by its manual weights.
    DanetH(&'a ClassifierModel),
}

impl<'a> Predictor<'a> {
    pub fn from_checkpoint(ckpt: &'a Checkpoint) -> Self {
        match ckpt {
            Checkpoint::Danet(m) => Predictor::Danet(m),
            Checkpoint::Classifier(m) if m.stage == StageTag::DanetH => Predictor::DanetH(m),
            Checkpoint::Classifier(m) => Predictor::Baseline(m),
        }
    }

    pub fn stage(&self) -> StageTag {
        match self {
            Predictor::Danet(m) => m.stage,
            Predictor::Baseline(m) | Predictor::DanetH(m) => m.stage,
        }
    }

    pub fn needs_weights(&self) -> bool {
        matches!(self, Predictor::DanetH(_))
    }

    pub fn predict(&self, record: &EcgRecord, weights: Option<&AttentionWeights>) -> Result<f64> {
        match self {
            Predictor::Danet(m) => m.predict(record),
            Predictor::Baseline(m) => m.predict(record),
            Predictor::DanetH(m) => {
                let w = weights.ok_or_else(|| {
                    Error::Data(format!("record {} has no manual weights for DANet-h", record.id()))
                })?;
                m.predict_weighted(record, w)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordPrediction {
    pub id: String,
    pub label: Label,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub model: String,
    pub threshold: f64,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
    pub records: Vec<RecordPrediction>,
}

impl Evaluation {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn table(&self) -> String {
        format_table(&[(self.model.clone(), self.metrics.clone())])
    }
}

/// Runs `predictor` over every input and scores it at `threshold`.
pub fn evaluate(predictor: Predictor, inputs: &[EvalInput], threshold: f64) -> Result<Evaluation> {
    let mut cm = ConfusionMatrix::default();
    let mut records = Vec::with_capacity(inputs.len());
    for input in inputs {
        let prob = predictor.predict(input.record, input.weights)?;
        if !prob.is_finite() {
            return Err(Error::Numeric(format!("non-finite probability for record {}", input.id)));
        }
        cm.add(prob > threshold, input.label);
        records.push(RecordPrediction {
            id: input.id.to_string(),
            label: input.label,
            prob,
        });
    }
    Ok(Evaluation {
        model: predictor.stage().model_name().to_string(),
        threshold,
        confusion: cm,
        metrics: metrics(&cm)?,
        records,
    })
}

/// How closely the enhancer reproduces manual weights, next to a predictor
/// that always outputs `constant`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhancerEvaluation {
    pub mse: f64,
    pub constant: f64,
    pub constant_mse: f64,
    pub records: usize,
}

impl EnhancerEvaluation {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

/// Mean of every weight value, the best constant fit of `weights` under MSE.
pub fn mean_weight<'w>(weights: impl IntoIterator<Item = &'w AttentionWeights>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for w in weights {
        sum += w.as_slice().iter().sum::<f64>();
        n += w.len();
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Per-record MSE of the enhancer against manual weights, averaged over records.
pub fn evaluate_enhancer(
    model: &DanetModel,
    inputs: &[(&EcgRecord, &AttentionWeights)],
    constant: f64,
) -> Result<EnhancerEvaluation> {
    if inputs.is_empty() {
        return Err(Error::Data("no records to evaluate the enhancer on".into()));
    }
    let (mut mse, mut constant_mse) = (0.0, 0.0);
    for (rec, w1) in inputs {
        let w2 = model.enhance(rec)?;
        mse += mse_loss(w2.as_slice(), w1.as_slice())?;
        let flat = vec![constant; w1.len()];
        constant_mse += mse_loss(&flat, w1.as_slice())?;
    }
    let n = inputs.len() as f64;
    Ok(EnhancerEvaluation {
        mse: mse / n,
        constant,
        constant_mse: constant_mse / n,
        records: inputs.len(),
    })
}
