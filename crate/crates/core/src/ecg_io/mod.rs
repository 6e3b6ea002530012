//! ECG records, labels and their on-disk formats.
//!
//! A record on disk is a directory holding `record.csv` (first line = lead
//! names, then one row per sample instant, values in mV) and `meta.json`
//! (`{"id": .., "fs": ..}`). Competition dumps (`tianchi_txt`) are plain
//! delimited text with a header row and a fixed 500 Hz rate.

mod synth;

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use synth::{
    render_component, synth_corpus, synth_dataset, synth_record, synth_schedule, ApcConfig,
    BeatGeometry, Bump, Component, LeadSpec, SynthDataset, SynthParams, SynthSample, WaveShape,
};

pub const RECORD_FILE: &str = "record.csv";
pub const META_FILE: &str = "meta.json";
pub const TIANCHI_FS: f64 = 500.0;

/// A multi-lead sampled signal. `samples[i][k]` is lead `i` at instant `k`,
/// in millivolts.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecord {
    id: String,
    fs: f64,
    leads: Vec<String>,
    samples: Vec<Vec<f64>>,
}

impl EcgRecord {
    pub fn new(
        id: impl Into<String>,
        fs: f64,
        leads: Vec<String>,
        samples: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::Param(format!("sampling rate must be positive, got {fs}")));
        }
        if leads.is_empty() || leads.len() != samples.len() {
            return Err(Error::Shape(format!(
                "{} lead names for {} sample rows",
                leads.len(),
                samples.len()
            )));
        }
        let frames = samples[0].len();
        if frames == 0 {
            return Err(Error::EmptyRecord);
        }
        if samples.iter().any(|row| row.len() != frames) {
            return Err(Error::Shape("leads have different lengths".into()));
        }
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("record contains non-finite samples".into()));
        }
        Ok(Self {
            id: id.into(),
            fs,
            leads,
            samples,
        })
    }

    /// Single-lead convenience constructor.
    pub fn single(id: impl Into<String>, fs: f64, lead: &str, samples: Vec<f64>) -> Result<Self> {
        Self::new(id, fs, vec![lead.to_string()], vec![samples])
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn leads(&self) -> &[String] {
        &self.leads
    }

    /// Number of leads (channelC).
    pub fn channels(&self) -> usize {
        self.samples.len()
    }

    /// Number of sample instants (frameC).
    pub fn frames(&self) -> usize {
        self.samples[0].len()
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn lead(&self, index: usize) -> &[f64] {
        &self.samples[index]
    }

    pub fn lead_index(&self, name: &str) -> Option<usize> {
        self.leads.iter().position(|l| l == name)
    }

    pub fn into_samples(self) -> Vec<Vec<f64>> {
        self.samples
    }

    /// Returns a record with the same identity and leads but new samples/rate.
    pub fn with_samples(&self, fs: f64, samples: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(self.id.clone(), fs, self.leads.clone(), samples)
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordFormat {
    #[default]
    Csv,
    TianchiTxt,
}

impl FromStr for RecordFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(RecordFormat::Csv),
            "tianchi_txt" | "tianchi" => Ok(RecordFormat::TianchiTxt),
            other => Err(Error::Param(format!("unknown record format {other:?}"))),
        }
    }
}

/// Options for the competition text reader. The on-disk layout of those
/// dumps is not documented, so the delimiter and a unit scale are exposed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TianchiOptions {
    /// `None` splits on any run of whitespace.
    pub delimiter: Option<char>,
    /// Multiplier converting stored values to millivolts.
    pub scale_to_mv: f64,
}

impl Default for TianchiOptions {
    fn default() -> Self {
        Self {
            delimiter: None,
            scale_to_mv: 1.0,
        }
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct RecordMeta {
    id: String,
    fs: f64,
}

pub fn load_record(path: &Path, format: RecordFormat) -> Result<EcgRecord> {
    match format {
        RecordFormat::Csv => load_csv_record(path),
        RecordFormat::TianchiTxt => load_tianchi_record(path, TianchiOptions::default()),
    }
}

fn meta_path(record_path: &Path) -> PathBuf {
    record_path
        .parent()
        .map(|p| p.join(META_FILE))
        .unwrap_or_else(|| PathBuf::from(META_FILE))
}

fn load_csv_record(path: &Path) -> Result<EcgRecord> {
    let meta_path = meta_path(path);
    let meta_text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: RecordMeta = serde_json::from_str(&meta_text)?;

    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let leads: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Format(format!("unreadable header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    check_lead_names(&leads)?;

    let mut samples = vec![Vec::new(); leads.len()];
    for (row_idx, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::Format(format!("row {}: {e}", row_idx + 1)))?;
        push_row(&mut samples, row.iter(), row_idx + 1, 1.0)?;
    }
    if samples[0].is_empty() {
        return Err(Error::EmptyRecord);
    }
    EcgRecord::new(meta.id, meta.fs, leads, samples)
}

pub fn load_tianchi_record(path: &Path, opts: TianchiOptions) -> Result<EcgRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let split = |line: &str| -> Vec<String> {
        match opts.delimiter {
            Some(d) => line.split(d).map(|s| s.trim().to_string()).collect(),
            None => line.split_whitespace().map(str::to_string).collect(),
        }
    };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("missing header line".into()))?;
    let leads = split(header);
    check_lead_names(&leads)?;

    let mut samples = vec![Vec::new(); leads.len()];
    for (row_idx, line) in lines.enumerate() {
        let cells = split(line);
        if cells.len() != leads.len() {
            return Err(Error::Format(format!(
                "row {} has {} columns, header has {}",
                row_idx + 1,
                cells.len(),
                leads.len()
            )));
        }
        push_row(&mut samples, cells.iter().map(String::as_str), row_idx + 1, opts.scale_to_mv)?;
    }
    if samples[0].is_empty() {
        return Err(Error::EmptyRecord);
    }
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    EcgRecord::new(id, TIANCHI_FS, leads, samples)
}

fn check_lead_names(leads: &[String]) -> Result<()> {
    if leads.is_empty() || leads.iter().any(|l| l.is_empty()) {
        return Err(Error::Format("header must list non-empty lead names".into()));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = leads.iter().find(|l| !seen.insert(l.as_str())) {
        return Err(Error::Format(format!("lead {dup:?} listed twice in header")));
    }
    if leads.iter().all(|l| l.parse::<f64>().is_ok()) {
        return Err(Error::Format("header row is numeric; lead names expected".into()));
    }
    Ok(())
}

fn push_row<'a>(
    samples: &mut [Vec<f64>],
    cells: impl Iterator<Item = &'a str>,
    row: usize,
    scale: f64,
) -> Result<()> {
    let mut count = 0;
    for (col, cell) in cells.enumerate() {
        let value: f64 = cell.parse().map_err(|_| Error::Parse {
            row,
            col: col + 1,
            msg: format!("{cell:?} is not a number"),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                row,
                col: col + 1,
                msg: format!("{cell:?} is not finite"),
            });
        }
        samples[col].push(value * scale);
        count += 1;
    }
    if count != samples.len() {
        return Err(Error::Format(format!("row {row} has {count} columns")));
    }
    Ok(())
}

/// Writes `record.csv` at `path` and `meta.json` next to it. Values use the
/// shortest round-trip representation, so a reload is exact.
pub fn save_record(record: &EcgRecord, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut out = String::with_capacity(record.frames() * record.channels() * 12);
    out.push_str(&record.leads.join(","));
    out.push('\n');
    for k in 0..record.frames() {
        for (i, lead) in record.samples.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&lead[k].to_string());
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))?;

    let meta = RecordMeta {
        id: record.id.clone(),
        fs: record.fs,
    };
    let meta_path = meta_path(path);
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)?)
        .map_err(|e| Error::io(&meta_path, e))
}

/// Binary class; APC is the positive class throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "APC")]
    Apc,
    #[serde(rename = "NonAPC")]
    NonApc,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Apc
    }

    /// 1.0 for APC, 0.0 otherwise.
    pub fn target(self) -> f64 {
        if self.is_positive() {
            1.0
        } else {
            0.0
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Apc => "APC",
            Label::NonApc => "NonAPC",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "APC" => Ok(Label::Apc),
            "NonAPC" => Ok(Label::NonApc),
            other => Err(Error::Label(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub record_id: String,
    pub label: Label,
}

pub fn load_labels(path: &Path) -> Result<Vec<LabelEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("unreadable labels header: {e}")))?
        .clone();
    if headers.len() != 2 || &headers[0] != "record_id" || &headers[1] != "label" {
        return Err(Error::Format(
            "labels file must have header \"record_id,label\"".into(),
        ));
    }
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (row_idx, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::Format(format!("labels row {}: {e}", row_idx + 1)))?;
        let record_id = row[0].to_string();
        if record_id.is_empty() {
            return Err(Error::Format(format!("labels row {} has an empty id", row_idx + 1)));
        }
        let label: Label = row[1].parse()?;
        if !seen.insert(record_id.clone()) {
            return Err(Error::Duplicate(record_id));
        }
        entries.push(LabelEntry { record_id, label });
    }
    Ok(entries)
}

pub fn write_labels(path: &Path, entries: &[LabelEntry]) -> Result<()> {
    let mut out = String::from("record_id,label\n");
    for e in entries {
        out.push_str(&format!("{},{}\n", e.record_id, e.label));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Describes one dataset split on disk. Relative paths are resolved against
/// the directory holding the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub records_dir: PathBuf,
    pub labels: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    #[serde(default)]
    pub format: RecordFormat,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: DatasetManifest = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        manifest.records_dir = base.join(&manifest.records_dir);
        manifest.labels = base.join(&manifest.labels);
        manifest.truth = manifest.truth.map(|t| base.join(t));
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn record_path(&self, id: &str) -> PathBuf {
        match self.format {
            RecordFormat::Csv => self.records_dir.join(id).join(RECORD_FILE),
            RecordFormat::TianchiTxt => self.records_dir.join(format!("{id}.txt")),
        }
    }

    pub fn load_labels(&self) -> Result<Vec<LabelEntry>> {
        load_labels(&self.labels)
    }

    pub fn load_record(&self, id: &str) -> Result<EcgRecord> {
        load_record(&self.record_path(id), self.format)
    }
}
