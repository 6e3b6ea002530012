use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dilated residual CNN that maps a signal to per-sample weights.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnhancerConfig {
    pub in_channels: usize,
    /// Dilated layers; consecutive pairs share a skip connection.
    pub n_dilated_layers: usize,
    pub filters: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub head_kernel: usize,
    /// Zero the second convolution of every residual pair at init so each
    /// pair starts as the identity. Debug aid; off by default.
    pub zero_init_residual: bool,
}

impl Default for EnhancerConfig {
    fn default() -> Self {
        Self {
            in_channels: 1,
            n_dilated_layers: 4,
            filters: 6,
            kernel: 9,
            dilation: 7,
            head_kernel: 1,
            zero_init_residual: false,
        }
    }
}

impl EnhancerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("enhancer: {msg}")));
        if self.in_channels == 0 || self.filters == 0 {
            return bad("channel counts must be positive".into());
        }
        if self.n_dilated_layers == 0 || self.n_dilated_layers % 2 != 0 {
            return bad(format!("need an even, positive layer count, got {}", self.n_dilated_layers));
        }
        if self.kernel % 2 == 0 || self.head_kernel % 2 == 0 {
            return bad("kernels must be odd".into());
        }
        if self.dilation == 0 {
            return bad("dilation must be >= 1".into());
        }
        Ok(())
    }

    /// Input samples that influence one output sample.
    pub fn receptive_field(&self) -> usize {
        1 + self.n_dilated_layers * (self.kernel - 1) * self.dilation + (self.head_kernel - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvStage {
    pub kernel: usize,
    pub filters: usize,
    pub pool: usize,
}

/// Three conv/pool stages, a hidden dense layer and a logistic output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub in_channels: usize,
    pub input_frames: usize,
    pub stages: Vec<ConvStage>,
    pub hidden: usize,
    /// Drop every hidden activation. Debug aid for linearity checks.
    pub linear_debug: bool,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        let stage = |kernel, filters, pool| ConvStage { kernel, filters, pool };
        Self {
            in_channels: 1,
            input_frames: 1500,
            stages: vec![stage(21, 6, 7), stage(13, 7, 6), stage(9, 5, 6)],
            hidden: 50,
            linear_debug: false,
        }
    }
}

impl ClassifierConfig {
    /// Frames after each pooling stage.
    pub fn frame_chain(&self) -> Result<Vec<usize>> {
        let mut frames = self.input_frames;
        let mut chain = Vec::with_capacity(self.stages.len());
        for (i, s) in self.stages.iter().enumerate() {
            if s.pool == 0 || s.pool > frames {
                return Err(Error::Config(format!(
                    "classifier stage {}: pool {} over {frames} frames",
                    i + 1,
                    s.pool
                )));
            }
            frames /= s.pool;
            chain.push(frames);
        }
        Ok(chain)
    }

    pub fn flat_features(&self) -> Result<usize> {
        let frames = self.frame_chain()?.last().copied().unwrap_or(self.input_frames);
        let channels = self.stages.last().map_or(self.in_channels, |s| s.filters);
        Ok(frames * channels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.input_frames == 0 || self.hidden == 0 {
            return Err(Error::Config("classifier: sizes must be positive".into()));
        }
        if self.stages.is_empty() {
            return Err(Error::Config("classifier: at least one stage is required".into()));
        }
        if self.stages.iter().any(|s| s.kernel % 2 == 0 || s.filters == 0) {
            return Err(Error::Config("classifier: kernels must be odd and filters positive".into()));
        }
        self.frame_chain().map(|_| ())
    }
}

/// Which leads feed the enhancer and classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "leads")]
pub enum LeadStrategy {
    /// One preprocessed lead in, one weight curve out.
    #[default]
    SingleLead,
    /// Every lead goes through the enhancer together.
    AllLeads(usize),
}

impl LeadStrategy {
    pub fn channels(self) -> usize {
        match self {
            LeadStrategy::SingleLead => 1,
            LeadStrategy::AllLeads(n) => n,
        }
    }
}

/// Training progress recorded in checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StageTag {
    #[serde(rename = "init")]
    Init,
    #[serde(rename = "stage-1")]
    Stage1,
    #[serde(rename = "stage-2")]
    Stage2,
    #[serde(rename = "stage-3")]
    Stage3,
    #[serde(rename = "danet-h")]
    DanetH,
    #[serde(rename = "baseline")]
    Baseline,
}

impl StageTag {
    pub fn as_str(self) -> &'static str {
        match self {
            StageTag::Init => "init",
            StageTag::Stage1 => "stage-1",
            StageTag::Stage2 => "stage-2",
            StageTag::Stage3 => "stage-3",
            StageTag::DanetH => "danet-h",
            StageTag::Baseline => "baseline",
        }
    }

    /// Row label used in metric tables.
    pub fn model_name(self) -> &'static str {
        match self {
            StageTag::Init => "untrained",
            StageTag::Stage1 => "stage-1 DANet",
            StageTag::Stage2 => "stage-2 DANet",
            StageTag::Stage3 => "stage-3 DANet",
            StageTag::DanetH => "DANet-h",
            StageTag::Baseline => "CNN",
        }
    }
}

impl fmt::Display for StageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StageTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            StageTag::Init,
            StageTag::Stage1,
            StageTag::Stage2,
            StageTag::Stage3,
            StageTag::DanetH,
            StageTag::Baseline,
        ]
        .into_iter()
        .find(|t| t.as_str() == s)
        .ok_or_else(|| Error::Config(format!("unknown stage tag {s:?}")))
    }
}
