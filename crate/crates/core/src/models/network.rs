use rand::Rng;

use super::config::{ClassifierConfig, EnhancerConfig};
use crate::error::Result;
use crate::nn::{Graph, NodeId, ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Conv {
    pub w: ParamId,
    pub b: ParamId,
    pub dilation: usize,
}

impl Conv {
    fn build<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        (c_out, c_in, k): (usize, usize, usize),
        dilation: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            w: store.add_glorot(format!("{name}.w"), &[c_out, c_in, k], rng),
            b: store.add_zeros(format!("{name}.b"), &[c_out]),
            dilation,
        }
    }

    fn apply(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let (w, b) = (g.param(self.w), g.param(self.b));
        g.conv1d(x, w, b, self.dilation)
    }

    fn ids(&self) -> [ParamId; 2] {
        [self.w, self.b]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

impl Dense {
    fn build<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, (f_out, f_in): (usize, usize), rng: &mut R) -> Self {
        Self {
            w: store.add_glorot(format!("{name}.w"), &[f_out, f_in], rng),
            b: store.add_zeros(format!("{name}.b"), &[f_out]),
        }
    }

    fn apply(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let (w, b) = (g.param(self.w), g.param(self.b));
        g.dense(x, w, b)
    }
}

/// Nodes produced by one enhancer pass.
#[derive(Debug, Clone)]
pub struct EnhancerNodes {
    /// `(input, output)` of every residual pair.
    pub pairs: Vec<(NodeId, NodeId)>,
    /// Sigmoid output, shape `(1, frames)`.
    pub weights: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enhancer {
    pub config: EnhancerConfig,
    projection: Option<Conv>,
    layers: Vec<Conv>,
    head: Conv,
}

impl Enhancer {
    pub fn build<R: Rng + ?Sized>(config: &EnhancerConfig, store: &mut ParamStore, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let f = config.filters;
        let projection = (config.in_channels != f)
            .then(|| Conv::build(store, "enhancer.proj", (f, config.in_channels, 1), 1, rng));
        let mut layers = Vec::with_capacity(config.n_dilated_layers);
        for i in 0..config.n_dilated_layers {
            let c_in = if i == 0 { config.in_channels } else { f };
            let conv = Conv::build(
                store,
                &format!("enhancer.dilated{}", i + 1),
                (f, c_in, config.kernel),
                config.dilation,
                rng,
            );
            if config.zero_init_residual && i % 2 == 1 {
                store.get_mut(conv.w).value.data_mut().fill(0.0);
            }
            layers.push(conv);
        }
        let head = Conv::build(store, "enhancer.head", (1, f, config.head_kernel), 1, rng);
        Ok(Self {
            config: config.clone(),
            projection,
            layers,
            head,
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.projection
            .iter()
            .chain(&self.layers)
            .chain([&self.head])
            .flat_map(Conv::ids)
            .collect()
    }

    pub fn head_bias(&self) -> ParamId {
        self.head.b
    }

    /// `x: (in_channels, frames)` to weights `(1, frames)`.
    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<EnhancerNodes> {
        let mut pairs = Vec::with_capacity(self.layers.len() / 2);
        let mut h = x;
        for (p, pair) in self.layers.chunks(2).enumerate() {
            let input = h;
            let skip = match (&self.projection, p) {
                (Some(proj), 0) => proj.apply(g, input)?,
                _ => input,
            };
            let a = pair[0].apply(g, input)?;
            let a = g.relu(a)?;
            let b = pair[1].apply(g, a)?;
            let b = g.relu(b)?;
            h = g.add(skip, b)?;
            pairs.push((skip, h));
        }
        let logits = self.head.apply(g, h)?;
        let weights = g.sigmoid(logits)?;
        Ok(EnhancerNodes { pairs, weights })
    }
}

/// Nodes produced by one classifier pass.
#[derive(Debug, Clone)]
pub struct ClassifierNodes {
    /// `(conv output, pooled output)` per stage.
    pub stages: Vec<(NodeId, NodeId)>,
    pub flat: NodeId,
    pub hidden: NodeId,
    pub logit: NodeId,
    pub prob: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub config: ClassifierConfig,
    convs: Vec<Conv>,
    hidden: Dense,
    output: Dense,
}

impl Classifier {
    pub fn build<R: Rng + ?Sized>(config: &ClassifierConfig, store: &mut ParamStore, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut c_in = config.in_channels;
        let mut convs = Vec::with_capacity(config.stages.len());
        for (i, s) in config.stages.iter().enumerate() {
            convs.push(Conv::build(
                store,
                &format!("classifier.conv{}", i + 1),
                (s.filters, c_in, s.kernel),
                1,
                rng,
            ));
            c_in = s.filters;
        }
        let flat = config.flat_features()?;
        let hidden = Dense::build(store, "classifier.hidden", (config.hidden, flat), rng);
        let output = Dense::build(store, "classifier.output", (1, config.hidden), rng);
        Ok(Self {
            config: config.clone(),
            convs,
            hidden,
            output,
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.convs
            .iter()
            .flat_map(Conv::ids)
            .chain([self.hidden.w, self.hidden.b, self.output.w, self.output.b])
            .collect()
    }

    /// `x: (in_channels, input_frames)` to a probability.
    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<ClassifierNodes> {
        let linear = self.config.linear_debug;
        let mut stages = Vec::with_capacity(self.convs.len());
        let mut h = x;
        for (conv, spec) in self.convs.iter().zip(&self.config.stages) {
            let mut c = conv.apply(g, h)?;
            if !linear {
                c = g.relu(c)?;
            }
            h = g.maxpool(c, spec.pool)?;
            stages.push((c, h));
        }
        let flat = g.flatten(h)?;
        let mut hidden = self.hidden.apply(g, flat)?;
        if !linear {
            hidden = g.relu(hidden)?;
        }
        let logit = self.output.apply(g, hidden)?;
        let prob = g.sigmoid(logit)?;
        Ok(ClassifierNodes {
            stages,
            flat,
            hidden,
            logit,
            prob,
        })
    }
}
