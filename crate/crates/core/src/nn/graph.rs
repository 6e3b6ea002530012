use super::ops::{self, BCE_EPS};
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Conv1d { x: NodeId, w: NodeId, b: NodeId, dilation: usize },
    MaxPool { x: NodeId, argmax: Vec<usize> },
    Dense { x: NodeId, w: NodeId, b: NodeId },
    Relu(NodeId),
    Sigmoid(NodeId),
    Add(NodeId, NodeId),
    ScaleFrames { x: NodeId, w: NodeId },
    Flatten(NodeId),
    Mse(NodeId, NodeId),
    Bce { p: NodeId, target: f64 },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Record of one forward pass over parameters borrowed from a store.
#[derive(Debug)]
pub struct Graph<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node and parameter reached.
#[derive(Debug, Clone)]
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn node(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes.get(id.0).and_then(Option::as_ref)
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(id.0).and_then(Option::as_ref)
    }

    /// Adds `scale * grad` of every parameter into the store's accumulators.
    pub fn accumulate_into(&self, store: &mut ParamStore, scale: f64) {
        for (i, g) in self.params.iter().enumerate() {
            if let Some(g) = g {
                let acc = &mut store.get_mut(ParamId(i)).grad;
                for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += scale * v;
                }
            }
        }
    }
}

impl<'a> Graph<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Self { store, nodes: Vec::new() }
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes
            .get(id.0)
            .ok_or_else(|| Error::State(format!("node {} is not part of this graph", id.0)))
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input; gradients are still reported for it.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Input)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        let value = self.store.value(id).clone();
        self.push(value, Op::Param(id))
    }

    pub fn conv1d(&mut self, x: NodeId, w: NodeId, b: NodeId, dilation: usize) -> Result<NodeId> {
        let y = ops::conv1d(&self.node(x)?.value, &self.node(w)?.value, &self.node(b)?.value, dilation)?;
        Ok(self.push(y, Op::Conv1d { x, w, b, dilation }))
    }

    pub fn maxpool(&mut self, x: NodeId, pool: usize) -> Result<NodeId> {
        let (y, argmax) = ops::maxpool1d(&self.node(x)?.value, pool)?;
        Ok(self.push(y, Op::MaxPool { x, argmax }))
    }

    pub fn dense(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let y = ops::dense(&self.node(x)?.value, &self.node(w)?.value, &self.node(b)?.value)?;
        Ok(self.push(y, Op::Dense { x, w, b }))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let y = ops::relu(&self.node(x)?.value);
        Ok(self.push(y, Op::Relu(x)))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let y = ops::sigmoid(&self.node(x)?.value);
        Ok(self.push(y, Op::Sigmoid(x)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (&self.node(a)?.value, &self.node(b)?.value);
        if va.shape() != vb.shape() {
            return Err(Error::Shape(format!("add: {:?} vs {:?}", va.shape(), vb.shape())));
        }
        let mut y = va.clone();
        y.add_assign(vb);
        Ok(self.push(y, Op::Add(a, b)))
    }

    /// Multiplies every channel of `x: (c, n)` by `w: (1, n)` frame by frame.
    pub fn scale_frames(&mut self, x: NodeId, w: NodeId) -> Result<NodeId> {
        let (vx, vw) = (&self.node(x)?.value, &self.node(w)?.value);
        let (c, n) = vx.dims2("scale_frames input")?;
        if vw.len() != n {
            return Err(Error::Shape(format!("scale_frames: {} weights for {n} frames", vw.len())));
        }
        let mut y = vx.data().to_vec();
        for ch in 0..c {
            for (v, k) in y[ch * n..(ch + 1) * n].iter_mut().zip(vw.data()) {
                *v *= k;
            }
        }
        Ok(self.push(Tensor::from_parts(vec![c, n], y), Op::ScaleFrames { x, w }))
    }

    /// Channel-major flatten to a feature vector.
    pub fn flatten(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.node(x)?.value.clone();
        let n = v.len();
        Ok(self.push(v.reshape(vec![n])?, Op::Flatten(x)))
    }

    pub fn mse(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let loss = ops::mse_loss(self.node(a)?.value.data(), self.node(b)?.value.data())?;
        Ok(self.push(Tensor::scalar(loss), Op::Mse(a, b)))
    }

    /// Binary cross-entropy of a single probability against `target`.
    pub fn bce(&mut self, p: NodeId, target: f64) -> Result<NodeId> {
        let v = &self.node(p)?.value;
        if v.len() != 1 {
            return Err(Error::Shape(format!("bce expects one probability, got {:?}", v.shape())));
        }
        let loss = ops::bce_loss(v.data(), &[target])?;
        Ok(self.push(Tensor::scalar(loss), Op::Bce { p, target }))
    }

    /// Reverse-mode gradients of the scalar node `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let root = self.node(loss).map_err(|_| {
            Error::State("backward called without a recorded forward pass for this node".into())
        })?;
        if root.value.len() != 1 {
            return Err(Error::Shape(format!("backward from non-scalar {:?}", root.value.shape())));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut params: Vec<Option<Tensor>> = vec![None; self.store.len()];

        fn acc(slot: &mut Option<Tensor>, g: Tensor) {
            match slot {
                Some(t) => t.add_assign(&g),
                None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param(pid) => acc(&mut params[pid.0], dy.clone()),
                Op::Conv1d { x, w, b, dilation } => {
                    let (dx, dw, db) =
                        ops::conv1d_backward(&self.nodes[x.0].value, &self.nodes[w.0].value, *dilation, &dy);
                    acc(&mut grads[x.0], dx);
                    acc(&mut grads[w.0], dw);
                    acc(&mut grads[b.0], db);
                }
                Op::MaxPool { x, argmax } => {
                    let mut dx = Tensor::zeros(self.nodes[x.0].value.shape());
                    for (g, &src) in dy.data().iter().zip(argmax) {
                        dx.data_mut()[src] += g;
                    }
                    acc(&mut grads[x.0], dx);
                }
                Op::Dense { x, w, b } => {
                    let (vx, vw) = (&self.nodes[x.0].value, &self.nodes[w.0].value);
                    let (f_out, f_in) = (vw.shape()[0], vw.shape()[1]);
                    let mut dx = vec![0.0; f_in];
                    let mut dw = vec![0.0; f_out * f_in];
                    for o in 0..f_out {
                        let g = dy.data()[o];
                        for i in 0..f_in {
                            dx[i] += g * vw.data()[o * f_in + i];
                            dw[o * f_in + i] = g * vx.data()[i];
                        }
                    }
                    acc(&mut grads[x.0], Tensor::from_parts(vx.shape().to_vec(), dx));
                    acc(&mut grads[w.0], Tensor::from_parts(vec![f_out, f_in], dw));
                    acc(&mut grads[b.0], dy.clone());
                }
                Op::Relu(x) => {
                    let vx = &self.nodes[x.0].value;
                    let d = dy
                        .data()
                        .iter()
                        .zip(vx.data())
                        .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                        .collect();
                    acc(&mut grads[x.0], Tensor::from_parts(vx.shape().to_vec(), d));
                }
                Op::Sigmoid(x) => {
                    let d = dy
                        .data()
                        .iter()
                        .zip(node.value.data())
                        .map(|(g, s)| g * s * (1.0 - s))
                        .collect();
                    acc(&mut grads[x.0], Tensor::from_parts(node.value.shape().to_vec(), d));
                }
                Op::Add(a, b) => {
                    acc(&mut grads[a.0], dy.clone());
                    acc(&mut grads[b.0], dy.clone());
                }
                Op::ScaleFrames { x, w } => {
                    let (vx, vw) = (&self.nodes[x.0].value, &self.nodes[w.0].value);
                    let (c, n) = (vx.shape()[0], vx.shape()[1]);
                    let mut dx = dy.data().to_vec();
                    let mut dw = vec![0.0; n];
                    for ch in 0..c {
                        let rows = ch * n..(ch + 1) * n;
                        for ((d, k), (xv, gw)) in dx[rows.clone()]
                            .iter_mut()
                            .zip(vw.data())
                            .zip(vx.data()[rows.clone()].iter().zip(dw.iter_mut()))
                        {
                            *gw += *d * xv;
                            *d *= k;
                        }
                    }
                    acc(&mut grads[x.0], Tensor::from_parts(vec![c, n], dx));
                    acc(&mut grads[w.0], Tensor::from_parts(vw.shape().to_vec(), dw));
                }
                Op::Flatten(x) => {
                    let shape = self.nodes[x.0].value.shape().to_vec();
                    acc(&mut grads[x.0], dy.clone().reshape(shape)?);
                }
                Op::Mse(a, b) => {
                    let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let k = 2.0 * dy.data()[0] / va.len() as f64;
                    let da: Vec<f64> = va.data().iter().zip(vb.data()).map(|(x, y)| k * (x - y)).collect();
                    let db = da.iter().map(|v| -v).collect();
                    acc(&mut grads[a.0], Tensor::from_parts(va.shape().to_vec(), da));
                    acc(&mut grads[b.0], Tensor::from_parts(vb.shape().to_vec(), db));
                }
                Op::Bce { p, target } => {
                    let vp = &self.nodes[p.0].value;
                    let pc = vp.data()[0].clamp(BCE_EPS, 1.0 - BCE_EPS);
                    let d = dy.data()[0] * (-target / pc + (1.0 - target) / (1.0 - pc));
                    acc(&mut grads[p.0], Tensor::from_parts(vp.shape().to_vec(), vec![d]));
                }
            }
            grads[idx] = Some(dy);
        }
        grads.resize(self.nodes.len(), None);
        Ok(Gradients { nodes: grads, params })
    }
}
