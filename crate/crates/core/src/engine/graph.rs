//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation of one forward pass as a node. Nodes
//! reference their inputs by [`NodeId`], which always precede them, so
//! [`Graph::backward`] visits the tape in reverse insertion order.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ctc;
use super::kernels;
use super::recurrent::{self, BiCache, CellKind, DirWeights};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const BCE_EPSILON: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Softmax,
    None,
}

/// Parameter node ids of one bidirectional recurrent layer.
#[derive(Clone, Copy, Debug)]
pub struct RecurrentNodes {
    pub fw_w: NodeId,
    pub fw_u: NodeId,
    pub fw_b: NodeId,
    pub bw_w: NodeId,
    pub bw_u: NodeId,
    pub bw_b: NodeId,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv3x3 {
        input: NodeId,
        kernels: NodeId,
        bias: NodeId,
    },
    MaxPool2x2 {
        input: NodeId,
        argmax: Vec<usize>,
    },
    Affine {
        input: NodeId,
        weights: NodeId,
        bias: NodeId,
        rows: usize,
    },
    BiRecurrent {
        input: NodeId,
        kind: CellKind,
        params: RecurrentNodes,
        cache: Box<BiCache>,
    },
    Dropout {
        input: NodeId,
        scale: Vec<f64>,
    },
    Activate {
        input: NodeId,
        act: Activation,
    },
    Reshape {
        input: NodeId,
    },
    MapToSequence {
        input: NodeId,
        dims: (usize, usize, usize),
    },
    PadColumns {
        input: NodeId,
        left: usize,
        right: usize,
    },
    StackChannels {
        first: NodeId,
        second: NodeId,
    },
    Ctc {
        logits: NodeId,
        grad: Vec<f64>,
    },
    Bce {
        prediction: NodeId,
        label: f64,
    },
    WeightedSum {
        input: NodeId,
        weights: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    label: String,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, label: &str, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, label, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, label: &str, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, label, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn label(&self, id: NodeId) -> &str {
        &self.nodes[id.0].label
    }

    /// Gradient written by the last [`Graph::backward`] call.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].value.grad()
    }

    fn push(&mut self, value: Tensor, op: Op, label: &str, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            label: label.to_string(),
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    /// `H x W x Cin` input with `3 x 3 x Cin x Cout` kernels and `Cout` bias.
    pub fn conv3x3(&mut self, label: &str, input: NodeId, kernels: NodeId, bias: NodeId) -> Result<NodeId> {
        let s = self.shape(input).to_vec();
        let k = self.shape(kernels).to_vec();
        if s.len() != 3 || k.len() != 4 || k[0] != 3 || k[1] != 3 || k[2] != s[2] {
            return Err(Error::dim(format!("{label}: conv input {s:?} with kernels {k:?}")));
        }
        let cout = k[3];
        if self.shape(bias) != [cout] {
            return Err(Error::dim(format!("{label}: bias {:?} for {cout} filters", self.shape(bias))));
        }
        let out = kernels::conv3x3_forward(
            self.value(input).data(),
            (s[0], s[1], s[2]),
            self.value(kernels).data(),
            self.value(bias).data(),
            cout,
        );
        let value = Tensor::new(&[s[0], s[1], cout], out)?;
        let rg = self.needs(&[input, kernels, bias]);
        Ok(self.push(value, Op::Conv3x3 { input, kernels, bias }, label, rg))
    }

    pub fn maxpool2x2(&mut self, label: &str, input: NodeId) -> Result<NodeId> {
        let s = self.shape(input).to_vec();
        if s.len() != 3 || s[0] % 2 != 0 || s[1] % 2 != 0 {
            return Err(Error::dim(format!("{label}: 2x2 pooling needs even H and W, got {s:?}")));
        }
        let (out, argmax) = kernels::maxpool2x2_forward(self.value(input).data(), (s[0], s[1], s[2]));
        let value = Tensor::new(&[s[0] / 2, s[1] / 2, s[2]], out)?;
        let rg = self.needs(&[input]);
        Ok(self.push(value, Op::MaxPool2x2 { input, argmax }, label, rg))
    }

    /// Vector `N` times `N x M` plus bias.
    pub fn dense(&mut self, label: &str, input: NodeId, weights: NodeId, bias: NodeId) -> Result<NodeId> {
        let s = self.shape(input).to_vec();
        if s.len() != 1 {
            return Err(Error::dim(format!("{label}: dense input must be a vector, got {s:?}")));
        }
        self.affine(label, input, weights, bias, 1, s[0])
    }

    /// The same dense map applied to each row of a `T x D` input.
    pub fn time_distributed_dense(&mut self, label: &str, input: NodeId, weights: NodeId, bias: NodeId) -> Result<NodeId> {
        let s = self.shape(input).to_vec();
        if s.len() != 2 {
            return Err(Error::dim(format!("{label}: expected a T x D input, got {s:?}")));
        }
        self.affine(label, input, weights, bias, s[0], s[1])
    }

    fn affine(&mut self, label: &str, input: NodeId, weights: NodeId, bias: NodeId, rows: usize, n: usize) -> Result<NodeId> {
        let w = self.shape(weights).to_vec();
        if w.len() != 2 || w[0] != n {
            return Err(Error::dim(format!("{label}: weights {w:?} for input width {n}")));
        }
        let m = w[1];
        if self.shape(bias) != [m] {
            return Err(Error::dim(format!("{label}: bias {:?} for {m} outputs", self.shape(bias))));
        }
        let out = kernels::affine_forward(
            self.value(input).data(),
            rows,
            n,
            self.value(weights).data(),
            self.value(bias).data(),
            m,
        );
        let shape = if self.shape(input).len() == 1 { vec![m] } else { vec![rows, m] };
        let value = Tensor::new(&shape, out)?;
        let rg = self.needs(&[input, weights, bias]);
        Ok(self.push(value, Op::Affine { input, weights, bias, rows }, label, rg))
    }

    pub fn bidirectional_recurrent(
        &mut self,
        label: &str,
        input: NodeId,
        kind: CellKind,
        params: RecurrentNodes,
    ) -> Result<NodeId> {
        let s = self.shape(input).to_vec();
        if s.len() != 2 {
            return Err(Error::dim(format!("{label}: expected a T x F input, got {s:?}")));
        }
        let (steps, features) = (s[0], s[1]);
        if steps == 0 {
            return Err(Error::EmptySequence);
        }
        let u = self.shape(params.fw_u).to_vec();
        let gates = kind.gates();
        let hidden = u[0];
        for (w, uu, b) in [(params.fw_w, params.fw_u, params.fw_b), (params.bw_w, params.bw_u, params.bw_b)] {
            if self.shape(w) != [features, gates * hidden]
                || self.shape(uu) != [hidden, gates * hidden]
                || self.shape(b) != [gates * hidden]
            {
                return Err(Error::dim(format!("{label}: recurrent parameter shapes do not match F={features}, H={hidden}")));
            }
        }
        let (out, cache) = recurrent::bidirectional_forward(
            kind,
            self.value(input).data(),
            steps,
            features,
            hidden,
            self.dir_weights(params.fw_w, params.fw_u, params.fw_b),
            self.dir_weights(params.bw_w, params.bw_u, params.bw_b),
        );
        let value = Tensor::new(&[steps, 2 * hidden], out)?;
        let rg = self.needs(&[input, params.fw_w, params.fw_u, params.fw_b, params.bw_w, params.bw_u, params.bw_b]);
        Ok(self.push(
            value,
            Op::BiRecurrent {
                input,
                kind,
                params,
                cache: Box::new(cache),
            },
            label,
            rg,
        ))
    }

    fn dir_weights(&self, w: NodeId, u: NodeId, b: NodeId) -> DirWeights<'_> {
        DirWeights {
            w: self.value(w).data(),
            u: self.value(u).data(),
            b: self.value(b).data(),
        }
    }

    /// Inverted dropout. Identity (and no randomness consumed) outside training.
    pub fn dropout<R: Rng + ?Sized>(&mut self, label: &str, input: NodeId, rate: f64, training: bool, rng: &mut R) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Argument(format!("{label}: dropout rate {rate} outside [0, 1)")));
        }
        let n = self.value(input).len();
        let scale: Vec<f64> = if training && rate > 0.0 {
            let keep = 1.0 / (1.0 - rate);
            (0..n).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect()
        } else {
            vec![1.0; n]
        };
        let data = self.value(input).data().iter().zip(&scale).map(|(v, s)| v * s).collect();
        let value = Tensor::new(self.shape(input), data)?;
        let rg = self.needs(&[input]);
        Ok(self.push(value, Op::Dropout { input, scale }, label, rg))
    }

    pub fn activate(&mut self, label: &str, input: NodeId, act: Activation) -> Result<NodeId> {
        let x = self.value(input);
        let data = match act {
            Activation::Relu => x.data().iter().map(|&v| v.max(0.0)).collect(),
            Activation::Tanh => x.data().iter().map(|v| v.tanh()).collect(),
            Activation::Sigmoid => x.data().iter().map(|&v| kernels::sigmoid(v)).collect(),
            Activation::Softmax => {
                let cols = *x.shape().last().expect("rank >= 1");
                kernels::softmax_rows(x.data(), cols)
            }
            Activation::None => x.data().to_vec(),
        };
        let value = Tensor::new(x.shape(), data)?;
        let rg = self.needs(&[input]);
        Ok(self.push(value, Op::Activate { input, act }, label, rg))
    }

    pub fn reshape(&mut self, label: &str, input: NodeId, shape: &[usize]) -> Result<NodeId> {
        let value = self.value(input).clone().reshape(shape)?;
        let rg = self.needs(&[input]);
        Ok(self.push(value, Op::Reshape { input }, label, rg))
    }

    pub fn flatten(&mut self, label: &str, input: NodeId) -> Result<NodeId> {
        let n = self.value(input).len();
        self.reshape(label, input, &[n])
    }

    /// Reads an `H x W x C` feature map column by column: row `x` of the
    /// `W x (H*C)` result holds every `(y, c)` of image column `x`.
    pub fn map_to_sequence(&mut self, label: &str, input: NodeId) -> Result<NodeId> {
        let s = self.shape(input).to_vec();
        if s.len() != 3 {
            return Err(Error::dim(format!("{label}: expected H x W x C, got {s:?}")));
        }
        let (h, w, c) = (s[0], s[1], s[2]);
        let src = self.value(input).data();
        let mut out = vec![0.0; h * w * c];
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    out[x * h * c + y * c + ch] = src[(y * w + x) * c + ch];
                }
            }
        }
        let value = Tensor::new(&[w, h * c], out)?;
        let rg = self.needs(&[input]);
        Ok(self.push(value, Op::MapToSequence { input, dims: (h, w, c) }, label, rg))
    }

    /// Zero columns added on the left and right of a rank-2 input.
    pub fn pad_columns(&mut self, label: &str, input: NodeId, left: usize, right: usize) -> Result<NodeId> {
        let s = self.shape(input).to_vec();
        if s.len() != 2 {
            return Err(Error::dim(format!("{label}: expected a matrix, got {s:?}")));
        }
        let (rows, cols) = (s[0], s[1]);
        let width = left + cols + right;
        let src = self.value(input).data();
        let mut out = vec![0.0; rows * width];
        for r in 0..rows {
            out[r * width + left..r * width + left + cols].copy_from_slice(&src[r * cols..(r + 1) * cols]);
        }
        let value = Tensor::new(&[rows, width], out)?;
        let rg = self.needs(&[input]);
        Ok(self.push(value, Op::PadColumns { input, left, right }, label, rg))
    }

    /// Two `H x W` matrices interleaved into an `H x W x 2` image.
    pub fn stack_channels(&mut self, label: &str, first: NodeId, second: NodeId) -> Result<NodeId> {
        let (a, b) = (self.shape(first).to_vec(), self.shape(second).to_vec());
        if a.len() != 2 || a != b {
            return Err(Error::dim(format!("{label}: cannot stack {a:?} with {b:?}")));
        }
        let data: Vec<f64> = self
            .value(first)
            .data()
            .iter()
            .zip(self.value(second).data())
            .flat_map(|(&x, &y)| [x, y])
            .collect();
        let value = Tensor::new(&[a[0], a[1], 2], data)?;
        let rg = self.needs(&[first, second]);
        Ok(self.push(value, Op::StackChannels { first, second }, label, rg))
    }

    /// Scalar CTC loss of `T x classes` logits against `target`.
    pub fn ctc_loss(&mut self, label: &str, logits: NodeId, target: &[usize], blank: usize) -> Result<NodeId> {
        let s = self.shape(logits).to_vec();
        if s.len() != 2 {
            return Err(Error::dim(format!("{label}: expected T x classes logits, got {s:?}")));
        }
        let out = ctc::ctc_loss(self.value(logits).data(), s[0], s[1], blank, target)?;
        let rg = self.needs(&[logits]);
        Ok(self.push(Tensor::scalar(out.loss), Op::Ctc { logits, grad: out.grad }, label, rg))
    }

    /// Binary cross-entropy of a single probability, clamped to `[eps, 1 - eps]`.
    pub fn bce_loss(&mut self, label: &str, prediction: NodeId, target: f64) -> Result<NodeId> {
        if self.value(prediction).len() != 1 {
            return Err(Error::dim(format!("{label}: BCE expects a single probability")));
        }
        let p = self.value(prediction).data()[0];
        let value = Tensor::scalar(bce(p, target));
        let rg = self.needs(&[prediction]);
        Ok(self.push(value, Op::Bce { prediction, label: target }, label, rg))
    }

    /// Scalar `sum(w * x)`; a generic projection used to reduce any node to a loss.
    pub fn weighted_sum(&mut self, label: &str, input: NodeId, weights: Vec<f64>) -> Result<NodeId> {
        if weights.len() != self.value(input).len() {
            return Err(Error::dim(format!("{label}: {} weights for {} values", weights.len(), self.value(input).len())));
        }
        let v = self.value(input).data().iter().zip(&weights).map(|(a, b)| a * b).sum();
        let rg = self.needs(&[input]);
        Ok(self.push(Tensor::scalar(v), Op::WeightedSum { input, weights }, label, rg))
    }

    /// Reverse-mode accumulation from the scalar `loss`. Every node that
    /// requires a gradient has it written into its tensor.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::dim("backward needs a scalar loss node"));
        }
        let v = self.value(loss).data()[0];
        if !v.is_finite() {
            return Err(Error::NonFinite {
                layer: self.nodes[loss.0].label.clone(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    layer: self.nodes[i].label.clone(),
                });
            }
            for (target, contribution) in self.local_grads(i, &g) {
                if !self.nodes[target.0].requires_grad {
                    continue;
                }
                match &mut grads[target.0] {
                    Some(acc) => acc.iter_mut().zip(&contribution).for_each(|(a, c)| *a += c),
                    slot @ None => *slot = Some(contribution),
                }
            }
            self.nodes[i].value.set_grad(g)?;
        }
        Ok(())
    }

    fn local_grads(&self, i: usize, g: &[f64]) -> Vec<(NodeId, Vec<f64>)> {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::Conv3x3 { input, kernels, bias } => {
                let s = self.shape(*input);
                let cout = self.shape(*kernels)[3];
                let (gi, gk, gb) = kernels::conv3x3_backward(
                    self.value(*input).data(),
                    (s[0], s[1], s[2]),
                    self.value(*kernels).data(),
                    cout,
                    g,
                    self.nodes[input.0].requires_grad,
                );
                let mut out = vec![(*kernels, gk), (*bias, gb)];
                if !gi.is_empty() {
                    out.push((*input, gi));
                }
                out
            }
            Op::MaxPool2x2 { input, argmax } => {
                vec![(*input, kernels::maxpool2x2_backward(self.value(*input).len(), argmax, g))]
            }
            Op::Affine { input, weights, bias, rows } => {
                let w = self.shape(*weights);
                let (gi, gw, gb) =
                    kernels::affine_backward(self.value(*input).data(), *rows, w[0], self.value(*weights).data(), w[1], g);
                vec![(*input, gi), (*weights, gw), (*bias, gb)]
            }
            Op::BiRecurrent { input, kind, params, cache } => {
                let s = self.shape(*input);
                let hidden = self.shape(params.fw_u)[0];
                let (gx, gf, gb) = recurrent::bidirectional_backward(
                    *kind,
                    self.value(*input).data(),
                    s[0],
                    s[1],
                    hidden,
                    self.dir_weights(params.fw_w, params.fw_u, params.fw_b),
                    self.dir_weights(params.bw_w, params.bw_u, params.bw_b),
                    cache,
                    g,
                );
                vec![
                    (*input, gx),
                    (params.fw_w, gf.w),
                    (params.fw_u, gf.u),
                    (params.fw_b, gf.b),
                    (params.bw_w, gb.w),
                    (params.bw_u, gb.u),
                    (params.bw_b, gb.b),
                ]
            }
            Op::Dropout { input, scale } => {
                vec![(*input, g.iter().zip(scale).map(|(a, b)| a * b).collect())]
            }
            Op::Activate { input, act } => {
                let y = node.value.data();
                let gi = match act {
                    Activation::Relu => self
                        .value(*input)
                        .data()
                        .iter()
                        .zip(g)
                        .map(|(&x, &gv)| if x > 0.0 { gv } else { 0.0 })
                        .collect(),
                    Activation::Tanh => y.iter().zip(g).map(|(&yv, &gv)| gv * (1.0 - yv * yv)).collect(),
                    Activation::Sigmoid => y.iter().zip(g).map(|(&yv, &gv)| gv * yv * (1.0 - yv)).collect(),
                    Activation::Softmax => {
                        let cols = *node.value.shape().last().expect("rank >= 1");
                        let mut gi = vec![0.0; y.len()];
                        for ((yr, gr), out) in y.chunks_exact(cols).zip(g.chunks_exact(cols)).zip(gi.chunks_exact_mut(cols)) {
                            let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                            for ((o, &yv), &gv) in out.iter_mut().zip(yr).zip(gr) {
                                *o = yv * (gv - dot);
                            }
                        }
                        gi
                    }
                    Activation::None => g.to_vec(),
                };
                vec![(*input, gi)]
            }
            Op::Reshape { input } => vec![(*input, g.to_vec())],
            Op::MapToSequence { input, dims: (h, w, c) } => {
                let (h, w, c) = (*h, *w, *c);
                let mut gi = vec![0.0; h * w * c];
                for y in 0..h {
                    for x in 0..w {
                        for ch in 0..c {
                            gi[(y * w + x) * c + ch] = g[x * h * c + y * c + ch];
                        }
                    }
                }
                vec![(*input, gi)]
            }
            Op::PadColumns { input, left, right } => {
                let s = self.shape(*input);
                let (rows, cols) = (s[0], s[1]);
                let width = left + cols + right;
                let mut gi = vec![0.0; rows * cols];
                for r in 0..rows {
                    gi[r * cols..(r + 1) * cols].copy_from_slice(&g[r * width + left..r * width + left + cols]);
                }
                vec![(*input, gi)]
            }
            Op::StackChannels { first, second } => {
                let ga = g.iter().step_by(2).copied().collect();
                let gb = g.iter().skip(1).step_by(2).copied().collect();
                vec![(*first, ga), (*second, gb)]
            }
            Op::Ctc { logits, grad } => vec![(*logits, grad.iter().map(|v| v * g[0]).collect())],
            Op::Bce { prediction, label } => {
                let p = self.value(*prediction).data()[0];
                let d = if p < BCE_EPSILON || p > 1.0 - BCE_EPSILON {
                    0.0
                } else {
                    -label / p + (1.0 - label) / (1.0 - p)
                };
                vec![(*prediction, vec![d * g[0]])]
            }
            Op::WeightedSum { input, weights } => vec![(*input, weights.iter().map(|w| w * g[0]).collect())],
        }
    }
}

/// Clamped binary cross-entropy of probability `p` against label `y`.
pub fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}
