//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every forward op appends one node holding its output value. Node ids are
//! handed out in push order, so the node list is already topologically
//! sorted and the backward pass is a single reverse sweep.

use super::tensor::{matmul_nt_raw, matmul_tn_raw};
use super::{NumericsError, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    Constant,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    Softmax(NodeId, Axis),
    Lookup { table: NodeId, ids: Vec<usize> },
    Mean(NodeId, Axis),
    Sum(NodeId, Axis),
    CrossEntropy { logits: NodeId, target: usize },
    Pick(NodeId, usize),
}

impl Op {
    fn kind(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::Scale(..) => "scale",
            Op::Relu(_) => "relu",
            Op::Softmax(..) => "softmax",
            Op::Lookup { .. } => "embedding_lookup",
            Op::Mean(..) => "mean",
            Op::Sum(..) => "sum",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::Pick(..) => "pick",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// How relu nodes route gradients during the backward sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ReluRule {
    #[default]
    Standard,
    /// Negative upstream gradients are zeroed before the usual relu mask.
    GuidedClamp,
    /// Multiplier `(relu(x) - relu(x0)) / (x - x0)` against a reference pass.
    DeepLiftRescale,
}

/// Backward-pass configuration. `baseline_activations` must be a tape built
/// by the same graph-building code on the reference input.
#[derive(Clone, Copy, Debug, Default)]
pub struct BackwardPolicy<'a> {
    pub relu_rule: ReluRule,
    pub baseline_activations: Option<&'a Tape>,
}

impl<'a> BackwardPolicy<'a> {
    pub fn standard() -> Self {
        Self::default()
    }

    pub fn guided() -> Self {
        Self {
            relu_rule: ReluRule::GuidedClamp,
            baseline_activations: None,
        }
    }

    pub fn rescale(baseline: &'a Tape) -> Self {
        Self {
            relu_rule: ReluRule::DeepLiftRescale,
            baseline_activations: Some(baseline),
        }
    }
}

/// Gradients of a scalar output with respect to every node on the tape.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `id`; nodes the output does not depend on get zeros.
    pub fn wrt(&self, id: NodeId) -> Tensor {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[id.0]),
        }
    }

    pub fn take(&mut self, id: NodeId) -> Tensor {
        match self.grads[id.0].take() {
            Some(g) => g,
            None => Tensor::zeros(&self.shapes[id.0]),
        }
    }
}

/// Records forward ops for a single evaluation.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn op_kind(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.kind()
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn push_op(&mut self, op: Op, value: Tensor, inputs: &[NodeId]) -> NodeId {
        let rg = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.push(op, value, rg)
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Result<NodeId, NumericsError> {
        let value = value.ensure_finite("leaf")?;
        Ok(self.push(Op::Leaf, value, true))
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<NodeId, NumericsError> {
        let value = value.ensure_finite("constant")?;
        Ok(self.push(Op::Constant, value, false))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let out = self.value(a).matmul(self.value(b))?.ensure_finite("matmul")?;
        Ok(self.push_op(Op::MatMul(a, b), out, &[a, b]))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let out = self.value(a).transpose()?;
        Ok(self.push_op(Op::Transpose(a), out, &[a]))
    }

    /// Elementwise sum; `b` may also be a `[1, n]` row broadcast over `a`'s rows.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let (va, vb) = (self.value(a), self.value(b));
        let out = if va.shape() == vb.shape() {
            va.zip_map(vb, |x, y| x + y)
        } else {
            let (m, n) = va.dims2()?;
            match vb.shape() {
                [1, n2] if *n2 == n => {
                    let mut data = va.data().to_vec();
                    for r in 0..m {
                        for (o, &bv) in data[r * n..(r + 1) * n].iter_mut().zip(vb.data()) {
                            *o += bv;
                        }
                    }
                    Tensor::matrix(m, n, data)
                }
                _ => {
                    return Err(NumericsError::Shape {
                        op: "add",
                        left: va.shape().to_vec(),
                        right: vb.shape().to_vec(),
                    })
                }
            }
        };
        let out = out.ensure_finite("add")?;
        Ok(self.push_op(Op::Add(a, b), out, &[a, b]))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId, NumericsError> {
        let out = self.value(a).map(|v| v * factor).ensure_finite("scale")?;
        Ok(self.push_op(Op::Scale(a, factor), out, &[a]))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let out = self.value(a).map(|v| v.max(0.0));
        Ok(self.push_op(Op::Relu(a), out, &[a]))
    }

    pub fn softmax(&mut self, a: NodeId, axis: Axis) -> Result<NodeId, NumericsError> {
        let out = softmax(self.value(a), axis)?.ensure_finite("softmax")?;
        Ok(self.push_op(Op::Softmax(a, axis), out, &[a]))
    }

    /// Gathers rows of `table` (`[vocab, dim]`) into a `[ids.len(), dim]` matrix.
    pub fn embedding_lookup(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId, NumericsError> {
        let t = self.value(table);
        let (vocab, dim) = t.dims2()?;
        let mut data = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            if id >= vocab {
                return Err(NumericsError::Index { index: id, bound: vocab });
            }
            data.extend_from_slice(t.row_slice(id));
        }
        let out = Tensor::matrix(ids.len(), dim, data);
        Ok(self.push_op(
            Op::Lookup {
                table,
                ids: ids.to_vec(),
            },
            out,
            &[table],
        ))
    }

    pub fn mean(&mut self, a: NodeId, axis: Axis) -> Result<NodeId, NumericsError> {
        let (m, n) = self.value(a).dims2()?;
        let count = match axis {
            Axis::Rows => m,
            Axis::Cols => n,
        };
        if count == 0 {
            return Err(NumericsError::Empty { op: "mean" });
        }
        let out = reduce_sum(self.value(a), axis)?.map(|v| v / count as f64);
        Ok(self.push_op(Op::Mean(a, axis), out, &[a]))
    }

    pub fn sum(&mut self, a: NodeId, axis: Axis) -> Result<NodeId, NumericsError> {
        let out = reduce_sum(self.value(a), axis)?.ensure_finite("sum")?;
        Ok(self.push_op(Op::Sum(a, axis), out, &[a]))
    }

    /// Softmax cross-entropy of a `[1, classes]` logit row against `target`.
    pub fn cross_entropy(&mut self, logits: NodeId, target: usize) -> Result<NodeId, NumericsError> {
        let v = self.value(logits);
        let (r, c) = v.dims2()?;
        if r != 1 {
            return Err(NumericsError::Rank {
                expected: 1,
                shape: v.shape().to_vec(),
            });
        }
        if target >= c {
            return Err(NumericsError::Index { index: target, bound: c });
        }
        let lse = log_sum_exp(v.data());
        let loss = Tensor::scalar(lse - v.data()[target]).ensure_finite("cross_entropy")?;
        Ok(self.push_op(Op::CrossEntropy { logits, target }, loss, &[logits]))
    }

    /// Selects one element (flat index) as a scalar.
    pub fn pick(&mut self, a: NodeId, index: usize) -> Result<NodeId, NumericsError> {
        let v = self.value(a);
        if index >= v.len() {
            return Err(NumericsError::Index {
                index,
                bound: v.len(),
            });
        }
        let out = Tensor::scalar(v.data()[index]);
        Ok(self.push_op(Op::Pick(a, index), out, &[a]))
    }

    /// Reverse sweep from a scalar `output`.
    pub fn grad(&self, output: NodeId, policy: &BackwardPolicy<'_>) -> Result<Gradients, NumericsError> {
        let out_value = self.value(output);
        if out_value.len() != 1 {
            return Err(NumericsError::NotScalar {
                shape: out_value.shape().to_vec(),
            });
        }
        let baseline = match (policy.relu_rule, policy.baseline_activations) {
            (ReluRule::DeepLiftRescale, None) => return Err(NumericsError::MissingBaseline),
            (ReluRule::DeepLiftRescale, Some(b)) => {
                self.check_same_structure(b)?;
                Some(b)
            }
            _ => None,
        };

        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Tensor::new(out_value.shape().to_vec(), vec![1.0])?);

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if !g.is_finite() {
                return Err(NumericsError::NonFinite { op: "backward" });
            }
            match &node.op {
                Op::Leaf | Op::Constant => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let va = &self.nodes[a.0].value;
                    let vb = &self.nodes[b.0].value;
                    let (m, k) = va.dims2()?;
                    let (_, n) = vb.dims2()?;
                    if self.nodes[a.0].requires_grad {
                        let ga = Tensor::matrix(m, k, matmul_nt_raw(g.data(), vb.data(), m, n, k));
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.nodes[b.0].requires_grad {
                        let gb = Tensor::matrix(k, n, matmul_tn_raw(va.data(), g.data(), m, k, n));
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()?),
                Op::Add(a, b) => {
                    let vb_shape = self.nodes[b.0].value.shape().to_vec();
                    if self.nodes[b.0].requires_grad {
                        let gb = if vb_shape == g.shape() {
                            g.clone()
                        } else {
                            reduce_sum(&g, Axis::Rows)?
                        };
                        accumulate(&mut grads, *b, gb);
                    }
                    accumulate(&mut grads, *a, g);
                }
                Op::Scale(a, f) => {
                    let f = *f;
                    accumulate(&mut grads, *a, g.map(|v| v * f));
                }
                Op::Relu(a) => {
                    let x = &self.nodes[a.0].value;
                    let ga = match policy.relu_rule {
                        ReluRule::Standard => g.zip_map(x, |gv, xv| if xv > 0.0 { gv } else { 0.0 }),
                        ReluRule::GuidedClamp => {
                            g.zip_map(x, |gv, xv| if xv > 0.0 { gv.max(0.0) } else { 0.0 })
                        }
                        ReluRule::DeepLiftRescale => {
                            let x0 = &baseline.expect("validated above").nodes[a.0].value;
                            let data = g
                                .data()
                                .iter()
                                .zip(x.data())
                                .zip(x0.data())
                                .map(|((&gv, &xv), &x0v)| gv * rescale_multiplier(xv, x0v))
                                .collect();
                            Tensor::new(g.shape().to_vec(), data)?
                        }
                    };
                    accumulate(&mut grads, *a, ga);
                }
                Op::Softmax(a, axis) => {
                    let y = &node.value;
                    accumulate(&mut grads, *a, softmax_backward(y, &g, *axis)?);
                }
                Op::Lookup { table, ids } => {
                    let (vocab, dim) = self.nodes[table.0].value.dims2()?;
                    let mut gt = grads[table.0]
                        .take()
                        .unwrap_or_else(|| Tensor::zeros(&[vocab, dim]));
                    let data = gt.data_mut();
                    for (r, &id) in ids.iter().enumerate() {
                        let src = &g.data()[r * dim..(r + 1) * dim];
                        for (o, &v) in data[id * dim..(id + 1) * dim].iter_mut().zip(src) {
                            *o += v;
                        }
                    }
                    grads[table.0] = Some(gt);
                }
                Op::Mean(a, axis) | Op::Sum(a, axis) => {
                    let (m, n) = self.nodes[a.0].value.dims2()?;
                    let divisor = match (&node.op, axis) {
                        (Op::Mean(..), Axis::Rows) => m as f64,
                        (Op::Mean(..), Axis::Cols) => n as f64,
                        _ => 1.0,
                    };
                    let mut data = vec![0.0; m * n];
                    for r in 0..m {
                        for c in 0..n {
                            let gv = match axis {
                                Axis::Rows => g.data()[c],
                                Axis::Cols => g.data()[r],
                            };
                            data[r * n + c] = gv / divisor;
                        }
                    }
                    accumulate(&mut grads, *a, Tensor::matrix(m, n, data));
                }
                Op::CrossEntropy { logits, target } => {
                    let v = &self.nodes[logits.0].value;
                    let gs = g.data()[0];
                    let lse = log_sum_exp(v.data());
                    let data = v
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(i, &l)| {
                            let p = (l - lse).exp();
                            gs * (p - if i == *target { 1.0 } else { 0.0 })
                        })
                        .collect();
                    accumulate(&mut grads, *logits, Tensor::new(v.shape().to_vec(), data)?);
                }
                Op::Pick(a, index) => {
                    let mut ga = Tensor::zeros(self.nodes[a.0].value.shape());
                    ga.data_mut()[*index] = g.data()[0];
                    accumulate(&mut grads, *a, ga);
                }
            }
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn check_same_structure(&self, other: &Tape) -> Result<(), NumericsError> {
        let same = self.nodes.len() == other.nodes.len()
            && self.nodes.iter().zip(&other.nodes).all(|(a, b)| {
                a.op.kind() == b.op.kind() && a.value.shape() == b.value.shape()
            });
        if same {
            Ok(())
        } else {
            Err(NumericsError::BaselineMismatch)
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn rescale_multiplier(x: f64, x0: f64) -> f64 {
    let dx = x - x0;
    if dx.abs() > 1e-10 {
        (x.max(0.0) - x0.max(0.0)) / dx
    } else if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + v.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

fn reduce_sum(t: &Tensor, axis: Axis) -> Result<Tensor, NumericsError> {
    let (m, n) = t.dims2()?;
    Ok(match axis {
        Axis::Rows => {
            let mut out = vec![0.0; n];
            for r in 0..m {
                for (o, v) in out.iter_mut().zip(t.row_slice(r)) {
                    *o += v;
                }
            }
            Tensor::matrix(1, n, out)
        }
        Axis::Cols => Tensor::matrix(m, 1, (0..m).map(|r| t.row_slice(r).iter().sum()).collect()),
    })
}

/// Numerically stable softmax of a rank-2 tensor along `axis`.
pub fn softmax(t: &Tensor, axis: Axis) -> Result<Tensor, NumericsError> {
    let (m, n) = t.dims2()?;
    let mut out = t.data().to_vec();
    let lanes: Vec<Vec<usize>> = match axis {
        Axis::Cols => (0..m).map(|r| (0..n).map(|c| r * n + c).collect()).collect(),
        Axis::Rows => (0..n).map(|c| (0..m).map(|r| r * n + c).collect()).collect(),
    };
    for lane in lanes {
        let max = lane.iter().map(|&i| out[i]).fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for &i in &lane {
            out[i] = (out[i] - max).exp();
            total += out[i];
        }
        for &i in &lane {
            out[i] /= total;
        }
    }
    Ok(Tensor::matrix(m, n, out))
}

fn softmax_backward(y: &Tensor, g: &Tensor, axis: Axis) -> Result<Tensor, NumericsError> {
    let (m, n) = y.dims2()?;
    let mut out = vec![0.0; m * n];
    let (outer, inner) = match axis {
        Axis::Cols => (m, n),
        Axis::Rows => (n, m),
    };
    let at = |o: usize, i: usize| match axis {
        Axis::Cols => o * n + i,
        Axis::Rows => i * n + o,
    };
    for o in 0..outer {
        let dot: f64 = (0..inner).map(|i| g.data()[at(o, i)] * y.data()[at(o, i)]).sum();
        for i in 0..inner {
            let k = at(o, i);
            out[k] = y.data()[k] * (g.data()[k] - dot);
        }
    }
    Ok(Tensor::matrix(m, n, out))
}
