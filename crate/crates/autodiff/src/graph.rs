use std::borrow::Cow;

use crate::error::{AutodiffError, Result};
use crate::tensor::{gemm, Tensor};

/// Handle to a node of a [`Graph`]. Ids increase in insertion order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Constant,
    Param,
    MatMul,
    Add,
    Relu,
    Concat,
    Slice,
    Mul,
    ScalarMul,
    Sum,
    Mean,
    L2Norm,
    L1Loss,
    Exp,
    Negate,
    Normalize,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Relu(NodeId),
    Concat(Vec<NodeId>),
    Slice { input: NodeId, start: usize },
    Mul(NodeId, NodeId),
    ScalarMul(NodeId, f64),
    Sum(NodeId),
    Mean(NodeId),
    L2Norm(NodeId),
    L1Loss(NodeId, NodeId),
    Exp(NodeId),
    Negate(NodeId),
    Normalize(NodeId),
}

#[derive(Debug)]
struct Node<'a> {
    op: Op,
    value: Cow<'a, Tensor>,
    requires_grad: bool,
    param: bool,
}

/// Append-only computation record, rebuilt for every forward pass.
///
/// Inputs of a node always have smaller ids, so the graph is acyclic and the
/// backward sweep visits nodes in strictly decreasing id order.
#[derive(Debug, Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
    relu_margin: f64,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `id`, or zeros shaped like `like` when the node did not
    /// influence the loss.
    pub fn get_or_zeros(&self, id: NodeId, like: &Tensor) -> Tensor {
        self.get(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.0).and_then(|g| g.take())
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(t) => t.add_assign(&g),
        None => *slot = Some(g),
    }
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            relu_margin: f64::INFINITY,
        }
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

    pub fn kind(&self, id: NodeId) -> OpKind {
        let node = &self.nodes[id.0];
        match &node.op {
            Op::Leaf if node.param => OpKind::Param,
            Op::Leaf => OpKind::Constant,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Add(..) => OpKind::Add,
            Op::Relu(_) => OpKind::Relu,
            Op::Concat(_) => OpKind::Concat,
            Op::Slice { .. } => OpKind::Slice,
            Op::Mul(..) => OpKind::Mul,
            Op::ScalarMul(..) => OpKind::ScalarMul,
            Op::Sum(_) => OpKind::Sum,
            Op::Mean(_) => OpKind::Mean,
            Op::L2Norm(_) => OpKind::L2Norm,
            Op::L1Loss(..) => OpKind::L1Loss,
            Op::Exp(_) => OpKind::Exp,
            Op::Negate(_) => OpKind::Negate,
            Op::Normalize(_) => OpKind::Normalize,
        }
    }

    /// Smallest absolute ReLU pre-activation seen so far. Finite-difference
    /// checks are unreliable when this is below the probe step.
    pub fn relu_margin(&self) -> f64 {
        self.relu_margin
    }

    fn push(&mut self, op: Op, value: Tensor, op_name: &'static str) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(AutodiffError::NonFinite { op: op_name });
        }
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Mul(a, b) | Op::L1Loss(a, b) => {
                self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad
            }
            Op::Concat(ids) => ids.iter().any(|i| self.nodes[i.0].requires_grad),
            Op::Relu(a)
            | Op::Slice { input: a, .. }
            | Op::ScalarMul(a, _)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::L2Norm(a)
            | Op::Exp(a)
            | Op::Negate(a)
            | Op::Normalize(a) => self.nodes[a.0].requires_grad,
        };
        self.nodes.push(Node {
            op,
            value: Cow::Owned(value),
            requires_grad,
            param: false,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn leaf(&mut self, value: Cow<'a, Tensor>, param: bool) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            requires_grad: param,
            param,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Adds a trainable leaf that borrows its value.
    pub fn param(&mut self, value: &'a Tensor) -> NodeId {
        self.leaf(Cow::Borrowed(value), true)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(Cow::Owned(value), false)
    }

    pub fn constant_ref(&mut self, value: &'a Tensor) -> NodeId {
        self.leaf(Cow::Borrowed(value), false)
    }

    /// `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(mismatch("matmul", ta, tb));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), false, tb.data(), false, &mut out, 0.0);
        let out = Tensor::new(vec![m, n], out)?;
        self.push(Op::MatMul(a, b), out, "matmul")
    }

    /// Elementwise sum. `b` may also be a scalar or match the trailing axes
    /// of `a` (row broadcast, as for a bias).
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        let sa = ta.shape();
        let sb = tb.shape();
        let out = if sa == sb {
            Tensor::new(
                sa.to_vec(),
                ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect(),
            )?
        } else if sb.is_empty() {
            let s = tb.item();
            ta.map(|x| x + s)
        } else if sb.len() < sa.len() && sa.ends_with(sb) {
            let w = tb.len();
            Tensor::new(
                sa.to_vec(),
                ta.data()
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x + tb.data()[i % w])
                    .collect(),
            )?
        } else {
            return Err(mismatch("add", ta, tb));
        };
        self.push(Op::Add(a, b), out, "add")
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let nb = self.negate(b)?;
        self.add(a, nb)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let ta = self.value(a);
        let margin = ta
            .data()
            .iter()
            .fold(self.relu_margin, |m, v| m.min(v.abs()));
        let out = ta.map(|v| v.max(0.0));
        self.relu_margin = margin;
        self.push(Op::Relu(a), out, "relu")
    }

    /// Concatenates along the last axis; leading axes must agree.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = parts
            .first()
            .ok_or_else(|| AutodiffError::Invalid("concat of zero tensors".into()))?;
        let t0 = self.value(*first);
        let rows = t0.rows();
        let lead = &t0.shape()[..t0.shape().len().saturating_sub(1)];
        for p in &parts[1..] {
            let t = self.value(*p);
            if t.shape().len() != t0.shape().len()
                || &t.shape()[..t.shape().len().saturating_sub(1)] != lead
            {
                return Err(mismatch("concat", t0, t));
            }
        }
        let width: usize = parts.iter().map(|p| self.value(*p).last_dim()).sum();
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(r));
            }
        }
        let mut shape = lead.to_vec();
        shape.push(width);
        let out = Tensor::new(shape, data)?;
        self.push(Op::Concat(parts.to_vec()), out, "concat")
    }

    /// Columns `start..start+len` of the last axis.
    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let ta = self.value(a);
        let w = ta.last_dim();
        if len == 0 || start + len > w || ta.shape().is_empty() {
            return Err(AutodiffError::Invalid(format!(
                "slice {start}..{} out of range for shape {:?}",
                start + len,
                ta.shape()
            )));
        }
        let mut data = Vec::with_capacity(ta.rows() * len);
        for r in 0..ta.rows() {
            data.extend_from_slice(&ta.row(r)[start..start + len]);
        }
        let mut shape = ta.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        let out = Tensor::new(shape, data)?;
        self.push(Op::Slice { input: a, start }, out, "slice")
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch("mul", ta, tb));
        }
        let out = Tensor::new(
            ta.shape().to_vec(),
            ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect(),
        )?;
        self.push(Op::Mul(a, b), out, "mul")
    }

    pub fn scalar_mul(&mut self, a: NodeId, s: f64) -> Result<NodeId> {
        let out = self.value(a).map(|v| v * s);
        self.push(Op::ScalarMul(a, s), out, "scalar_mul")
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let out = Tensor::scalar(self.value(a).data().iter().sum());
        self.push(Op::Sum(a), out, "sum")
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let t = self.value(a);
        let out = Tensor::scalar(t.data().iter().sum::<f64>() / t.len() as f64);
        self.push(Op::Mean(a), out, "mean")
    }

    /// Euclidean norm over the last axis; `[.., n] -> [..]`.
    pub fn l2norm(&mut self, a: NodeId) -> Result<NodeId> {
        let t = self.value(a);
        let data = (0..t.rows())
            .map(|r| t.row(r).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let shape = t.shape()[..t.shape().len().saturating_sub(1)].to_vec();
        let out = Tensor::new(shape, data)?;
        self.push(Op::L2Norm(a), out, "l2norm")
    }

    /// Mean absolute difference, a scalar.
    pub fn l1loss(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch("l1loss", ta, tb));
        }
        let s: f64 = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| (x - y).abs())
            .sum();
        let out = Tensor::scalar(s / ta.len() as f64);
        self.push(Op::L1Loss(a, b), out, "l1loss")
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.value(a).map(f64::exp);
        self.push(Op::Exp(a), out, "exp")
    }

    pub fn negate(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.value(a).map(|v| -v);
        self.push(Op::Negate(a), out, "negate")
    }

    /// Scales each row (last axis) to unit Euclidean norm.
    pub fn normalize(&mut self, a: NodeId) -> Result<NodeId> {
        let t = self.value(a);
        let mut data = Vec::with_capacity(t.len());
        for r in 0..t.rows() {
            let row = t.row(r);
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n < 1e-12 {
                return Err(AutodiffError::ZeroNorm { op: "normalize" });
            }
            data.extend(row.iter().map(|v| v / n));
        }
        let out = Tensor::new(t.shape().to_vec(), data)?;
        self.push(Op::Normalize(a), out, "normalize")
    }

    /// Reverse sweep from a one-element `loss`. Only nodes that depend on a
    /// parameter receive gradients.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(AutodiffError::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(lt.shape(), 1.0));

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let needs = |n: NodeId| self.nodes[n.0].requires_grad;
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                    if needs(*a) {
                        let slot = grads[a.0].get_or_insert_with(|| Tensor::zeros(ta.shape()));
                        gemm(m, n, k, g.data(), false, tb.data(), true, slot.data_mut(), 1.0);
                    }
                    if needs(*b) {
                        let slot = grads[b.0].get_or_insert_with(|| Tensor::zeros(tb.shape()));
                        gemm(k, m, n, ta.data(), true, g.data(), false, slot.data_mut(), 1.0);
                    }
                }
                Op::Add(a, b) => {
                    let tb = self.value(*b);
                    if needs(*b) {
                        let gb = if tb.shape() == g.shape() {
                            g.clone()
                        } else {
                            let w = tb.len();
                            let mut acc = vec![0.0; w];
                            for (i, v) in g.data().iter().enumerate() {
                                acc[i % w] += v;
                            }
                            Tensor::new(tb.shape().to_vec(), acc)?
                        };
                        accumulate(&mut grads[b.0], gb);
                    }
                    if needs(*a) {
                        accumulate(&mut grads[a.0], g);
                    }
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let data = x
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&xi, &gi)| if xi > 0.0 { gi } else { 0.0 })
                        .collect();
                    accumulate(&mut grads[a.0], Tensor::new(x.shape().to_vec(), data)?);
                }
                Op::Concat(parts) => {
                    let rows = g.rows();
                    let w = g.last_dim();
                    let mut offset = 0;
                    for p in parts {
                        let tp = self.value(*p);
                        let pw = tp.last_dim();
                        if needs(*p) {
                            let mut data = Vec::with_capacity(rows * pw);
                            for r in 0..rows {
                                data.extend_from_slice(&g.data()[r * w + offset..r * w + offset + pw]);
                            }
                            accumulate(&mut grads[p.0], Tensor::new(tp.shape().to_vec(), data)?);
                        }
                        offset += pw;
                    }
                }
                Op::Slice { input, start } => {
                    let ti = self.value(*input);
                    let w = ti.last_dim();
                    let len = g.last_dim();
                    let slot = grads[input.0].get_or_insert_with(|| Tensor::zeros(ti.shape()));
                    let dst = slot.data_mut();
                    for r in 0..g.rows() {
                        for c in 0..len {
                            dst[r * w + start + c] += g.data()[r * len + c];
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    if needs(*a) {
                        let d = g.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
                        accumulate(&mut grads[a.0], Tensor::new(ta.shape().to_vec(), d)?);
                    }
                    if needs(*b) {
                        let d = g.data().iter().zip(ta.data()).map(|(x, y)| x * y).collect();
                        accumulate(&mut grads[b.0], Tensor::new(tb.shape().to_vec(), d)?);
                    }
                }
                Op::ScalarMul(a, s) => {
                    let s = *s;
                    accumulate(&mut grads[a.0], g.map(|v| v * s));
                }
                Op::Sum(a) => {
                    let ta = self.value(*a);
                    accumulate(&mut grads[a.0], Tensor::full(ta.shape(), g.item()));
                }
                Op::Mean(a) => {
                    let ta = self.value(*a);
                    let v = g.item() / ta.len() as f64;
                    accumulate(&mut grads[a.0], Tensor::full(ta.shape(), v));
                }
                Op::L2Norm(a) => {
                    let ta = self.value(*a);
                    let norms = node.value.data();
                    let w = ta.last_dim();
                    let mut data = Vec::with_capacity(ta.len());
                    for r in 0..ta.rows() {
                        let n = norms[r];
                        let gr = g.data()[r];
                        // Subgradient at the origin is zero.
                        if n == 0.0 {
                            data.extend(std::iter::repeat(0.0).take(w));
                        } else {
                            data.extend(ta.row(r).iter().map(|v| gr * v / n));
                        }
                    }
                    accumulate(&mut grads[a.0], Tensor::new(ta.shape().to_vec(), data)?);
                }
                Op::L1Loss(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let scale = g.item() / ta.len() as f64;
                    let sign: Vec<f64> = ta
                        .data()
                        .iter()
                        .zip(tb.data())
                        .map(|(x, y)| {
                            let d = x - y;
                            if d > 0.0 {
                                scale
                            } else if d < 0.0 {
                                -scale
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    if needs(*b) {
                        let neg = sign.iter().map(|v| -v).collect();
                        accumulate(&mut grads[b.0], Tensor::new(tb.shape().to_vec(), neg)?);
                    }
                    if needs(*a) {
                        accumulate(&mut grads[a.0], Tensor::new(ta.shape().to_vec(), sign)?);
                    }
                }
                Op::Exp(a) => {
                    let d = g
                        .data()
                        .iter()
                        .zip(node.value.data())
                        .map(|(x, y)| x * y)
                        .collect();
                    accumulate(&mut grads[a.0], Tensor::new(g.shape().to_vec(), d)?);
                }
                Op::Negate(a) => {
                    accumulate(&mut grads[a.0], g.map(|v| -v));
                }
                Op::Normalize(a) => {
                    let ta = self.value(*a);
                    let y = &node.value;
                    let mut data = Vec::with_capacity(ta.len());
                    for r in 0..ta.rows() {
                        let xr = ta.row(r);
                        let n = xr.iter().map(|v| v * v).sum::<f64>().sqrt();
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        data.extend(yr.iter().zip(gr).map(|(yi, gi)| (gi - yi * dot) / n));
                    }
                    accumulate(&mut grads[a.0], Tensor::new(ta.shape().to_vec(), data)?);
                }
            }
        }
        for (id, node) in self.nodes.iter().enumerate() {
            if !node.param {
                grads[id] = None;
            }
        }
        Ok(Gradients { grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_definition() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![-1.0, 0.0, 2.0]));
        let y = g.relu(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
        assert_eq!(g.kind(y), OpKind::Relu);
    }

    #[test]
    fn l2norm_three_four_five() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![3.0, 4.0]));
        let n = g.l2norm(x).unwrap();
        assert_eq!(g.value(n).item(), 5.0);
        assert!(g.value(n).shape().is_empty());
    }

    #[test]
    fn matmul_row_sums() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::matrix(2, 3, vec![1.0; 6]).unwrap());
        let b = g.constant(Tensor::matrix(3, 1, vec![1.0; 3]).unwrap());
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).shape(), &[2, 1]);
        assert_eq!(g.value(c).data(), &[3.0, 3.0]);
    }

    #[test]
    fn matmul_mismatch_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert_eq!(
            err,
            AutodiffError::ShapeMismatch {
                op: "matmul",
                lhs: vec![2, 3],
                rhs: vec![2, 3]
            }
        );
    }

    #[test]
    fn sum_gradient_is_ones() {
        let p = Tensor::matrix(2, 3, vec![0.3, -1.0, 2.0, 5.0, 0.0, 1.0]).unwrap();
        let mut g = Graph::new();
        let pid = g.param(&p);
        let s = g.sum(pid).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(pid).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn l2norm_at_zero_has_zero_subgradient() {
        let p = Tensor::vector(vec![1.0, -2.0, 0.5]);
        let c = p.clone();
        let mut g = Graph::new();
        let pid = g.param(&p);
        let cid = g.constant(c);
        let d = g.sub(pid, cid).unwrap();
        let n = g.l2norm(d).unwrap();
        assert_eq!(g.value(n).item(), 0.0);
        let grads = g.backward(n).unwrap();
        assert_eq!(grads.get(pid).unwrap().data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let p = Tensor::vector(vec![1.0, 2.0]);
        let mut g = Graph::new();
        let pid = g.param(&p);
        assert!(matches!(
            g.backward(pid),
            Err(AutodiffError::NonScalarLoss(_))
        ));
    }

    #[test]
    fn non_finite_forward_rejected() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::scalar(1000.0));
        assert!(matches!(g.exp(x), Err(AutodiffError::NonFinite { op: "exp" })));
    }

    #[test]
    fn normalize_rejects_zero_rows() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap());
        assert!(g.normalize(x).is_err());
    }

    #[test]
    fn bias_broadcast_gradient_sums_rows() {
        let x = Tensor::matrix(3, 2, vec![1.0; 6]).unwrap();
        let b = Tensor::vector(vec![0.5, -0.5]);
        let mut g = Graph::new();
        let xi = g.constant(x);
        let bi = g.param(&b);
        let y = g.add(xi, bi).unwrap();
        let s = g.sum(y).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(bi).unwrap().data(), &[3.0, 3.0]);
    }

    #[test]
    fn concat_and_slice_roundtrip() {
        let a = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::matrix(2, 1, vec![5.0, 6.0]).unwrap();
        let mut g = Graph::new();
        let ai = g.param(&a);
        let bi = g.param(&b);
        let c = g.concat(&[ai, bi]).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        let s = g.slice(c, 1, 2).unwrap();
        assert_eq!(g.value(s).data(), &[2.0, 5.0, 4.0, 6.0]);
        let t = g.sum(s).unwrap();
        let grads = g.backward(t).unwrap();
        assert_eq!(grads.get(ai).unwrap().data(), &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(grads.get(bi).unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let run = || {
            let w = Tensor::matrix(3, 2, vec![0.1, -0.7, 0.3, 0.9, -0.2, 0.4]).unwrap();
            let mut g = Graph::new();
            let x = g.constant(Tensor::matrix(1, 3, vec![0.5, -1.5, 2.0]).unwrap());
            let wi = g.param(&w);
            let y = g.matmul(x, wi).unwrap();
            let z = g.normalize(y).unwrap();
            g.value(z).clone()
        };
        let (a, b) = (run(), run());
        assert_eq!(
            a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
