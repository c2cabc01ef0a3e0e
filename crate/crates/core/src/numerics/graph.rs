//! Define-by-run computation graph with reverse-mode gradients.
//!
//! Values are computed eagerly as nodes are added; every node is kept so that
//! [`Graph::backward`] can walk them in reverse insertion order. Vectors are
//! stored as `n x 1` matrices. Parameter nodes borrow their matrices, so a
//! graph built per sentence never copies the model weights.

use std::borrow::Cow;

use super::tensor::{lrel_scalar, matvec_raw, sigmoid_scalar, softmax_raw, RealMatrix, RealVector};
use super::tensor::LREL_SLOPE;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Input,
    Matvec,
    Add,
    Sub,
    Hadamard,
    Concat,
    Lrel,
    Sigmoid,
    Tanh,
    Softmax,
    WeightedSum,
    PickLog,
    Column,
    Dot,
    Sum,
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Matvec(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    Concat(Vec<NodeId>),
    Lrel(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Softmax(NodeId),
    WeightedSum {
        weights: NodeId,
        offset: usize,
        items: Vec<NodeId>,
    },
    PickLog(NodeId, usize),
    Column(NodeId, usize),
    Dot(NodeId, NodeId),
    Sum(Vec<NodeId>),
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Input => OpKind::Input,
            Op::Matvec(..) => OpKind::Matvec,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Hadamard(..) => OpKind::Hadamard,
            Op::Concat(..) => OpKind::Concat,
            Op::Lrel(..) => OpKind::Lrel,
            Op::Sigmoid(..) => OpKind::Sigmoid,
            Op::Tanh(..) => OpKind::Tanh,
            Op::Softmax(..) => OpKind::Softmax,
            Op::WeightedSum { .. } => OpKind::WeightedSum,
            Op::PickLog(..) => OpKind::PickLog,
            Op::Column(..) => OpKind::Column,
            Op::Dot(..) => OpKind::Dot,
            Op::Sum(..) => OpKind::Sum,
        }
    }
}

struct Node<'a> {
    op: Op,
    value: Cow<'a, RealMatrix>,
}

#[derive(Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

fn shape_str(m: &RealMatrix) -> String {
    format!("{}x{}", m.rows(), m.cols())
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn kind(&self, id: NodeId) -> OpKind {
        self.nodes[id.0].op.kind()
    }

    fn push(&mut self, op: Op, value: Cow<'a, RealMatrix>) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    fn push_vec(&mut self, op: Op, data: Vec<f64>) -> NodeId {
        let rows = data.len();
        let m = RealMatrix::from_vec(rows, 1, data).expect("column shape");
        self.push(op, Cow::Owned(m))
    }

    /// Borrowed parameter tensor; a `k x 1` matrix acts as a vector.
    pub fn param(&mut self, m: &'a RealMatrix) -> NodeId {
        self.push(Op::Input, Cow::Borrowed(m))
    }

    pub fn input_matrix(&mut self, m: RealMatrix) -> NodeId {
        self.push(Op::Input, Cow::Owned(m))
    }

    pub fn input_vector(&mut self, v: RealVector) -> NodeId {
        self.push_vec(Op::Input, v.into_vec())
    }

    pub fn zeros(&mut self, dim: usize) -> NodeId {
        self.push_vec(Op::Input, vec![0.0; dim])
    }

    pub fn value(&self, id: NodeId) -> &RealMatrix {
        &self.nodes[id.0].value
    }

    fn data(&self, id: NodeId) -> &[f64] {
        self.nodes[id.0].value.as_slice()
    }

    pub fn vector(&self, id: NodeId) -> RealVector {
        RealVector::from(self.data(id))
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.data(id)[0]
    }

    fn expect_vector(&self, op: &'static str, id: NodeId) -> Result<usize> {
        let m = self.value(id);
        if m.cols() != 1 {
            return Err(Error::Dimension {
                op,
                left: "vector".to_owned(),
                right: shape_str(m),
            });
        }
        Ok(m.rows())
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let (ma, mb) = (self.value(a), self.value(b));
        if ma.shape() != mb.shape() {
            return Err(Error::Dimension {
                op,
                left: shape_str(ma),
                right: shape_str(mb),
            });
        }
        Ok(())
    }

    pub fn matvec(&mut self, m: NodeId, x: NodeId) -> Result<NodeId> {
        self.expect_vector("matvec", x)?;
        let (mm, xm) = (self.value(m), self.value(x));
        if mm.cols() != xm.rows() {
            return Err(Error::Dimension {
                op: "matvec",
                left: shape_str(mm),
                right: shape_str(xm),
            });
        }
        let out = matvec_raw(mm, xm.as_slice());
        Ok(self.push_vec(Op::Matvec(m, x), out))
    }

    fn zip_with(
        &mut self,
        op: Op,
        name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<NodeId> {
        self.same_shape(name, a, b)?;
        let out: Vec<f64> = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let (rows, cols) = self.value(a).shape();
        let m = RealMatrix::from_vec(rows, cols, out)?;
        Ok(self.push(op, Cow::Owned(m)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_with(Op::Add(a, b), "add", a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_with(Op::Sub(a, b), "sub", a, b, |x, y| x - y)
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_with(Op::Hadamard(a, b), "hadamard", a, b, |x, y| x * y)
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let mut out = Vec::new();
        for &p in parts {
            self.expect_vector("concat", p)?;
            out.extend_from_slice(self.data(p));
        }
        Ok(self.push_vec(Op::Concat(parts.to_vec()), out))
    }

    fn map(&mut self, op: Op, a: NodeId, f: impl Fn(f64) -> f64) -> NodeId {
        let src = self.value(a);
        let (rows, cols) = src.shape();
        let out = src.as_slice().iter().map(|&v| f(v)).collect();
        let m = RealMatrix::from_vec(rows, cols, out).expect("same shape");
        self.push(op, Cow::Owned(m))
    }

    pub fn lrel(&mut self, a: NodeId) -> NodeId {
        self.map(Op::Lrel(a), a, lrel_scalar)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.map(Op::Sigmoid(a), a, sigmoid_scalar)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.map(Op::Tanh(a), a, f64::tanh)
    }

    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let dim = self.expect_vector("softmax", a)?;
        if dim == 0 {
            return Err(Error::InvalidDimension(
                "softmax of an empty vector".to_owned(),
            ));
        }
        let out = softmax_raw(self.data(a));
        Ok(self.push_vec(Op::Softmax(a), out))
    }

    /// `Σ_k weights[offset + k] · items[k]`.
    pub fn weighted_sum(
        &mut self,
        weights: NodeId,
        offset: usize,
        items: &[NodeId],
    ) -> Result<NodeId> {
        let wdim = self.expect_vector("weighted-sum", weights)?;
        if items.is_empty() || offset + items.len() > wdim {
            return Err(Error::Dimension {
                op: "weighted-sum",
                left: format!("{} weights from offset {}", wdim, offset),
                right: format!("{} items", items.len()),
            });
        }
        let dim = self.expect_vector("weighted-sum", items[0])?;
        let mut out = vec![0.0; dim];
        for (k, &item) in items.iter().enumerate() {
            if self.expect_vector("weighted-sum", item)? != dim {
                return Err(Error::Dimension {
                    op: "weighted-sum",
                    left: dim.to_string(),
                    right: shape_str(self.value(item)),
                });
            }
            let w = self.data(weights)[offset + k];
            for (o, &v) in out.iter_mut().zip(self.data(item)) {
                *o += w * v;
            }
        }
        Ok(self.push_vec(
            Op::WeightedSum {
                weights,
                offset,
                items: items.to_vec(),
            },
            out,
        ))
    }

    /// Scalar `ln p[index]`.
    pub fn pick_log(&mut self, p: NodeId, index: usize) -> Result<NodeId> {
        let dim = self.expect_vector("pick-log", p)?;
        if index >= dim {
            return Err(Error::Contract(format!(
                "pick-log index {} out of range for dimension {}",
                index, dim
            )));
        }
        let v = self.data(p)[index].ln();
        Ok(self.push_vec(Op::PickLog(p, index), vec![v]))
    }

    /// Column `index` of a matrix node, as a vector.
    pub fn column(&mut self, m: NodeId, index: usize) -> Result<NodeId> {
        let mm = self.value(m);
        if index >= mm.cols() {
            return Err(Error::Contract(format!(
                "column {} out of range for {}",
                index,
                shape_str(mm)
            )));
        }
        let out = mm.column(index).into_vec();
        Ok(self.push_vec(Op::Column(m, index), out))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.expect_vector("dot", a)?;
        self.same_shape("dot", a, b)?;
        let v = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| x * y)
            .sum();
        Ok(self.push_vec(Op::Dot(a, b), vec![v]))
    }

    /// Sum of scalar nodes.
    pub fn sum(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let mut total = 0.0;
        for &p in parts {
            let m = self.value(p);
            if m.shape() != (1, 1) {
                return Err(Error::Dimension {
                    op: "sum",
                    left: "1x1".to_owned(),
                    right: shape_str(m),
                });
            }
            total += m.as_slice()[0];
        }
        Ok(self.push_vec(Op::Sum(parts.to_vec()), vec![total]))
    }

    /// Reverse sweep from a scalar root. Adjoints accumulate across every
    /// consumer of a node.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        let rv = self.value(root);
        if rv.shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward requires a scalar root, got {}",
                shape_str(rv)
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        adj[root.0] = Some(vec![1.0]);

        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {
                    adj[i] = Some(g);
                    continue;
                }
                Op::Matvec(m, x) => {
                    let mm = self.value(*m);
                    let xs = self.data(*x);
                    let cols = mm.cols();
                    {
                        let dm = slot(&mut adj, *m, mm.len());
                        for (r, &gr) in g.iter().enumerate() {
                            if gr == 0.0 {
                                continue;
                            }
                            for (d, &xv) in dm[r * cols..(r + 1) * cols].iter_mut().zip(xs) {
                                *d += gr * xv;
                            }
                        }
                    }
                    let dx = slot(&mut adj, *x, cols);
                    for (r, &gr) in g.iter().enumerate() {
                        if gr == 0.0 {
                            continue;
                        }
                        for (d, &w) in dx.iter_mut().zip(mm.row(r)) {
                            *d += gr * w;
                        }
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, &g, |_, v| v);
                    accumulate(&mut adj, *b, &g, |_, v| v);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *a, &g, |_, v| v);
                    accumulate(&mut adj, *b, &g, |_, v| -v);
                }
                Op::Hadamard(a, b) => {
                    let (av, bv) = (self.data(*a), self.data(*b));
                    accumulate(&mut adj, *a, &g, |k, v| v * bv[k]);
                    accumulate(&mut adj, *b, &g, |k, v| v * av[k]);
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let len = self.value(p).len();
                        let seg = &g[start..start + len];
                        accumulate(&mut adj, p, seg, |_, v| v);
                        start += len;
                    }
                }
                Op::Lrel(a) => {
                    let av = self.data(*a);
                    accumulate(&mut adj, *a, &g, |k, v| {
                        if av[k] >= 0.0 {
                            v
                        } else {
                            LREL_SLOPE * v
                        }
                    });
                }
                Op::Sigmoid(a) => {
                    let out = node.value.as_slice();
                    accumulate(&mut adj, *a, &g, |k, v| v * out[k] * (1.0 - out[k]));
                }
                Op::Tanh(a) => {
                    let out = node.value.as_slice();
                    accumulate(&mut adj, *a, &g, |k, v| v * (1.0 - out[k] * out[k]));
                }
                Op::Softmax(a) => {
                    let p = node.value.as_slice();
                    let inner: f64 = g.iter().zip(p).map(|(gi, pi)| gi * pi).sum();
                    accumulate(&mut adj, *a, &g, |k, v| p[k] * (v - inner));
                }
                Op::WeightedSum {
                    weights,
                    offset,
                    items,
                } => {
                    let w = self.data(*weights);
                    let wlen = w.len();
                    for (k, &item) in items.iter().enumerate() {
                        let wk = w[offset + k];
                        accumulate(&mut adj, item, &g, |_, v| wk * v);
                    }
                    let dw = slot(&mut adj, *weights, wlen);
                    for (k, &item) in items.iter().enumerate() {
                        dw[offset + k] += g
                            .iter()
                            .zip(self.data(item))
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                    }
                }
                Op::PickLog(p, index) => {
                    let pv = self.data(*p);
                    let len = pv.len();
                    let d = slot(&mut adj, *p, len);
                    d[*index] += g[0] / pv[*index];
                }
                Op::Column(m, index) => {
                    let mm = self.value(*m);
                    let cols = mm.cols();
                    let d = slot(&mut adj, *m, mm.len());
                    for (r, &v) in g.iter().enumerate() {
                        d[r * cols + index] += v;
                    }
                }
                Op::Dot(a, b) => {
                    let (av, bv) = (self.data(*a), self.data(*b));
                    let s = g[0];
                    accumulate(&mut adj, *a, bv, |_, v| s * v);
                    accumulate(&mut adj, *b, av, |_, v| s * v);
                }
                Op::Sum(parts) => {
                    for &p in parts {
                        accumulate(&mut adj, p, &g, |_, v| v);
                    }
                }
            }
        }

        // Only input adjoints survive the sweep.
        Ok(Gradients { adjoints: adj })
    }
}

fn slot(adj: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut Vec<f64> {
    adj[id.0].get_or_insert_with(|| vec![0.0; len])
}

fn accumulate(
    adj: &mut [Option<Vec<f64>>],
    id: NodeId,
    upstream: &[f64],
    f: impl Fn(usize, f64) -> f64,
) {
    let d = slot(adj, id, upstream.len());
    for (k, (dk, &u)) in d.iter_mut().zip(upstream).enumerate() {
        *dk += f(k, u);
    }
}

/// Adjoints of the graph's input nodes after [`Graph::backward`].
pub struct Gradients {
    adjoints: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// `None` when the node does not influence the root.
    pub fn get(&self, id: NodeId) -> Option<&[f64]> {
        self.adjoints.get(id.0).and_then(|a| a.as_deref())
    }

    pub fn take(&mut self, id: NodeId) -> Option<Vec<f64>> {
        self.adjoints.get_mut(id.0).and_then(Option::take)
    }
}
