//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] is an append-only list of nodes. Every operation appends a node
//! holding its forward value, so node order is already a topological order and
//! the backward sweep simply walks indices downward from the root.
//!
//! Gradients accumulate additively into leaf nodes: calling
//! [`Graph::backward`] twice on the same root yields twice the gradient until
//! [`Graph::zero_grad`] is called. Interior adjoints are recomputed from
//! scratch on every sweep.

use super::kernels::{self, clamped_ln, LOG_CLAMP};
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MulCol(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Softmax(NodeId),
    SliceCols(NodeId, usize, usize),
    ConcatCols(Vec<NodeId>),
    PickCols(NodeId, Vec<usize>),
    SoftCe(NodeId, NodeId),
    Kl(NodeId, NodeId),
    Entropy(NodeId),
    GroupNormalize(NodeId, Vec<usize>),
    Sum(NodeId),
    Mean(NodeId),
    Reshape(NodeId),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// A single-threaded computation graph.
#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn dim_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Dimension {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A differentiable input. Its gradient is available after `backward`.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push_raw(Op::Leaf, value, true)
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push_raw(Op::Leaf, value, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Accumulated gradient of a leaf; zeros when nothing reached it.
    pub fn grad(&self, id: NodeId) -> Tensor {
        let n = &self.nodes[id.0];
        n.grad.clone().unwrap_or_else(|| Tensor::zeros_like(&n.value))
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push_raw(&mut self, op: Op, value: Tensor, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
            grad: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op, value: Tensor, parents: &[NodeId]) -> NodeId {
        let rg = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.push_raw(op, value, rg)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), v, &[a, b]))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(dim_err("add", x, y));
        }
        let v = x.zip_map(y, |p, q| p + q);
        Ok(self.push(Op::Add(a, b), v, &[a, b]))
    }

    /// Adds a bias vector to every row of a matrix.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (x, b) = (self.value(a), self.value(bias));
        if x.cols() != b.len() {
            return Err(dim_err("add_row", x, b));
        }
        let mut v = x.clone();
        let cols = x.cols();
        for row in v.data_mut().chunks_exact_mut(cols) {
            for (o, bv) in row.iter_mut().zip(b.data()) {
                *o += bv;
            }
        }
        Ok(self.push(Op::AddRow(a, bias), v, &[a, bias]))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(dim_err("mul", x, y));
        }
        let v = x.zip_map(y, |p, q| p * q);
        Ok(self.push(Op::Mul(a, b), v, &[a, b]))
    }

    /// Scales row `r` of `a` by `col[r]`; `col` holds one value per row.
    pub fn mul_col(&mut self, a: NodeId, col: NodeId) -> Result<NodeId> {
        let (x, w) = (self.value(a), self.value(col));
        if w.len() != x.rows() {
            return Err(dim_err("mul_col", x, w));
        }
        let cols = x.cols();
        let mut v = x.clone();
        for (i, o) in v.data_mut().iter_mut().enumerate() {
            *o *= w.data()[i / cols];
        }
        Ok(self.push(Op::MulCol(a, col), v, &[a, col]))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let v = self.value(a).map(|x| x * factor);
        self.push(Op::Scale(a, factor), v, &[a])
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(Op::Relu(a), v, &[a])
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), v, &[a])
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(kernels::sigmoid);
        self.push(Op::Sigmoid(a), v, &[a])
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let v = kernels::softmax(self.value(a));
        self.push(Op::Softmax(a), v, &[a])
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let x = self.value(a);
        if start > end || end > x.cols() {
            return Err(Error::Dimension {
                op: "slice_cols",
                left: x.shape().to_vec(),
                right: vec![start, end],
            });
        }
        let rows = x.rows();
        let mut data = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            data.extend_from_slice(&x.row(r)[start..end]);
        }
        let v = Tensor::matrix(rows, end - start, data)?;
        Ok(self.push(Op::SliceCols(a, start, end), v, &[a]))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let rows = self.value(parts[0]).rows();
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(dim_err("concat_cols", self.value(parts[0]), self.value(p)));
            }
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let v = Tensor::matrix(rows, total, data)?;
        Ok(self.push(Op::ConcatCols(parts.to_vec()), v, parts))
    }

    /// `out[r] = a[r, cols[r]]`, as a column matrix.
    pub fn pick_cols(&mut self, a: NodeId, cols: &[usize]) -> Result<NodeId> {
        let x = self.value(a);
        if cols.len() != x.rows() || cols.iter().any(|&c| c >= x.cols()) {
            return Err(Error::Dimension {
                op: "pick_cols",
                left: x.shape().to_vec(),
                right: vec![cols.len()],
            });
        }
        let data = cols.iter().enumerate().map(|(r, &c)| x.get(r, c)).collect();
        let v = Tensor::matrix(cols.len(), 1, data)?;
        Ok(self.push(Op::PickCols(a, cols.to_vec()), v, &[a]))
    }

    /// Row-wise soft cross-entropy `-sum_c t_c ln p_c`; one value per row.
    pub fn soft_cross_entropy(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.len() != t.len() || p.cols() != t.cols() {
            return Err(dim_err("soft_cross_entropy", p, t));
        }
        let data: Vec<f64> = (0..p.rows())
            .map(|r| kernels::soft_ce_row(p.row(r), t.row(r)))
            .collect();
        let v = Tensor::vector(data);
        Ok(self.push(Op::SoftCe(pred, target), v, &[pred, target]))
    }

    /// Row-wise `KL(target || pred)`; one value per row.
    pub fn kl_divergence(&mut self, target: NodeId, pred: NodeId) -> Result<NodeId> {
        let (t, p) = (self.value(target), self.value(pred));
        if p.len() != t.len() || p.cols() != t.cols() {
            return Err(dim_err("kl_divergence", t, p));
        }
        let data: Vec<f64> = (0..p.rows()).map(|r| kernels::kl_row(t.row(r), p.row(r))).collect();
        let v = Tensor::vector(data);
        Ok(self.push(Op::Kl(target, pred), v, &[target, pred]))
    }

    /// Row-wise Shannon entropy.
    pub fn entropy(&mut self, p: NodeId) -> NodeId {
        let x = self.value(p);
        let data: Vec<f64> = (0..x.rows()).map(|r| kernels::entropy_row(x.row(r))).collect();
        let v = Tensor::vector(data);
        self.push(Op::Entropy(p), v, &[p])
    }

    /// Each element divided by the (clamped) mean of its group.
    pub fn group_normalize(&mut self, a: NodeId, groups: &[usize]) -> Result<NodeId> {
        let x = self.value(a);
        if x.len() != groups.len() {
            return Err(Error::Dimension {
                op: "group_normalize",
                left: x.shape().to_vec(),
                right: vec![groups.len()],
            });
        }
        let v = Tensor::new(x.shape().to_vec(), kernels::group_normalize(x.data(), groups))?;
        Ok(self.push(Op::GroupNormalize(a, groups.to_vec()), v, &[a]))
    }

    /// Same data under a new shape with equal element count.
    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.value(a).clone().reshape(shape.to_vec())?;
        Ok(self.push(Op::Reshape(a), v, &[a]))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(Op::Sum(a), v, &[a])
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let v = Tensor::scalar(x.sum() / x.len() as f64);
        self.push(Op::Mean(a), v, &[a])
    }

    /// Backpropagates from a scalar root.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        let v = self.value(root);
        if !v.is_scalar() {
            return Err(Error::contract(format!(
                "backward needs a scalar root, got shape {:?}",
                v.shape()
            )));
        }
        let seed = Tensor::new(v.shape().to_vec(), vec![1.0])?;
        self.backward_with(root, &seed)
    }

    /// Backpropagates an arbitrary upstream gradient (a vector-Jacobian
    /// product) from `root`.
    pub fn backward_with(&mut self, root: NodeId, seed: &Tensor) -> Result<()> {
        if seed.len() != self.value(root).len() {
            return Err(dim_err("backward_with", self.value(root), seed));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        adj[root.0] = Some(seed.clone().reshape(self.value(root).shape().to_vec())?);

        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            let op = self.nodes[i].op.clone();
            if let Op::Leaf = op {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(acc) => acc.add_assign(&g),
                    None => node.grad = Some(g),
                }
                continue;
            }
            self.propagate(i, &op, &g, &mut adj)?;
        }
        Ok(())
    }

    fn send(&self, adj: &mut [Option<Tensor>], to: NodeId, g: Tensor) {
        if !self.nodes[to.0].requires_grad {
            return;
        }
        let g = if g.shape() == self.nodes[to.0].value.shape() {
            g
        } else {
            Tensor::new(self.nodes[to.0].value.shape().to_vec(), g.into_data())
                .expect("gradient element count matches value")
        };
        match &mut adj[to.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn propagate(&self, i: usize, op: &Op, g: &Tensor, adj: &mut [Option<Tensor>]) -> Result<()> {
        let out = &self.nodes[i].value;
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                let g2 = g.clone().reshape(vec![x.rows(), y.cols()])?;
                if self.wants(*a) {
                    self.send(adj, *a, g2.matmul(&y.transpose())?);
                }
                if self.wants(*b) {
                    let xm = x.clone().reshape(vec![x.rows(), x.cols()])?;
                    self.send(adj, *b, xm.transpose().matmul(&g2)?);
                }
            }
            Op::Add(a, b) => {
                self.send(adj, *a, g.clone());
                self.send(adj, *b, g.clone());
            }
            Op::AddRow(a, b) => {
                self.send(adj, *a, g.clone());
                if self.wants(*b) {
                    let cols = g.cols();
                    let mut db = vec![0.0; cols];
                    for row in g.data().chunks_exact(cols) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    self.send(adj, *b, Tensor::vector(db));
                }
            }
            Op::Mul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    self.send(adj, *a, g.zip_map(y, |p, q| p * q));
                }
                if self.wants(*b) {
                    self.send(adj, *b, g.zip_map(x, |p, q| p * q));
                }
            }
            Op::MulCol(a, w) => {
                let (x, wv) = (self.value(*a), self.value(*w));
                let cols = x.cols();
                if self.wants(*a) {
                    let mut da = g.clone();
                    for (k, v) in da.data_mut().iter_mut().enumerate() {
                        *v *= wv.data()[k / cols];
                    }
                    self.send(adj, *a, da);
                }
                if self.wants(*w) {
                    let mut dw = vec![0.0; wv.len()];
                    for (k, (&gv, &xv)) in g.data().iter().zip(x.data()).enumerate() {
                        dw[k / cols] += gv * xv;
                    }
                    self.send(adj, *w, Tensor::vector(dw));
                }
            }
            Op::Scale(a, f) => self.send(adj, *a, g.map(|v| v * f)),
            Op::Relu(a) => {
                let x = self.value(*a);
                self.send(adj, *a, g.zip_map(x, |gv, xv| if xv > 0.0 { gv } else { 0.0 }));
            }
            Op::Tanh(a) => self.send(adj, *a, g.zip_map(out, |gv, y| gv * (1.0 - y * y))),
            Op::Sigmoid(a) => self.send(adj, *a, g.zip_map(out, |gv, y| gv * y * (1.0 - y))),
            Op::Softmax(a) => {
                let mut dz = Tensor::zeros(out.shape());
                for r in 0..out.rows() {
                    let (y, gr) = (out.row(r), g.row(r));
                    let dot: f64 = y.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for (o, (&yv, &gv)) in dz.row_mut(r).iter_mut().zip(y.iter().zip(gr)) {
                        *o = yv * (gv - dot);
                    }
                }
                self.send(adj, *a, dz);
            }
            Op::SliceCols(a, start, end) => {
                let x = self.value(*a);
                let mut dx = Tensor::zeros(x.shape());
                let w = end - start;
                for r in 0..x.rows() {
                    dx.row_mut(r)[*start..*end].copy_from_slice(&g.data()[r * w..(r + 1) * w]);
                }
                self.send(adj, *a, dx);
            }
            Op::ConcatCols(parts) => {
                let rows = out.rows();
                let mut offset = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let w = pv.cols();
                    if self.wants(p) {
                        let mut dp = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            dp.extend_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        self.send(adj, p, Tensor::new(pv.shape().to_vec(), dp)?);
                    }
                    offset += w;
                }
            }
            Op::PickCols(a, cols) => {
                let x = self.value(*a);
                let mut dx = Tensor::zeros(x.shape());
                for (r, &c) in cols.iter().enumerate() {
                    dx.set(r, c, g.data()[r]);
                }
                self.send(adj, *a, dx);
            }
            Op::SoftCe(pred, target) => {
                let (p, t) = (self.value(*pred), self.value(*target));
                let cols = p.cols();
                if self.wants(*pred) {
                    let mut dp = Tensor::zeros(p.shape());
                    for (k, o) in dp.data_mut().iter_mut().enumerate() {
                        let (pv, tv) = (p.data()[k], t.data()[k]);
                        if pv > LOG_CLAMP && tv != 0.0 {
                            *o = -g.data()[k / cols] * tv / pv;
                        }
                    }
                    self.send(adj, *pred, dp);
                }
                if self.wants(*target) {
                    let mut dt = Tensor::zeros(t.shape());
                    for (k, o) in dt.data_mut().iter_mut().enumerate() {
                        *o = -g.data()[k / cols] * clamped_ln(p.data()[k]);
                    }
                    self.send(adj, *target, dt);
                }
            }
            Op::Kl(target, pred) => {
                let (t, p) = (self.value(*target), self.value(*pred));
                let cols = p.cols();
                if self.wants(*pred) {
                    let mut dp = Tensor::zeros(p.shape());
                    for (k, o) in dp.data_mut().iter_mut().enumerate() {
                        let (pv, tv) = (p.data()[k], t.data()[k]);
                        if pv > LOG_CLAMP && tv != 0.0 {
                            *o = -g.data()[k / cols] * tv / pv;
                        }
                    }
                    self.send(adj, *pred, dp);
                }
                if self.wants(*target) {
                    let mut dt = Tensor::zeros(t.shape());
                    for (k, o) in dt.data_mut().iter_mut().enumerate() {
                        let (pv, tv) = (p.data()[k], t.data()[k]);
                        let d_self = if tv > LOG_CLAMP { tv.ln() + 1.0 } else { LOG_CLAMP.ln() };
                        *o = g.data()[k / cols] * (d_self - clamped_ln(pv));
                    }
                    self.send(adj, *target, dt);
                }
            }
            Op::Entropy(a) => {
                let x = self.value(*a);
                let cols = x.cols();
                let mut dx = Tensor::zeros(x.shape());
                for (k, o) in dx.data_mut().iter_mut().enumerate() {
                    let p = x.data()[k];
                    let d = if p > LOG_CLAMP {
                        -(p.ln() + 1.0)
                    } else {
                        -LOG_CLAMP.ln()
                    };
                    *o = g.data()[k / cols] * d;
                }
                self.send(adj, *a, dx);
            }
            Op::GroupNormalize(a, groups) => {
                let x = self.value(*a);
                let (sums, counts) = kernels::group_sums(x.data(), groups);
                let mut weighted = vec![0.0; sums.len()];
                for (k, &grp) in groups.iter().enumerate() {
                    weighted[grp] += g.data()[k] * x.data()[k];
                }
                let mut dx = Tensor::zeros(x.shape());
                for (k, &grp) in groups.iter().enumerate() {
                    let n = counts[grp] as f64;
                    let mean = sums[grp] / n;
                    dx.data_mut()[k] = if mean > LOG_CLAMP {
                        g.data()[k] / mean - weighted[grp] / (n * mean * mean)
                    } else {
                        g.data()[k] / LOG_CLAMP
                    };
                }
                self.send(adj, *a, dx);
            }
            Op::Sum(a) => {
                let x = self.value(*a);
                self.send(adj, *a, Tensor::full(x.shape(), g.item()));
            }
            Op::Mean(a) => {
                let x = self.value(*a);
                self.send(adj, *a, Tensor::full(x.shape(), g.item() / x.len() as f64));
            }
            Op::Reshape(a) => self.send(adj, *a, g.clone()),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::matrix(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, 7.0]).unwrap());
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x), Tensor::ones(&[2, 3]));
    }

    #[test]
    fn half_squared_norm_gradient_is_input() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, -2.0, 3.0]));
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq);
        let half = g.scale(s, 0.5);
        g.backward(half).unwrap();
        assert_eq!(g.grad(x).data(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, 2.0]));
        let y = g.tanh(x);
        assert!(matches!(g.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn unreachable_leaf_gets_zero_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, 2.0]));
        let unused = g.leaf(Tensor::vector(vec![5.0, 6.0, 7.0]));
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(unused), Tensor::zeros(&[3]));
    }

    #[test]
    fn repeated_backward_accumulates_exactly_twice() {
        let mut g = Graph::new();
        let w = g.leaf(Tensor::matrix(2, 2, vec![0.3, -0.7, 1.1, 0.2]).unwrap());
        let x = g.constant(Tensor::matrix(1, 2, vec![0.5, -1.5]).unwrap());
        let z = g.matmul(x, w).unwrap();
        let p = g.softmax(z);
        let t = g.constant(Tensor::matrix(1, 2, vec![0.9, 0.1]).unwrap());
        let l = g.soft_cross_entropy(p, t).unwrap();
        let m = g.mean(l);
        g.backward(m).unwrap();
        let once = g.grad(w);
        g.backward(m).unwrap();
        let twice = g.grad(w);
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert_eq!(2.0 * a, *b);
        }
        g.zero_grad();
        assert_eq!(g.grad(w), Tensor::zeros(&[2, 2]));
    }

    #[test]
    fn constants_are_skipped() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::vector(vec![1.0, 2.0]));
        let s = g.sum(c);
        g.backward(s).unwrap();
        assert_eq!(g.grad(c), Tensor::zeros(&[2]));
    }

    #[test]
    fn dimension_errors_name_shapes() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::zeros(&[2, 3]));
        let b = g.leaf(Tensor::zeros(&[4, 2]));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[4, 2]"), "{err}");
        assert!(g.add(a, b).is_err());
    }
}
