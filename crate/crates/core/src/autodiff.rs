//! Reverse-mode automatic differentiation over dense `f64` vectors.
//!
//! A [`Graph`] is a Wengert list: every node refers only to nodes created
//! before it, so the node order is a valid topological order. Building a
//! node only records the operation and its output length; values are
//! computed by [`Graph::forward`], which evaluates every node that has not
//! been evaluated yet. Changing a leaf invalidates everything recorded
//! after it, so a graph can be re-evaluated at new parameter values (this is
//! what [`grad_check`] does).
//!
//! ```
//! use loe_core::autodiff::Graph;
//!
//! let mut g = Graph::new();
//! let x = g.leaf(vec![3.0]);
//! let y = g.square(x);
//! g.set_output(y);
//! g.forward();
//! assert_eq!(g.value(y).unwrap(), &[9.0]);
//! let grads = g.backward().unwrap();
//! assert_eq!(grads.get(x).unwrap(), &[6.0]);
//! ```

use crate::error::{Error, Result};

/// Norm floor used by [`Graph::cos_sim`]: norms are computed as
/// `sqrt(|a|^2 + COS_EPS^2)`.
pub const COS_EPS: f64 = 1e-12;

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
    Constant,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Offset(NodeId, f64),
    MatVec {
        w: NodeId,
        x: NodeId,
        rows: usize,
        cols: usize,
    },
    Relu(NodeId),
    Exp(NodeId),
    Square(NodeId),
    Recip {
        x: NodeId,
        eps: f64,
    },
    Log {
        x: NodeId,
        floor: f64,
    },
    Clamp {
        x: NodeId,
        lo: f64,
        hi: f64,
    },
    Sum(NodeId),
    Dot(NodeId, NodeId),
    CosSim(NodeId, NodeId),
    Stack(Vec<NodeId>),
    Index(NodeId, usize),
    Softmax(NodeId),
    WeightedSum(Vec<(NodeId, f64)>),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    len: usize,
    requires_grad: bool,
}

/// Leaf gradients produced by [`Graph::backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    entries: Vec<(NodeId, Vec<f64>)>,
}

impl Gradients {
    pub fn get(&self, leaf: NodeId) -> Option<&[f64]> {
        self.entries
            .iter()
            .find(|(id, _)| *id == leaf)
            .map(|(_, g)| g.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &[f64])> {
        self.entries.iter().map(|(id, g)| (*id, g.as_slice()))
    }

    /// Gradients in leaf declaration order.
    pub fn into_vecs(self) -> Vec<Vec<f64>> {
        self.entries.into_iter().map(|(_, g)| g).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    values: Vec<Vec<f64>>,
    evaluated: usize,
    leaves: Vec<NodeId>,
    output: Option<NodeId>,
    grads: Option<Vec<Vec<f64>>>,
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

    pub fn node_len(&self, id: NodeId) -> usize {
        self.nodes[id.0].len
    }

    pub fn leaves(&self) -> &[NodeId] {
        &self.leaves
    }

    pub fn output(&self) -> Option<NodeId> {
        self.output
    }

    pub fn set_output(&mut self, id: NodeId) {
        self.output = Some(id);
        self.grads = None;
    }

    fn push(&mut self, op: Op, len: usize, value: Vec<f64>) -> NodeId {
        let requires_grad = match &op {
            Op::Leaf => true,
            Op::Constant => false,
            other => inputs(other).iter().any(|i| self.nodes[i.0].requires_grad),
        };
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            op,
            len,
            requires_grad,
        });
        self.values.push(value);
        self.grads = None;
        id
    }

    fn unary(&mut self, op: Op, a: NodeId) -> NodeId {
        let len = self.nodes[a.0].len;
        self.push(op, len, Vec::new())
    }

    fn binary_same(&mut self, op: Op, a: NodeId, b: NodeId) -> NodeId {
        let (la, lb) = (self.nodes[a.0].len, self.nodes[b.0].len);
        assert_eq!(la, lb, "operand lengths differ ({la} vs {lb})");
        self.push(op, la, Vec::new())
    }

    /// A differentiable input (model parameter).
    pub fn leaf(&mut self, value: Vec<f64>) -> NodeId {
        let len = value.len();
        let id = self.push(Op::Leaf, len, value);
        self.leaves.push(id);
        id
    }

    /// A non-differentiable input (data).
    pub fn constant(&mut self, value: Vec<f64>) -> NodeId {
        let len = value.len();
        self.push(Op::Constant, len, value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary_same(Op::Add(a, b), a, b)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary_same(Op::Sub(a, b), a, b)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary_same(Op::Mul(a, b), a, b)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.unary(Op::Scale(a, c), a)
    }

    pub fn offset(&mut self, a: NodeId, c: f64) -> NodeId {
        self.unary(Op::Offset(a, c), a)
    }

    /// `w` is a row-major `rows x cols` matrix.
    pub fn matvec(&mut self, w: NodeId, x: NodeId, rows: usize, cols: usize) -> NodeId {
        assert_eq!(self.nodes[w.0].len, rows * cols, "matrix length");
        assert_eq!(self.nodes[x.0].len, cols, "vector length");
        self.push(Op::MatVec { w, x, rows, cols }, rows, Vec::new())
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary(Op::Relu(a), a)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.unary(Op::Exp(a), a)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.unary(Op::Square(a), a)
    }

    /// `1 / (a + eps)`.
    pub fn recip(&mut self, a: NodeId, eps: f64) -> NodeId {
        self.unary(Op::Recip { x: a, eps }, a)
    }

    /// `ln(max(a, floor))`; the gradient is zero where the floor is active.
    pub fn log(&mut self, a: NodeId, floor: f64) -> NodeId {
        self.unary(Op::Log { x: a, floor }, a)
    }

    /// Clamp into `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        self.unary(Op::Clamp { x: a, lo, hi }, a)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sum(a), 1, Vec::new())
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.nodes[a.0].len, self.nodes[b.0].len, "dot lengths");
        self.push(Op::Dot(a, b), 1, Vec::new())
    }

    /// Cosine similarity with norms floored by [`COS_EPS`].
    pub fn cos_sim(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.nodes[a.0].len, self.nodes[b.0].len, "cos_sim lengths");
        self.push(Op::CosSim(a, b), 1, Vec::new())
    }

    /// Concatenates scalar nodes into a vector.
    pub fn stack(&mut self, items: &[NodeId]) -> NodeId {
        for &i in items {
            assert_eq!(self.nodes[i.0].len, 1, "stack expects scalars");
        }
        self.push(Op::Stack(items.to_vec()), items.len(), Vec::new())
    }

    pub fn index(&mut self, a: NodeId, i: usize) -> NodeId {
        assert!(i < self.nodes[a.0].len, "index out of range");
        self.push(Op::Index(a, i), 1, Vec::new())
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        self.unary(Op::Softmax(a), a)
    }

    /// `sum_i w_i * x_i` over scalar nodes. An empty term list yields 0.
    pub fn weighted_sum(&mut self, terms: &[(NodeId, f64)]) -> NodeId {
        for &(i, _) in terms {
            assert_eq!(self.nodes[i.0].len, 1, "weighted_sum expects scalars");
        }
        self.push(Op::WeightedSum(terms.to_vec()), 1, Vec::new())
    }

    /// Replaces a leaf value and invalidates every node recorded after it.
    pub fn set_leaf(&mut self, id: NodeId, value: &[f64]) -> Result<()> {
        let node = self
            .nodes
            .get(id.0)
            .ok_or_else(|| Error::Config(format!("node {} does not exist", id.0)))?;
        if !matches!(node.op, Op::Leaf) {
            return Err(Error::Config(format!("node {} is not a leaf", id.0)));
        }
        if node.len != value.len() {
            return Err(Error::Shape(format!(
                "leaf {} expects {} values, got {}",
                id.0,
                node.len,
                value.len()
            )));
        }
        self.values[id.0].copy_from_slice(value);
        self.evaluated = self.evaluated.min(id.0 + 1);
        self.grads = None;
        Ok(())
    }

    /// Evaluates every node that is not yet up to date.
    pub fn forward(&mut self) {
        for i in self.evaluated..self.nodes.len() {
            if let Some(v) = self.compute(i) {
                self.values[i] = v;
            }
        }
        self.evaluated = self.nodes.len();
    }

    /// Sets all leaves (in declaration order), runs the forward pass and
    /// returns the output value.
    pub fn eval_forward(&mut self, leaf_values: &[Vec<f64>]) -> Result<&[f64]> {
        if leaf_values.len() != self.leaves.len() {
            return Err(Error::Shape(format!(
                "graph has {} leaves, got {} values",
                self.leaves.len(),
                leaf_values.len()
            )));
        }
        for (id, v) in self.leaves.clone().into_iter().zip(leaf_values) {
            self.set_leaf(id, v)?;
        }
        self.forward();
        let out = self
            .output
            .ok_or_else(|| Error::State("graph has no output node".into()))?;
        Ok(&self.values[out.0])
    }

    pub fn is_evaluated(&self) -> bool {
        self.evaluated == self.nodes.len()
    }

    pub fn value(&self, id: NodeId) -> Result<&[f64]> {
        if id.0 >= self.evaluated && !matches!(self.nodes[id.0].op, Op::Leaf | Op::Constant) {
            return Err(Error::State(format!("node {} not evaluated", id.0)));
        }
        Ok(&self.values[id.0])
    }

    /// Convenience accessor for scalar nodes.
    pub fn scalar(&self, id: NodeId) -> Result<f64> {
        let v = self.value(id)?;
        if v.len() != 1 {
            return Err(Error::Shape(format!("node {} has length {}", id.0, v.len())));
        }
        Ok(v[0])
    }

    /// Gradient buffer of any node after [`Graph::backward`]. Nodes that do
    /// not depend on a leaf have no buffer.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.grads
            .as_ref()
            .and_then(|g| g.get(id.0))
            .filter(|g| !g.is_empty())
            .map(|g| g.as_slice())
    }

    fn compute(&self, i: usize) -> Option<Vec<f64>> {
        let v = |id: &NodeId| self.values[id.0].as_slice();
        let out = match &self.nodes[i].op {
            Op::Leaf | Op::Constant => return None,
            Op::Add(a, b) => v(a).iter().zip(v(b)).map(|(x, y)| x + y).collect(),
            Op::Sub(a, b) => v(a).iter().zip(v(b)).map(|(x, y)| x - y).collect(),
            Op::Mul(a, b) => v(a).iter().zip(v(b)).map(|(x, y)| x * y).collect(),
            Op::Scale(a, c) => v(a).iter().map(|x| x * c).collect(),
            Op::Offset(a, c) => v(a).iter().map(|x| x + c).collect(),
            Op::MatVec { w, x, rows, cols } => {
                let (w, x) = (v(w), v(x));
                (0..*rows)
                    .map(|r| {
                        w[r * cols..(r + 1) * cols]
                            .iter()
                            .zip(x)
                            .map(|(a, b)| a * b)
                            .sum()
                    })
                    .collect()
            }
            Op::Relu(a) => v(a).iter().map(|x| x.max(0.0)).collect(),
            Op::Exp(a) => v(a).iter().map(|x| x.exp()).collect(),
            Op::Square(a) => v(a).iter().map(|x| x * x).collect(),
            Op::Recip { x, eps } => v(x).iter().map(|x| 1.0 / (x + eps)).collect(),
            Op::Log { x, floor } => v(x).iter().map(|x| x.max(*floor).ln()).collect(),
            Op::Clamp { x, lo, hi } => v(x).iter().map(|x| x.clamp(*lo, *hi)).collect(),
            Op::Sum(a) => vec![v(a).iter().sum()],
            Op::Dot(a, b) => vec![dot(v(a), v(b))],
            Op::CosSim(a, b) => {
                let (a, b) = (v(a), v(b));
                vec![dot(a, b) / (guarded_norm(a) * guarded_norm(b))]
            }
            Op::Stack(items) => items.iter().map(|i| self.values[i.0][0]).collect(),
            Op::Index(a, k) => vec![v(a)[*k]],
            Op::Softmax(a) => softmax(v(a)),
            Op::WeightedSum(terms) => vec![terms
                .iter()
                .map(|(id, w)| w * self.values[id.0][0])
                .sum()],
        };
        Some(out)
    }

    /// Back-propagates from the output node. The output must be a scalar.
    pub fn backward(&mut self) -> Result<Gradients> {
        if !self.is_evaluated() {
            return Err(Error::State("backward called before forward".into()));
        }
        let out = self
            .output
            .ok_or_else(|| Error::State("graph has no output node".into()))?;
        if self.nodes[out.0].len != 1 {
            return Err(Error::Shape(format!(
                "output node has length {}, expected a scalar",
                self.nodes[out.0].len
            )));
        }

        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); self.nodes.len()];
        grads[out.0] = vec![1.0];

        for i in (0..=out.0).rev() {
            if grads[i].is_empty() || !self.nodes[i].requires_grad {
                continue;
            }
            let g = std::mem::take(&mut grads[i]);
            self.propagate(i, &g, &mut grads);
            grads[i] = g;
        }

        let entries = self
            .leaves
            .iter()
            .map(|&id| {
                let g = if grads[id.0].is_empty() {
                    vec![0.0; self.nodes[id.0].len]
                } else {
                    grads[id.0].clone()
                };
                (id, g)
            })
            .collect();
        self.grads = Some(grads);
        Ok(Gradients { entries })
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Vec<f64>]) {
        let val = |id: &NodeId| self.values[id.0].as_slice();
        let out = self.values[i].as_slice();
        match &self.nodes[i].op {
            Op::Leaf | Op::Constant => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |ga| axpy(ga, 1.0, g));
                self.accumulate(grads, *b, |gb| axpy(gb, 1.0, g));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |ga| axpy(ga, 1.0, g));
                self.accumulate(grads, *b, |gb| axpy(gb, -1.0, g));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(a), val(b));
                self.accumulate(grads, *a, |ga| {
                    for ((d, gi), bi) in ga.iter_mut().zip(g).zip(vb) {
                        *d += gi * bi;
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for ((d, gi), ai) in gb.iter_mut().zip(g).zip(va) {
                        *d += gi * ai;
                    }
                });
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, |ga| axpy(ga, *c, g)),
            Op::Offset(a, _) => self.accumulate(grads, *a, |ga| axpy(ga, 1.0, g)),
            Op::MatVec { w, x, rows, cols } => {
                let (wv, xv) = (val(w), val(x));
                self.accumulate(grads, *w, |gw| {
                    for r in 0..*rows {
                        let row = &mut gw[r * cols..(r + 1) * cols];
                        axpy(row, g[r], xv);
                    }
                });
                self.accumulate(grads, *x, |gx| {
                    for r in 0..*rows {
                        axpy(gx, g[r], &wv[r * cols..(r + 1) * cols]);
                    }
                });
            }
            Op::Relu(a) => {
                let va = val(a);
                self.accumulate(grads, *a, |ga| {
                    for ((d, gi), ai) in ga.iter_mut().zip(g).zip(va) {
                        if *ai > 0.0 {
                            *d += gi;
                        }
                    }
                });
            }
            Op::Exp(a) => self.accumulate(grads, *a, |ga| {
                for ((d, gi), oi) in ga.iter_mut().zip(g).zip(out) {
                    *d += gi * oi;
                }
            }),
            Op::Square(a) => {
                let va = val(a);
                self.accumulate(grads, *a, |ga| {
                    for ((d, gi), ai) in ga.iter_mut().zip(g).zip(va) {
                        *d += 2.0 * ai * gi;
                    }
                });
            }
            Op::Recip { x, .. } => self.accumulate(grads, *x, |gx| {
                for ((d, gi), oi) in gx.iter_mut().zip(g).zip(out) {
                    *d -= gi * oi * oi;
                }
            }),
            Op::Log { x, floor } => {
                let vx = val(x);
                self.accumulate(grads, *x, |gx| {
                    for ((d, gi), xi) in gx.iter_mut().zip(g).zip(vx) {
                        if *xi > *floor {
                            *d += gi / xi;
                        }
                    }
                });
            }
            Op::Clamp { x, lo, hi } => {
                let vx = val(x);
                self.accumulate(grads, *x, |gx| {
                    for ((d, gi), xi) in gx.iter_mut().zip(g).zip(vx) {
                        if *xi >= *lo && *xi <= *hi {
                            *d += gi;
                        }
                    }
                });
            }
            Op::Sum(a) => self.accumulate(grads, *a, |ga| ga.iter_mut().for_each(|d| *d += g[0])),
            Op::Dot(a, b) => {
                let (va, vb) = (val(a), val(b));
                self.accumulate(grads, *a, |ga| axpy(ga, g[0], vb));
                self.accumulate(grads, *b, |gb| axpy(gb, g[0], va));
            }
            Op::CosSim(a, b) => {
                let (va, vb) = (val(a), val(b));
                let (na, nb) = (guarded_norm(va), guarded_norm(vb));
                let cos = out[0];
                // d cos / d a = b / (|a||b|) - cos * a / |a|^2
                self.accumulate(grads, *a, |ga| {
                    axpy(ga, g[0] / (na * nb), vb);
                    axpy(ga, -g[0] * cos / (na * na), va);
                });
                self.accumulate(grads, *b, |gb| {
                    axpy(gb, g[0] / (na * nb), va);
                    axpy(gb, -g[0] * cos / (nb * nb), vb);
                });
            }
            Op::Stack(items) => {
                for (k, id) in items.iter().enumerate() {
                    self.accumulate(grads, *id, |gi| gi[0] += g[k]);
                }
            }
            Op::Index(a, k) => self.accumulate(grads, *a, |ga| ga[*k] += g[0]),
            Op::Softmax(a) => {
                let inner: f64 = g.iter().zip(out).map(|(gi, si)| gi * si).sum();
                self.accumulate(grads, *a, |ga| {
                    for ((d, gi), si) in ga.iter_mut().zip(g).zip(out) {
                        *d += si * (gi - inner);
                    }
                });
            }
            Op::WeightedSum(terms) => {
                for (id, w) in terms {
                    self.accumulate(grads, *id, |gi| gi[0] += w * g[0]);
                }
            }
        }
    }

    fn accumulate(&self, grads: &mut [Vec<f64>], id: NodeId, f: impl FnOnce(&mut [f64])) {
        let node = &self.nodes[id.0];
        if !node.requires_grad {
            return;
        }
        let buf = &mut grads[id.0];
        if buf.is_empty() {
            *buf = vec![0.0; node.len];
        }
        f(buf);
    }
}

fn inputs(op: &Op) -> Vec<NodeId> {
    match op {
        Op::Leaf | Op::Constant => vec![],
        Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Dot(a, b) | Op::CosSim(a, b) => {
            vec![*a, *b]
        }
        Op::MatVec { w, x, .. } => vec![*w, *x],
        Op::Scale(a, _)
        | Op::Offset(a, _)
        | Op::Relu(a)
        | Op::Exp(a)
        | Op::Square(a)
        | Op::Sum(a)
        | Op::Index(a, _)
        | Op::Softmax(a) => vec![*a],
        Op::Recip { x, .. } | Op::Log { x, .. } | Op::Clamp { x, .. } => vec![*x],
        Op::Stack(items) => items.clone(),
        Op::WeightedSum(terms) => terms.iter().map(|(id, _)| *id).collect(),
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn guarded_norm(a: &[f64]) -> f64 {
    (dot(a, a) + COS_EPS * COS_EPS).sqrt()
}

fn softmax(a: &[f64]) -> Vec<f64> {
    let max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = a.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Compares analytic gradients against central differences with step `h`.
///
/// Returns the maximum over all leaf entries of
/// `|analytic - numeric| / max(1, |analytic|)`. Leaf values are restored
/// before returning.
pub fn grad_check(graph: &mut Graph, h: f64) -> Result<f64> {
    let out = graph
        .output
        .ok_or_else(|| Error::State("graph has no output node".into()))?;
    graph.forward();
    let analytic = graph.backward()?;

    let mut worst = 0.0_f64;
    for (leaf, grad) in analytic.iter() {
        let original = graph.values[leaf.0].clone();
        let mut probe = original.clone();
        for (j, &a) in grad.iter().enumerate() {
            probe[j] = original[j] + h;
            graph.set_leaf(leaf, &probe)?;
            graph.forward();
            let plus = graph.values[out.0][0];
            probe[j] = original[j] - h;
            graph.set_leaf(leaf, &probe)?;
            graph.forward();
            let minus = graph.values[out.0][0];
            probe[j] = original[j];

            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
        }
        graph.set_leaf(leaf, &original)?;
    }
    graph.forward();
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_graph(x: f64, build: impl FnOnce(&mut Graph, NodeId) -> NodeId) -> (Graph, NodeId) {
        let mut g = Graph::new();
        let leaf = g.leaf(vec![x]);
        let out = build(&mut g, leaf);
        g.set_output(out);
        (g, leaf)
    }

    #[test]
    fn square_forward_and_backward() {
        let (mut g, x) = scalar_graph(3.0, |g, x| g.square(x));
        assert_eq!(g.eval_forward(&[vec![3.0]]).unwrap(), &[9.0]);
        let grads = g.backward().unwrap();
        assert_eq!(grads.get(x).unwrap(), &[6.0]);
        assert_eq!(g.grad(g.output().unwrap()).unwrap(), &[1.0]);
    }

    #[test]
    fn relu_clips_negative() {
        let (mut g, _) = scalar_graph(-2.0, |g, x| g.relu(x));
        assert_eq!(g.eval_forward(&[vec![-2.0]]).unwrap(), &[0.0]);
    }

    #[test]
    fn cos_sim_of_orthogonal_vectors_is_zero() {
        let mut g = Graph::new();
        let a = g.leaf(vec![1.0, 0.0]);
        let b = g.leaf(vec![0.0, 1.0]);
        let c = g.cos_sim(a, b);
        g.set_output(c);
        g.forward();
        assert_eq!(g.scalar(c).unwrap(), 0.0);
    }

    #[test]
    fn log_derivative() {
        let (mut g, x) = scalar_graph(2.0, |g, x| g.log(x, 1e-12));
        g.forward();
        let grads = g.backward().unwrap();
        assert_eq!(grads.get(x).unwrap(), &[0.5]);
    }

    #[test]
    fn squared_distance_gradient_against_center() {
        // d/dc ||f - c||^2 with f = [1, 1], c = [0, 0]; oracle: central differences.
        let mut g = Graph::new();
        let f = g.constant(vec![1.0, 1.0]);
        let c = g.leaf(vec![0.0, 0.0]);
        let d = g.sub(f, c);
        let sq = g.square(d);
        let s = g.sum(sq);
        g.set_output(s);
        g.forward();
        let analytic = g.backward().unwrap().get(c).unwrap().to_vec();

        let h = 1e-5;
        let loss = |c0: f64, c1: f64| (1.0 - c0).powi(2) + (1.0 - c1).powi(2);
        let numeric = [
            (loss(h, 0.0) - loss(-h, 0.0)) / (2.0 * h),
            (loss(0.0, h) - loss(0.0, -h)) / (2.0 * h),
        ];
        for (a, n) in analytic.iter().zip(numeric) {
            assert!((a - n).abs() < 1e-8, "{a} vs {n}");
            assert!((a + 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_before_forward_is_a_state_error() {
        let (mut g, _) = scalar_graph(3.0, |g, x| g.square(x));
        let err = g.backward().unwrap_err();
        assert!(matches!(err, Error::State(_)));
    }

    #[test]
    fn leaf_shape_mismatch_is_rejected() {
        let (mut g, _) = scalar_graph(3.0, |g, x| g.square(x));
        let err = g.eval_forward(&[vec![1.0, 2.0]]).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
        let err = g.eval_forward(&[]).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn grad_check_on_polynomial() {
        let (mut g, _) = scalar_graph(3.0, |g, x| g.square(x));
        assert!(grad_check(&mut g, 1e-5).unwrap() < 1e-6);
    }

    #[test]
    fn setting_a_leaf_invalidates_dependents() {
        let (mut g, x) = scalar_graph(3.0, |g, x| g.square(x));
        g.forward();
        g.set_leaf(x, &[4.0]).unwrap();
        assert!(!g.is_evaluated());
        g.forward();
        assert_eq!(g.scalar(g.output().unwrap()).unwrap(), 16.0);
    }

    #[test]
    fn incremental_forward_evaluates_appended_nodes() {
        let mut g = Graph::new();
        let x = g.leaf(vec![1.0, 2.0]);
        let s = g.sum(x);
        g.forward();
        let t = g.scale(s, 3.0);
        assert!(g.value(t).is_err());
        g.forward();
        assert_eq!(g.scalar(t).unwrap(), 9.0);
    }

    #[test]
    fn grad_check_covers_every_op() {
        let mut g = Graph::new();
        let w = g.leaf(vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.7]);
        let x = g.leaf(vec![0.9, -1.1, 0.4]);
        let b = g.leaf(vec![0.2, -0.3]);
        let h = g.matvec(w, x, 2, 3);
        let h = g.add(h, b);
        let r = g.relu(h);
        let e = g.exp(r);
        let m = g.mul(e, b);
        let sub = g.sub(m, b);
        let sc = g.scale(sub, 1.5);
        let off = g.offset(sc, 2.0);
        let sq = g.square(off);
        let rc = g.recip(sq, 1e-6);
        let cs = g.cos_sim(rc, b);
        let d = g.dot(rc, e);
        let lg = g.log(d, 1e-12);
        let i0 = g.index(sq, 0);
        let st = g.stack(&[cs, lg, i0]);
        let sm = g.softmax(st);
        let cl = g.clamp(sm, 1e-12, 1.0 - 1e-12);
        let s1 = g.sum(cl);
        let p0 = g.index(cl, 0);
        let lp = g.log(p0, 1e-12);
        let out = g.weighted_sum(&[(lp, -1.0), (s1, 0.25), (cs, 2.0)]);
        g.set_output(out);
        let err = grad_check(&mut g, 1e-5).unwrap();
        assert!(err < 1e-6, "max relative error {err}");
    }
}
