//! Reverse-mode gradient tape over matrix-valued nodes.
//!
//! The tape records primal values and an op list during the forward pass;
//! `backward_from` replays it once in reverse creation order (which is
//! reverse topological order, since an op can only consume already-created
//! nodes) and accumulates parameter gradients per registered store.
//!
//! Batches ride along as columns: one tape describes the whole batch, and
//! per-column factors (`scale_cols`) express per-sample step sizes.

use super::matrix::{accumulate_outer, accumulate_transposed, linear_into, Matrix};
use super::{Activation, LayerParams, NnError, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Linear { store: usize, layer: usize, input: NodeId },
    Act { kind: Activation, input: NodeId },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Scale(NodeId, f64),
    ScaleCols(NodeId, Vec<f64>),
    ConcatRows(Vec<NodeId>),
    SumSqCols(NodeId),
    WeightedColSum(NodeId, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Matrix,
}

/// Gradients shaped like one `ParamStore`.
#[derive(Debug, Clone, PartialEq)]
pub struct StoreGrads {
    pub layers: Vec<LayerParams>,
}

impl StoreGrads {
    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().all(|v| v.is_finite()) && l.b.iter().all(|v| v.is_finite()))
    }

    pub fn add_assign(&mut self, other: &StoreGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.w.iter_mut().zip(&b.w) {
                *x += y;
            }
            for (x, y) in a.b.iter_mut().zip(&b.b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for l in self.layers.iter_mut() {
            for v in l.w.iter_mut() {
                *v *= k;
            }
            for v in l.b.iter_mut() {
                *v *= k;
            }
        }
    }
}

pub struct BackwardResult {
    /// One gradient set per registered store, in registration order.
    pub store_grads: Vec<StoreGrads>,
    /// Gradient reaching each node; `None` where no path from the seed.
    pub node_grads: Vec<Option<Matrix>>,
}

impl BackwardResult {
    pub fn grad_of(&self, node: NodeId) -> Option<&Matrix> {
        self.node_grads[node.0].as_ref()
    }
}

#[derive(Debug)]
pub struct GradTape<'p> {
    stores: Vec<&'p ParamStore>,
    nodes: Vec<Node>,
    default_output: Option<NodeId>,
}

impl<'p> GradTape<'p> {
    pub fn new() -> Self {
        GradTape { stores: Vec::new(), nodes: Vec::new(), default_output: None }
    }

    pub fn register(&mut self, store: &'p ParamStore) -> usize {
        self.stores.push(store);
        self.stores.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn set_default_output(&mut self, id: NodeId) {
        self.default_output = Some(id);
    }

    pub fn default_output(&self) -> Option<NodeId> {
        self.default_output
    }

    fn push(&mut self, op: Op, value: Matrix) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Constant or input node; gradients stop here (readable via `grad_of`).
    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Leaf, value)
    }

    /// Full MLP of a registered store applied to `input`.
    pub fn forward_store(&mut self, store: usize, input: NodeId) -> Result<NodeId, NnError> {
        let s = self.stores[store];
        if self.nodes[input.0].value.rows != s.input_dim() {
            return Err(NnError::ShapeMismatch {
                store: s.name.clone(),
                layer: 0,
                expected: s.input_dim(),
                got: self.nodes[input.0].value.rows,
            });
        }
        let mut cur = input;
        for (layer, spec) in s.arch.layers.iter().enumerate() {
            let mut out = Matrix::zeros(0, 0);
            let params = &s.layers[layer];
            linear_into(&params.w, &params.b, spec.input, spec.output, &self.nodes[cur.0].value, &mut out);
            cur = self.push(Op::Linear { store, layer, input: cur }, out);
            if spec.act != Activation::Identity {
                let mut act_val = self.nodes[cur.0].value.clone();
                for v in act_val.data.iter_mut() {
                    *v = spec.act.apply(*v);
                }
                cur = self.push(Op::Act { kind: spec.act, input: cur }, act_val);
            }
        }
        Ok(cur)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.nodes[a.0].value.clone();
        let bv = &self.nodes[b.0].value;
        assert_eq!((v.rows, v.cols), (bv.rows, bv.cols), "add shape mismatch");
        for (x, y) in v.data.iter_mut().zip(&bv.data) {
            *x += y;
        }
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.nodes[a.0].value.clone();
        let bv = &self.nodes[b.0].value;
        assert_eq!((v.rows, v.cols), (bv.rows, bv.cols), "sub shape mismatch");
        for (x, y) in v.data.iter_mut().zip(&bv.data) {
            *x -= y;
        }
        self.push(Op::Sub(a, b), v)
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let mut v = self.nodes[a.0].value.clone();
        for x in v.data.iter_mut() {
            *x *= k;
        }
        self.push(Op::Scale(a, k), v)
    }

    /// Multiply column `c` by `factors[c]`.
    pub fn scale_cols(&mut self, a: NodeId, factors: Vec<f64>) -> NodeId {
        let mut v = self.nodes[a.0].value.clone();
        assert_eq!(v.cols, factors.len(), "scale_cols factor length");
        for r in 0..v.rows {
            for (c, f) in factors.iter().enumerate() {
                v.data[r * v.cols + c] *= f;
            }
        }
        self.push(Op::ScaleCols(a, factors), v)
    }

    /// Stack nodes vertically (same column count).
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let cols = self.nodes[parts[0].0].value.cols;
        let rows: usize = parts.iter().map(|p| self.nodes[p.0].value.rows).sum();
        let mut v = Matrix::zeros(rows, cols);
        let mut r0 = 0;
        for p in parts {
            let pv = &self.nodes[p.0].value;
            assert_eq!(pv.cols, cols, "concat_rows column mismatch");
            for r in 0..pv.rows {
                for c in 0..cols {
                    v.data[(r0 + r) * cols + c] = pv.data[r * pv.cols + c];
                }
            }
            r0 += pv.rows;
        }
        self.push(Op::ConcatRows(parts.to_vec()), v)
    }

    /// Per-column squared L2 norm: `[1 × cols]`.
    pub fn sum_sq_cols(&mut self, a: NodeId) -> NodeId {
        let av = &self.nodes[a.0].value;
        let mut v = Matrix::zeros(1, av.cols);
        for c in 0..av.cols {
            let mut acc = 0.0;
            for r in 0..av.rows {
                let x = av.data[r * av.cols + c];
                acc += x * x;
            }
            v.data[c] = acc;
        }
        self.push(Op::SumSqCols(a), v)
    }

    /// Weighted sum across columns: out[r] = Σ_c w_c · a[r][c], `[rows × 1]`.
    pub fn weighted_col_sum(&mut self, a: NodeId, weights: Vec<f64>) -> NodeId {
        let av = &self.nodes[a.0].value;
        assert_eq!(av.cols, weights.len(), "weighted_col_sum weight length");
        let mut v = Matrix::zeros(av.rows, 1);
        for r in 0..av.rows {
            let mut acc = 0.0;
            for (c, w) in weights.iter().enumerate() {
                acc += w * av.data[r * av.cols + c];
            }
            v.data[r] = acc;
        }
        self.push(Op::WeightedColSum(a, weights), v)
    }

    /// Recompute every node value from the recorded ops; used to verify that
    /// the tape reproduces the forward pass.
    pub fn replay(&self) -> Vec<Matrix> {
        let mut vals: Vec<Matrix> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match &node.op {
                Op::Leaf => node.value.clone(),
                Op::Linear { store, layer, input } => {
                    let s = self.stores[*store];
                    let spec = &s.arch.layers[*layer];
                    let p = &s.layers[*layer];
                    let mut out = Matrix::zeros(0, 0);
                    linear_into(&p.w, &p.b, spec.input, spec.output, &vals[input.0], &mut out);
                    out
                }
                Op::Act { kind, input } => {
                    let mut out = vals[input.0].clone();
                    for v in out.data.iter_mut() {
                        *v = kind.apply(*v);
                    }
                    out
                }
                Op::Add(a, b) => {
                    let mut out = vals[a.0].clone();
                    for (x, y) in out.data.iter_mut().zip(&vals[b.0].data) {
                        *x += y;
                    }
                    out
                }
                Op::Sub(a, b) => {
                    let mut out = vals[a.0].clone();
                    for (x, y) in out.data.iter_mut().zip(&vals[b.0].data) {
                        *x -= y;
                    }
                    out
                }
                Op::Scale(a, k) => {
                    let mut out = vals[a.0].clone();
                    for x in out.data.iter_mut() {
                        *x *= k;
                    }
                    out
                }
                Op::ScaleCols(a, f) => {
                    let mut out = vals[a.0].clone();
                    for r in 0..out.rows {
                        for (c, fc) in f.iter().enumerate() {
                            out.data[r * out.cols + c] *= fc;
                        }
                    }
                    out
                }
                Op::ConcatRows(parts) => {
                    let cols = vals[parts[0].0].cols;
                    let rows: usize = parts.iter().map(|p| vals[p.0].rows).sum();
                    let mut out = Matrix::zeros(rows, cols);
                    let mut r0 = 0;
                    for p in parts {
                        let pv = &vals[p.0];
                        for r in 0..pv.rows {
                            for c in 0..cols {
                                out.data[(r0 + r) * cols + c] = pv.data[r * pv.cols + c];
                            }
                        }
                        r0 += pv.rows;
                    }
                    out
                }
                Op::SumSqCols(a) => {
                    let av = &vals[a.0];
                    let mut out = Matrix::zeros(1, av.cols);
                    for c in 0..av.cols {
                        let mut acc = 0.0;
                        for r in 0..av.rows {
                            let x = av.data[r * av.cols + c];
                            acc += x * x;
                        }
                        out.data[c] = acc;
                    }
                    out
                }
                Op::WeightedColSum(a, w) => {
                    let av = &vals[a.0];
                    let mut out = Matrix::zeros(av.rows, 1);
                    for r in 0..av.rows {
                        let mut acc = 0.0;
                        for (c, wc) in w.iter().enumerate() {
                            acc += wc * av.data[r * av.cols + c];
                        }
                        out.data[r] = acc;
                    }
                    out
                }
            };
            vals.push(v);
        }
        vals
    }

    /// Reverse pass seeded with `seed` at `output`.
    pub fn backward_from(&self, output: NodeId, seed: &Matrix) -> BackwardResult {
        let mut node_grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        let out_val = &self.nodes[output.0].value;
        assert_eq!((seed.rows, seed.cols), (out_val.rows, out_val.cols), "seed shape mismatch");
        node_grads[output.0] = Some(seed.clone());

        let mut store_grads: Vec<StoreGrads> =
            self.stores.iter().map(|s| s.zero_grads()).collect();

        let accumulate = |grads: &mut Vec<Option<Matrix>>, id: NodeId, add: &Matrix| {
            match &mut grads[id.0] {
                Some(g) => {
                    for (x, y) in g.data.iter_mut().zip(&add.data) {
                        *x += y;
                    }
                }
                slot @ None => *slot = Some(add.clone()),
            }
        };

        for idx in (0..=output.0).rev() {
            let Some(g) = node_grads[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Leaf => {
                    // keep the gradient readable for callers
                    node_grads[idx] = Some(g);
                    continue;
                }
                Op::Linear { store, layer, input } => {
                    let s = self.stores[*store];
                    let spec = &s.arch.layers[*layer];
                    let x = &self.nodes[input.0].value;
                    let sg = &mut store_grads[*store].layers[*layer];
                    accumulate_outer(&mut sg.w, &g, x);
                    for o in 0..spec.output {
                        let mut acc = 0.0;
                        for c in 0..g.cols {
                            acc += g.data[o * g.cols + c];
                        }
                        sg.b[o] += acc;
                    }
                    let mut dx = Matrix::zeros(x.rows, x.cols);
                    accumulate_transposed(&s.layers[*layer].w, spec.input, spec.output, &g, &mut dx);
                    accumulate(&mut node_grads, *input, &dx);
                }
                Op::Act { kind, input } => {
                    let pre = &self.nodes[input.0].value;
                    let mut dx = g.clone();
                    for (d, z) in dx.data.iter_mut().zip(&pre.data) {
                        *d *= kind.derivative(*z);
                    }
                    accumulate(&mut node_grads, *input, &dx);
                }
                Op::Add(a, b) => {
                    accumulate(&mut node_grads, *a, &g);
                    accumulate(&mut node_grads, *b, &g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut node_grads, *a, &g);
                    let mut neg = g.clone();
                    for v in neg.data.iter_mut() {
                        *v = -*v;
                    }
                    accumulate(&mut node_grads, *b, &neg);
                }
                Op::Scale(a, k) => {
                    let mut dx = g.clone();
                    for v in dx.data.iter_mut() {
                        *v *= k;
                    }
                    accumulate(&mut node_grads, *a, &dx);
                }
                Op::ScaleCols(a, f) => {
                    let mut dx = g.clone();
                    for r in 0..dx.rows {
                        for (c, fc) in f.iter().enumerate() {
                            dx.data[r * dx.cols + c] *= fc;
                        }
                    }
                    accumulate(&mut node_grads, *a, &dx);
                }
                Op::ConcatRows(parts) => {
                    let mut r0 = 0;
                    for p in parts {
                        let pv = &self.nodes[p.0].value;
                        let mut dx = Matrix::zeros(pv.rows, pv.cols);
                        for r in 0..pv.rows {
                            for c in 0..pv.cols {
                                dx.data[r * pv.cols + c] = g.data[(r0 + r) * g.cols + c];
                            }
                        }
                        accumulate(&mut node_grads, *p, &dx);
                        r0 += pv.rows;
                    }
                }
                Op::SumSqCols(a) => {
                    let av = &self.nodes[a.0].value;
                    let mut dx = Matrix::zeros(av.rows, av.cols);
                    for r in 0..av.rows {
                        for c in 0..av.cols {
                            dx.data[r * av.cols + c] = 2.0 * av.data[r * av.cols + c] * g.data[c];
                        }
                    }
                    accumulate(&mut node_grads, *a, &dx);
                }
                Op::WeightedColSum(a, w) => {
                    let av = &self.nodes[a.0].value;
                    let mut dx = Matrix::zeros(av.rows, av.cols);
                    for r in 0..av.rows {
                        for (c, wc) in w.iter().enumerate() {
                            dx.data[r * av.cols + c] = wc * g.data[r];
                        }
                    }
                    accumulate(&mut node_grads, *a, &dx);
                }
            }
        }

        BackwardResult { store_grads, node_grads }
    }
}

impl Default for GradTape<'_> {
    fn default() -> Self {
        Self::new()
    }
}
