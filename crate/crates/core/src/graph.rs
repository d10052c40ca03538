//! Reverse-mode automatic differentiation over dense 2-D tensors.
//!
//! A [`Graph`] is an append-only arena of nodes. Every operation evaluates
//! eagerly and records (op, parents, output), so parents always precede
//! children and the arena order is already topological. `backward` walks the
//! arena in reverse and *emits the gradient expressions as new graph nodes*,
//! which is what makes second derivatives (gradient penalties) fall out of
//! the same machinery: differentiate a node that happens to be a gradient.

use crate::error::AutodiffError;
use crate::tensor::Tensor;

/// Index of a node in its graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(pub usize);

/// Operation kinds. The trailing group exists so backward rules can be
/// written in terms of graph ops themselves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Op {
    Leaf,
    /// (n x k) @ (k x m) -> n x m
    MatMul,
    /// (n x m) + (1 x m) broadcast over rows
    AddBroadcastRow,
    /// elementwise, same shape
    Add,
    Sub,
    Mul,
    Div,
    Square,
    Sqrt,
    Exp,
    Log,
    Relu,
    LeakyRelu(f64),
    Sigmoid,
    Tanh,
    /// ln(1 + e^x), evaluated in overflow-safe form
    Softplus,
    /// n x m -> 1 x 1
    MeanAll,
    SumAll,
    /// n x m -> n x 1 (sum of each row)
    SumRows,
    /// n x m -> 1 x m (sum down each column)
    SumCols,
    /// n x m -> n x 1, sqrt of per-row sum of squares
    L2NormRows,
    Transpose,
    Scale(f64),
    AddScalar(f64),
    /// 1 x 1 -> rows x cols
    BroadcastScalar { rows: usize, cols: usize },
    /// n x 1 -> n x cols
    BroadcastCol { cols: usize },
    /// 1 x m -> rows x m
    BroadcastRow { rows: usize },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul => "matmul",
            Op::AddBroadcastRow => "add-broadcast-row",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Square => "square",
            Op::Sqrt => "sqrt",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Relu => "relu",
            Op::LeakyRelu(_) => "leaky-relu",
            Op::Sigmoid => "sigmoid",
            Op::Tanh => "tanh",
            Op::Softplus => "softplus",
            Op::MeanAll => "mean-all",
            Op::SumAll => "sum-all",
            Op::SumRows => "sum-rows",
            Op::SumCols => "sum-cols",
            Op::L2NormRows => "l2-norm-rows",
            Op::Transpose => "transpose",
            Op::Scale(_) => "scale",
            Op::AddScalar(_) => "add-scalar",
            Op::BroadcastScalar { .. } => "broadcast-scalar",
            Op::BroadcastCol { .. } => "broadcast-col",
            Op::BroadcastRow { .. } => "broadcast-row",
        }
    }

    fn arity(&self) -> usize {
        match self {
            Op::Leaf => 0,
            Op::MatMul | Op::AddBroadcastRow | Op::Add | Op::Sub | Op::Mul | Op::Div => 2,
            _ => 1,
        }
    }
}

struct Node {
    op: Op,
    parents: Vec<NodeId>,
    value: Tensor,
}

/// Gradient buffers produced by one backward pass: for each node that is an
/// ancestor of the root, the id of the node holding its gradient.
pub struct Gradients {
    grads: Vec<Option<NodeId>>,
}

impl Gradients {
    /// Gradient node for `node`, if `node` is an ancestor of the root.
    pub fn get(&self, node: NodeId) -> Option<NodeId> {
        self.grads.get(node.0).copied().flatten()
    }
}

/// Outcome of [`Graph::input_gradient`]. `disconnected` is set when the
/// requested input is not an ancestor of the root; the returned node is
/// then a zero tensor of the input's shape.
pub struct InputGradient {
    pub node: NodeId,
    pub disconnected: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Register a constant/input node.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, vec![], value)
    }

    /// Value of a node.
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn op(&self, id: NodeId) -> Op {
        self.nodes[id.0].op
    }

    /// New leaf carrying a copy of `id`'s value; gradients do not flow
    /// through it.
    pub fn detach(&mut self, id: NodeId) -> NodeId {
        let v = self.nodes[id.0].value.clone();
        self.leaf(v)
    }

    fn push(&mut self, op: Op, parents: Vec<NodeId>, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, parents, value });
        NodeId(self.nodes.len() - 1)
    }

    fn check(&self, id: NodeId) -> Result<(), AutodiffError> {
        if id.0 >= self.nodes.len() {
            return Err(AutodiffError::BadNode {
                index: id.0,
                len: self.nodes.len(),
            });
        }
        Ok(())
    }

    /// Append one op. Parent shapes are checked against the op's shape rule;
    /// the returned node caches the evaluated result.
    pub fn apply(&mut self, op: Op, parents: &[NodeId]) -> Result<NodeId, AutodiffError> {
        if parents.len() != op.arity() {
            return Err(AutodiffError::Arity {
                op: op.name(),
                expected: op.arity(),
                got: parents.len(),
            });
        }
        for &p in parents {
            self.check(p)?;
        }
        let value = match op {
            Op::Leaf => unreachable!("leaf has no parents"),
            Op::MatMul => {
                let (a, b) = (self.value(parents[0]), self.value(parents[1]));
                if a.cols() != b.rows() {
                    return Err(self.mismatch(op, parents));
                }
                matmul(a, b)
            }
            Op::AddBroadcastRow => {
                let (a, b) = (self.value(parents[0]), self.value(parents[1]));
                if b.rows() != 1 || a.cols() != b.cols() {
                    return Err(self.mismatch(op, parents));
                }
                let mut out = a.clone();
                for i in 0..out.rows() {
                    let base = i * out.cols();
                    for j in 0..out.cols() {
                        out.values_mut()[base + j] += b.values()[j];
                    }
                }
                out
            }
            Op::Add | Op::Sub | Op::Mul | Op::Div => {
                let (a, b) = (self.value(parents[0]), self.value(parents[1]));
                if a.shape() != b.shape() {
                    return Err(self.mismatch(op, parents));
                }
                let f: fn(f64, f64) -> f64 = match op {
                    Op::Add => |x, y| x + y,
                    Op::Sub => |x, y| x - y,
                    Op::Mul => |x, y| x * y,
                    _ => |x, y| x / y,
                };
                let mut out = a.clone();
                for (o, &bv) in out.values_mut().iter_mut().zip(b.values()) {
                    *o = f(*o, bv);
                }
                out
            }
            Op::Square => self.value(parents[0]).map(|x| x * x),
            Op::Sqrt => {
                let a = self.value(parents[0]);
                if let Some(&bad) = a.values().iter().find(|v| **v < 0.0) {
                    return Err(AutodiffError::Domain {
                        op: "sqrt",
                        value: bad,
                    });
                }
                a.map(f64::sqrt)
            }
            Op::Exp => self.value(parents[0]).map(f64::exp),
            Op::Log => {
                let a = self.value(parents[0]);
                if let Some(&bad) = a.values().iter().find(|v| **v <= 0.0) {
                    return Err(AutodiffError::Domain {
                        op: "log",
                        value: bad,
                    });
                }
                a.map(f64::ln)
            }
            Op::Relu => self.value(parents[0]).map(|x| if x > 0.0 { x } else { 0.0 }),
            Op::LeakyRelu(alpha) => self
                .value(parents[0])
                .map(|x| if x > 0.0 { x } else { alpha * x }),
            Op::Sigmoid => self.value(parents[0]).map(sigmoid),
            Op::Tanh => self.value(parents[0]).map(f64::tanh),
            Op::Softplus => self.value(parents[0]).map(softplus),
            Op::MeanAll => {
                let a = self.value(parents[0]);
                Tensor::scalar(a.values().iter().sum::<f64>() / a.len() as f64)
            }
            Op::SumAll => Tensor::scalar(self.value(parents[0]).values().iter().sum()),
            Op::SumRows => {
                let a = self.value(parents[0]);
                let sums: Vec<f64> = (0..a.rows())
                    .map(|i| a.row_slice(i).iter().sum())
                    .collect();
                Tensor::column(&sums)
            }
            Op::SumCols => {
                let a = self.value(parents[0]);
                let mut sums = vec![0.0; a.cols()];
                for i in 0..a.rows() {
                    for (s, &v) in sums.iter_mut().zip(a.row_slice(i)) {
                        *s += v;
                    }
                }
                Tensor::row(&sums)
            }
            Op::L2NormRows => {
                let a = self.value(parents[0]);
                let norms: Vec<f64> = (0..a.rows())
                    .map(|i| a.row_slice(i).iter().map(|v| v * v).sum::<f64>().sqrt())
                    .collect();
                Tensor::column(&norms)
            }
            Op::Transpose => self.value(parents[0]).transposed(),
            Op::Scale(c) => self.value(parents[0]).map(|x| c * x),
            Op::AddScalar(c) => self.value(parents[0]).map(|x| x + c),
            Op::BroadcastScalar { rows, cols } => {
                let a = self.value(parents[0]);
                if a.shape() != (1, 1) {
                    return Err(self.mismatch(op, parents));
                }
                Tensor::filled(rows, cols, a.item())
            }
            Op::BroadcastCol { cols } => {
                let a = self.value(parents[0]);
                if a.cols() != 1 {
                    return Err(self.mismatch(op, parents));
                }
                let mut out = Tensor::zeros(a.rows(), cols);
                for i in 0..a.rows() {
                    let v = a.get(i, 0);
                    out.values_mut()[i * cols..(i + 1) * cols].fill(v);
                }
                out
            }
            Op::BroadcastRow { rows } => {
                let a = self.value(parents[0]);
                if a.rows() != 1 {
                    return Err(self.mismatch(op, parents));
                }
                let mut out = Tensor::zeros(rows, a.cols());
                for i in 0..rows {
                    let base = i * a.cols();
                    out.values_mut()[base..base + a.cols()].copy_from_slice(a.values());
                }
                out
            }
        };
        Ok(self.push(op, parents.to_vec(), value))
    }

    fn mismatch(&self, op: Op, parents: &[NodeId]) -> AutodiffError {
        let lhs = self.value(parents[0]).shape();
        let rhs = parents
            .get(1)
            .map_or(lhs, |&p| self.value(p).shape());
        AutodiffError::ShapeMismatch {
            op: op.name(),
            lhs,
            rhs,
        }
    }

    // Convenience wrappers; these are what model code actually calls.

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.apply(Op::MatMul, &[a, b])
    }
    pub fn add_broadcast_row(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.apply(Op::AddBroadcastRow, &[a, b])
    }
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.apply(Op::Add, &[a, b])
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.apply(Op::Sub, &[a, b])
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.apply(Op::Mul, &[a, b])
    }
    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.apply(Op::Div, &[a, b])
    }
    pub fn square(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.apply(Op::Square, &[a])
    }
    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.apply(Op::Sqrt, &[a])
    }
    pub fn exp(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.apply(Op::Exp, &[a])
    }
    pub fn log(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.apply(Op::Log, &[a])
    }
    pub fn relu(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.apply(Op::Relu, &[a])
    }
    pub fn leaky_relu(&mut self, a: NodeId, alpha: f64) -> Result<NodeId, AutodiffError> {
        self.apply(Op::LeakyRelu(alpha), &[a])
    }
    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.apply(Op::Sigmoid, &[a])
    }
    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.apply(Op::Tanh, &[a])
    }
    pub fn softplus(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.apply(Op::Softplus, &[a])
    }
    pub fn mean_all(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.apply(Op::MeanAll, &[a])
    }
    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.apply(Op::SumAll, &[a])
    }
    pub fn sum_rows(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.apply(Op::SumRows, &[a])
    }
    pub fn l2_norm_rows(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.apply(Op::L2NormRows, &[a])
    }
    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.apply(Op::Transpose, &[a])
    }
    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId, AutodiffError> {
        self.apply(Op::Scale(c), &[a])
    }
    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> Result<NodeId, AutodiffError> {
        self.apply(Op::AddScalar(c), &[a])
    }

    /// Gradient of the scalar `root` with respect to every ancestor node.
    ///
    /// The pass appends the gradient expressions to the graph, so any
    /// returned gradient can itself be differentiated by a further
    /// `backward` call.
    pub fn backward(&mut self, root: NodeId) -> Result<Gradients, AutodiffError> {
        self.check(root)?;
        if self.value(root).shape() != (1, 1) {
            return Err(AutodiffError::NonScalarRoot {
                shape: self.value(root).shape(),
            });
        }
        let frontier = root.0 + 1;
        let mut needed = vec![false; frontier];
        needed[root.0] = true;
        // Arena order is topological, so one reverse sweep marks ancestors.
        for i in (0..frontier).rev() {
            if needed[i] {
                for p in &self.nodes[i].parents {
                    needed[p.0] = true;
                }
            }
        }

        let mut grads: Vec<Option<NodeId>> = vec![None; frontier];
        grads[root.0] = Some(self.leaf(Tensor::scalar(1.0)));

        for i in (0..frontier).rev() {
            if !needed[i] {
                continue;
            }
            let Some(g) = grads[i] else { continue };
            let op = self.nodes[i].op;
            let parents = self.nodes[i].parents.clone();
            let out = NodeId(i);
            for (k, &p) in parents.iter().enumerate() {
                let contribution = self.vjp(op, &parents, out, g, k);
                grads[p.0] = Some(match grads[p.0] {
                    None => contribution,
                    Some(prev) => self
                        .add(prev, contribution)
                        .expect("gradient accumulation shape"),
                });
            }
        }
        Ok(Gradients { grads })
    }

    /// Gradient contribution of node `out = op(parents)` to `parents[k]`,
    /// given the incoming gradient node `g`. Built from graph ops so the
    /// result stays differentiable.
    fn vjp(&mut self, op: Op, parents: &[NodeId], out: NodeId, g: NodeId, k: usize) -> NodeId {
        let r = |x: Result<NodeId, AutodiffError>| x.expect("backward rule shape");
        match op {
            Op::Leaf => unreachable!("leaves have no parents"),
            Op::MatMul => {
                if k == 0 {
                    let bt = r(self.transpose(parents[1]));
                    r(self.matmul(g, bt))
                } else {
                    let at = r(self.transpose(parents[0]));
                    r(self.matmul(at, g))
                }
            }
            Op::AddBroadcastRow => {
                if k == 0 {
                    g
                } else {
                    r(self.apply(Op::SumCols, &[g]))
                }
            }
            Op::Add => g,
            Op::Sub => {
                if k == 0 {
                    g
                } else {
                    r(self.scale(g, -1.0))
                }
            }
            Op::Mul => {
                let other = parents[1 - k];
                r(self.mul(g, other))
            }
            Op::Div => {
                let (a, b) = (parents[0], parents[1]);
                if k == 0 {
                    r(self.div(g, b))
                } else {
                    // d(a/b)/db = -a / b^2
                    let b2 = r(self.square(b));
                    let ab2 = r(self.div(a, b2));
                    let m = r(self.mul(g, ab2));
                    r(self.scale(m, -1.0))
                }
            }
            Op::Square => {
                let m = r(self.mul(g, parents[0]));
                r(self.scale(m, 2.0))
            }
            Op::Sqrt => {
                // Guard the kink at 0 under the root only in the backward rule.
                let shifted = r(self.add_scalar(parents[0], 1e-12));
                let root = r(self.sqrt(shifted));
                let d = r(self.div(g, root));
                r(self.scale(d, 0.5))
            }
            Op::Exp => r(self.mul(g, out)),
            Op::Log => r(self.div(g, parents[0])),
            Op::Relu => {
                let mask = self.value(parents[0]).map(|x| if x > 0.0 { 1.0 } else { 0.0 });
                let m = self.leaf(mask);
                r(self.mul(g, m))
            }
            Op::LeakyRelu(alpha) => {
                // Subgradient at exactly 0 fixed to the negative-slope branch.
                let mask = self
                    .value(parents[0])
                    .map(|x| if x > 0.0 { 1.0 } else { alpha });
                let m = self.leaf(mask);
                r(self.mul(g, m))
            }
            Op::Sigmoid => {
                // s' = s (1 - s)
                let neg = r(self.scale(out, -1.0));
                let one_minus = r(self.add_scalar(neg, 1.0));
                let s = r(self.mul(out, one_minus));
                r(self.mul(g, s))
            }
            Op::Tanh => {
                let t2 = r(self.square(out));
                let neg = r(self.scale(t2, -1.0));
                let d = r(self.add_scalar(neg, 1.0));
                r(self.mul(g, d))
            }
            Op::Softplus => {
                let s = r(self.sigmoid(parents[0]));
                r(self.mul(g, s))
            }
            Op::MeanAll => {
                let (rows, cols) = self.value(parents[0]).shape();
                let scaled = r(self.scale(g, 1.0 / (rows * cols) as f64));
                r(self.apply(Op::BroadcastScalar { rows, cols }, &[scaled]))
            }
            Op::SumAll => {
                let (rows, cols) = self.value(parents[0]).shape();
                r(self.apply(Op::BroadcastScalar { rows, cols }, &[g]))
            }
            Op::SumRows => {
                let cols = self.value(parents[0]).cols();
                r(self.apply(Op::BroadcastCol { cols }, &[g]))
            }
            Op::SumCols => {
                let rows = self.value(parents[0]).rows();
                r(self.apply(Op::BroadcastRow { rows }, &[g]))
            }
            Op::L2NormRows => {
                // d||x_i|| / dx_ij = x_ij / ||x_i||, sqrt-guarded like Op::Sqrt.
                let y2 = r(self.square(out));
                let shifted = r(self.add_scalar(y2, 1e-12));
                let root = r(self.sqrt(shifted));
                let ratio = r(self.div(g, root));
                let cols = self.value(parents[0]).cols();
                let spread = r(self.apply(Op::BroadcastCol { cols }, &[ratio]));
                r(self.mul(spread, parents[0]))
            }
            Op::Transpose => r(self.transpose(g)),
            Op::Scale(c) => r(self.scale(g, c)),
            Op::AddScalar(_) => g,
            Op::BroadcastScalar { .. } => r(self.sum_all(g)),
            Op::BroadcastCol { .. } => r(self.sum_rows(g)),
            Op::BroadcastRow { .. } => r(self.apply(Op::SumCols, &[g])),
        }
    }

    /// `d root / d input` as graph nodes, ready for a second backward pass.
    /// A disconnected input yields a zero tensor and a warning flag rather
    /// than an error.
    pub fn input_gradient(
        &mut self,
        root: NodeId,
        input: NodeId,
    ) -> Result<InputGradient, AutodiffError> {
        self.check(input)?;
        let grads = self.backward(root)?;
        match grads.get(input) {
            Some(node) => Ok(InputGradient {
                node,
                disconnected: false,
            }),
            None => {
                let (rows, cols) = self.value(input).shape();
                let node = self.leaf(Tensor::zeros(rows, cols));
                Ok(InputGradient {
                    node,
                    disconnected: true,
                })
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    // max(x, 0) + ln(1 + e^{-|x|}) never overflows
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k) = a.shape();
    let m = b.cols();
    let mut out = Tensor::zeros(n, m);
    let bv = b.values();
    for i in 0..n {
        let arow = a.row_slice(i);
        let orow = &mut out.values_mut()[i * m..(i + 1) * m];
        for (kk, &aik) in arow.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let brow = &bv[kk * m..(kk + 1) * m];
            for (o, &bvj) in orow.iter_mut().zip(brow) {
                *o += aik * bvj;
            }
        }
    }
    debug_assert_eq!(k, b.rows());
    out
}

/// Max relative error between backward gradients and central finite
/// differences, taken over every coordinate of every leaf.
///
/// `build` must construct the graph from scratch given leaves for `points`
/// and return a scalar root; it is invoked repeatedly at perturbed points.
pub fn grad_check_fd<F>(build: F, points: &[Tensor], h: f64) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId, AutodiffError>,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let eval = |pts: &[Tensor]| -> Result<f64, AutodiffError> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = pts.iter().map(|t| g.leaf(t.clone())).collect();
        let root = build(&mut g, &ids)?;
        Ok(g.value(root).item())
    };

    // Analytic side.
    let mut graph = Graph::new();
    let ids: Vec<NodeId> = points.iter().map(|t| graph.leaf(t.clone())).collect();
    let root = build(&mut graph, &ids)?;
    if graph.value(root).shape() != (1, 1) {
        return Err(AutodiffError::NonScalarRoot {
            shape: graph.value(root).shape(),
        });
    }
    let grads = graph.backward(root)?;

    let mut worst: f64 = 0.0;
    let mut work: Vec<Tensor> = points.to_vec();
    for (pi, id) in ids.iter().enumerate() {
        let analytic: Vec<f64> = match grads.get(*id) {
            Some(gn) => graph.value(gn).values().to_vec(),
            None => vec![0.0; points[pi].len()],
        };
        for ci in 0..points[pi].len() {
            let orig = work[pi].values()[ci];
            work[pi].values_mut()[ci] = orig + h;
            let plus = eval(&work)?;
            work[pi].values_mut()[ci] = orig - h;
            let minus = eval(&work)?;
            work[pi].values_mut()[ci] = orig;
            let fd = (plus - minus) / (2.0 * h);
            let rel = (analytic[ci] - fd).abs() / (analytic[ci].abs() + 1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
