use super::matrix::{matmul_raw, Matrix};
use crate::error::{Error, Result};

/// Handle to a node inside a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseKind {
    Add,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Squash {
    Logistic,
    Tanh,
}

/// How the right operand of an elementwise op is laid out against the left.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// rows x 1: one scalar per row.
    PerRowScalar,
    /// 1 x cols: the same vector added to every row.
    PerRowVector,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Elementwise(NodeId, NodeId, ElementwiseKind, Broadcast),
    Sub(NodeId, NodeId),
    Scale(NodeId, f64),
    Squash(NodeId, Squash),
    Abs(NodeId),
    Square(NodeId),
    BinaryEntropy(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    Transpose(NodeId),
    ColSlice(NodeId, usize),
    Row(NodeId, usize),
    HConcat(Vec<NodeId>),
    VStack(Vec<NodeId>),
    NormalizeRows(NodeId),
}

struct NodeData {
    value: Matrix,
    grad: Matrix,
    op: Op,
}

/// Lower clamp applied to probabilities before taking logarithms.
pub const ENTROPY_CLAMP: f64 = 1e-7;

/// Define-by-run computation graph with reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and `backward` simply walks it in reverse. Gradients
/// accumulate across `backward` calls until [`Graph::zero_grad`] is called.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<NodeData>,
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

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.nodes.push(NodeData { value, grad, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Inserts a leaf (parameter, input or constant).
    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].grad
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.shape()
    }

    /// Resets every accumulated gradient to zero.
    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad.fill(0.0);
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    /// Elementwise add/mul. `b` may match `a`'s shape, be a `rows x 1`
    /// column (one scalar per row), or a `1 x cols` row vector.
    pub fn elementwise(&mut self, a: NodeId, b: NodeId, kind: ElementwiseKind) -> Result<NodeId> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        let bcast = if (ar, ac) == (br, bc) {
            Broadcast::Same
        } else if br == ar && bc == 1 {
            Broadcast::PerRowScalar
        } else if br == 1 && bc == ac {
            Broadcast::PerRowVector
        } else {
            return Err(Error::dim(
                "elementwise",
                format!("{:?} vs {:?}", (ar, ac), (br, bc)),
            ));
        };
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = av.clone();
        let f = |x: f64, y: f64| match kind {
            ElementwiseKind::Add => x + y,
            ElementwiseKind::Mul => x * y,
        };
        {
            let data = out.as_mut_slice();
            for r in 0..ar {
                for c in 0..ac {
                    let y = match bcast {
                        Broadcast::Same => bv.get(r, c),
                        Broadcast::PerRowScalar => bv.get(r, 0),
                        Broadcast::PerRowVector => bv.get(0, c),
                    };
                    let idx = r * ac + c;
                    data[idx] = f(data[idx], y);
                }
            }
        }
        Ok(self.push(out, Op::Elementwise(a, b, kind, bcast)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, ElementwiseKind::Add)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, ElementwiseKind::Mul)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(
                "sub",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let bv = self.value(b);
        let mut out = self.value(a).clone();
        for (o, y) in out.as_mut_slice().iter_mut().zip(bv.as_slice()) {
            *o -= y;
        }
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let v = self.value(a).map(|x| x * k);
        self.push(v, Op::Scale(a, k))
    }

    pub fn squash(&mut self, a: NodeId, kind: Squash) -> NodeId {
        let v = match kind {
            Squash::Logistic => self.value(a).map(logistic),
            Squash::Tanh => self.value(a).map(f64::tanh),
        };
        self.push(v, Op::Squash(a, kind))
    }

    pub fn logistic(&mut self, a: NodeId) -> NodeId {
        self.squash(a, Squash::Logistic)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.squash(a, Squash::Tanh)
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::abs);
        self.push(v, Op::Abs(a))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    /// Elementwise binary entropy in nats. Values must lie in `[0, 1]`.
    pub fn binary_entropy(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a);
        if let Some(p) = v.as_slice().iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::contract(format!(
                "binary entropy needs p in [0,1], got {p}"
            )));
        }
        let v = v.map(binary_entropy);
        Ok(self.push(v, Op::BinaryEntropy(a)))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).sum();
        self.push(Matrix::from_raw(1, 1, vec![s]), Op::Sum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let m = v.sum() / v.len().max(1) as f64;
        self.push(Matrix::from_raw(1, 1, vec![m]), Op::Mean(a))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    /// Columns `start..start + width`.
    pub fn col_slice(&mut self, a: NodeId, start: usize, width: usize) -> Result<NodeId> {
        let v = self.value(a);
        if start + width > v.cols() {
            return Err(Error::dim(
                "col_slice",
                format!("{}..{} of {} columns", start, start + width, v.cols()),
            ));
        }
        let mut out = Vec::with_capacity(v.rows() * width);
        for r in 0..v.rows() {
            out.extend_from_slice(&v.row(r)[start..start + width]);
        }
        let m = Matrix::from_raw(v.rows(), width, out);
        Ok(self.push(m, Op::ColSlice(a, start)))
    }

    pub fn row(&mut self, a: NodeId, r: usize) -> Result<NodeId> {
        let v = self.value(a);
        if r >= v.rows() {
            return Err(Error::dim("row", format!("row {r} of {}", v.rows())));
        }
        let m = Matrix::row_vector(v.row(r));
        Ok(self.push(m, Op::Row(a, r)))
    }

    pub fn hconcat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return Err(Error::dim("hconcat", "no operands"));
        };
        let rows = self.shape(first).0;
        if parts.iter().any(|&p| self.shape(p).0 != rows) {
            return Err(Error::dim("hconcat", "row counts differ"));
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        let m = Matrix::from_raw(rows, cols, out);
        Ok(self.push(m, Op::HConcat(parts.to_vec())))
    }

    pub fn vstack(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return Err(Error::dim("vstack", "no operands"));
        };
        let cols = self.shape(first).1;
        if parts.iter().any(|&p| self.shape(p).1 != cols) {
            return Err(Error::dim("vstack", "column counts differ"));
        }
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            out.extend_from_slice(self.value(p).as_slice());
            rows += self.shape(p).0;
        }
        let m = Matrix::from_raw(rows, cols, out);
        Ok(self.push(m, Op::VStack(parts.to_vec())))
    }

    /// Scales each row to unit L2 norm; all-zero rows stay zero.
    pub fn normalize_rows(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let mut out = v.clone();
        let cols = v.cols();
        for (r, row) in out.as_mut_slice().chunks_mut(cols.max(1)).enumerate() {
            let norm = row_norm(v.row(r));
            if norm > 0.0 {
                row.iter_mut().for_each(|x| *x /= norm);
            }
        }
        self.push(out, Op::NormalizeRows(a))
    }

    /// Reverse-mode sweep from a scalar `loss`, adding into each node's
    /// accumulated gradient.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::contract(format!(
                "backward needs a 1x1 loss, got {:?}",
                self.shape(loss)
            )));
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            self.propagate(i, &g, &mut adj);
            self.nodes[i].grad.add_assign(&g);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Matrix, adj: &mut [Option<Matrix>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                accumulate(adj, *a, matmul_raw(g, &bv.transpose()));
                accumulate(adj, *b, matmul_raw(&av.transpose(), g));
            }
            Op::Elementwise(a, b, kind, bcast) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let (rows, cols) = av.shape();
                let b_at = |r: usize, c: usize| match bcast {
                    Broadcast::Same => bv.get(r, c),
                    Broadcast::PerRowScalar => bv.get(r, 0),
                    Broadcast::PerRowVector => bv.get(0, c),
                };
                let mut ga = Matrix::zeros(rows, cols);
                let mut gb = Matrix::zeros(bv.rows(), bv.cols());
                for r in 0..rows {
                    for c in 0..cols {
                        let up = g.get(r, c);
                        let (da, db) = match kind {
                            ElementwiseKind::Add => (up, up),
                            ElementwiseKind::Mul => (up * b_at(r, c), up * av.get(r, c)),
                        };
                        ga.set(r, c, da);
                        let (br, bc) = match bcast {
                            Broadcast::Same => (r, c),
                            Broadcast::PerRowScalar => (r, 0),
                            Broadcast::PerRowVector => (0, c),
                        };
                        gb.set(br, bc, gb.get(br, bc) + db);
                    }
                }
                accumulate(adj, *a, ga);
                accumulate(adj, *b, gb);
            }
            Op::Sub(a, b) => {
                accumulate(adj, *a, g.clone());
                accumulate(adj, *b, g.map(|x| -x));
            }
            Op::Scale(a, k) => accumulate(adj, *a, g.map(|x| x * k)),
            Op::Squash(a, kind) => {
                let d = zip_map(g, out, |up, y| match kind {
                    Squash::Logistic => up * y * (1.0 - y),
                    Squash::Tanh => up * (1.0 - y * y),
                });
                accumulate(adj, *a, d);
            }
            Op::Abs(a) => {
                let d = zip_map(g, self.value(*a), |up, x| up * sign(x));
                accumulate(adj, *a, d);
            }
            Op::Square(a) => {
                let d = zip_map(g, self.value(*a), |up, x| 2.0 * up * x);
                accumulate(adj, *a, d);
            }
            Op::BinaryEntropy(a) => {
                let d = zip_map(g, self.value(*a), |up, p| up * binary_entropy_slope(p));
                accumulate(adj, *a, d);
            }
            Op::Sum(a) => {
                let (r, c) = self.shape(*a);
                accumulate(adj, *a, Matrix::filled(r, c, g.get(0, 0)));
            }
            Op::Mean(a) => {
                let (r, c) = self.shape(*a);
                let n = (r * c).max(1) as f64;
                accumulate(adj, *a, Matrix::filled(r, c, g.get(0, 0) / n));
            }
            Op::Transpose(a) => accumulate(adj, *a, g.transpose()),
            Op::ColSlice(a, start) => {
                let (r, c) = self.shape(*a);
                let mut d = Matrix::zeros(r, c);
                for row in 0..r {
                    for col in 0..g.cols() {
                        d.set(row, start + col, g.get(row, col));
                    }
                }
                accumulate(adj, *a, d);
            }
            Op::Row(a, r) => {
                let (rows, cols) = self.shape(*a);
                let mut d = Matrix::zeros(rows, cols);
                d.as_mut_slice()[r * cols..(r + 1) * cols].copy_from_slice(g.as_slice());
                accumulate(adj, *a, d);
            }
            Op::HConcat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (r, c) = self.shape(p);
                    let mut d = Vec::with_capacity(r * c);
                    for row in 0..r {
                        d.extend_from_slice(&g.row(row)[offset..offset + c]);
                    }
                    accumulate(adj, p, Matrix::from_raw(r, c, d));
                    offset += c;
                }
            }
            Op::VStack(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (r, c) = self.shape(p);
                    let d = g.as_slice()[offset * c..(offset + r) * c].to_vec();
                    accumulate(adj, p, Matrix::from_raw(r, c, d));
                    offset += r;
                }
            }
            Op::NormalizeRows(a) => {
                let x = self.value(*a);
                let cols = x.cols();
                let mut d = Matrix::zeros(x.rows(), cols);
                for r in 0..x.rows() {
                    let norm = row_norm(x.row(r));
                    if norm == 0.0 {
                        continue;
                    }
                    let y = out.row(r);
                    let gy = g.row(r);
                    let proj: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
                    for c in 0..cols {
                        d.set(r, c, (gy[c] - y[c] * proj) / norm);
                    }
                }
                accumulate(adj, *a, d);
            }
        }
    }
}

fn accumulate(adj: &mut [Option<Matrix>], id: NodeId, g: Matrix) {
    match &mut adj[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(&x, &y)| f(x, y)).collect();
    Matrix::from_raw(a.rows(), a.cols(), data)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn row_norm(row: &[f64]) -> f64 {
    row.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Numerically stable logistic function.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-p ln p - (1-p) ln(1-p)`, with `0 ln 0 = 0` at the endpoints and `p`
/// clamped to `[ENTROPY_CLAMP, 1 - ENTROPY_CLAMP]` everywhere else.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    let p = p.clamp(ENTROPY_CLAMP, 1.0 - ENTROPY_CLAMP);
    -p * p.ln() - (1.0 - p) * (1.0 - p).ln()
}

fn binary_entropy_slope(p: f64) -> f64 {
    if p <= ENTROPY_CLAMP || p >= 1.0 - ENTROPY_CLAMP {
        return 0.0;
    }
    ((1.0 - p) / p).ln()
}
