//! Reverse-mode autodiff over dense 2-D arrays.
//!
//! Nodes live on an append-only tape; construction order is a
//! topological order, so the backward pass is a single reverse sweep
//! that visits each node exactly once. Scalars are 1x1 arrays.

use std::sync::Arc;

use ndarray::{Array2, Axis, Zip};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op<F: Scalar> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    /// Broadcast binary ops: rhs dims are each 1 or equal to lhs.
    BAdd(usize, usize),
    BSub(usize, usize),
    BMul(usize, usize),
    BDiv(usize, usize),
    MatMul(usize, usize),
    /// `a @ b.T`
    MatMulT(usize, usize),
    Relu(usize),
    Exp(usize),
    Ln(usize),
    Sqrt(usize),
    Square(usize),
    Neg(usize),
    Scale(usize, F),
    AddConst(usize, F),
    SumAll(usize),
    MeanAll(usize),
    SumAxis0(usize),
    MeanAxis0(usize),
    SumAxis1(usize),
    GatherRows(usize, Arc<Vec<usize>>),
    ConcatCols(usize, usize),
    VStack(Vec<usize>),
    /// Directed-edge aggregation: out[dst] += in[src] per edge.
    EdgeSum(usize, Arc<Vec<(usize, usize)>>),
    /// Per-segment mean of rows; membership maps row -> segment.
    SegmentMean(usize, Arc<Vec<usize>>, usize),
}

struct Node<F: Scalar> {
    data: Array2<F>,
    grad: Array2<F>,
    op: Op<F>,
}

/// Computation tape. One tape per forward/backward pass.
pub struct Tape<F: Scalar> {
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

fn bq<F: Scalar>(m: &Array2<F>, i: usize, j: usize) -> F {
    let (r, c) = m.dim();
    m[[if r == 1 { 0 } else { i }, if c == 1 { 0 } else { j }]]
}

/// Sum `g` down to `shape` over the axes that were broadcast.
fn reduce_to<F: Scalar>(g: &Array2<F>, shape: (usize, usize)) -> Array2<F> {
    let mut out = Array2::zeros(shape);
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let ti = if shape.0 == 1 { 0 } else { i };
            let tj = if shape.1 == 1 { 0 } else { j };
            out[[ti, tj]] += g[[i, j]];
        }
    }
    out
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, data: Array2<F>, op: Op<F>) -> Var {
        let grad = Array2::zeros(data.dim());
        self.nodes.push(Node { data, grad, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, data: Array2<F>) -> Var {
        self.push(data, Op::Leaf)
    }

    pub fn scalar(&mut self, value: F) -> Var {
        self.leaf(Array2::from_elem((1, 1), value))
    }

    pub fn data(&self, v: Var) -> &Array2<F> {
        &self.nodes[v.0].data
    }

    pub fn grad(&self, v: Var) -> &Array2<F> {
        &self.nodes[v.0].grad
    }

    /// Scalar value of a 1x1 node.
    pub fn value(&self, v: Var) -> F {
        debug_assert_eq!(self.nodes[v.0].data.dim(), (1, 1));
        self.nodes[v.0].data[[0, 0]]
    }

    fn dim(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].data.dim()
    }

    fn same_shape(&self, a: Var, b: Var) {
        assert_eq!(self.dim(a), self.dim(b), "shape mismatch");
    }

    fn bcast_ok(&self, a: Var, b: Var) {
        let (ra, ca) = self.dim(a);
        let (rb, cb) = self.dim(b);
        assert!(
            (rb == 1 || rb == ra) && (cb == 1 || cb == ca),
            "broadcast mismatch: {:?} vs {:?}",
            (ra, ca),
            (rb, cb)
        );
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b);
        let data = &self.nodes[a.0].data + &self.nodes[b.0].data;
        self.push(data, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b);
        let data = &self.nodes[a.0].data - &self.nodes[b.0].data;
        self.push(data, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b);
        let data = &self.nodes[a.0].data * &self.nodes[b.0].data;
        self.push(data, Op::Mul(a.0, b.0))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b);
        let data = &self.nodes[a.0].data / &self.nodes[b.0].data;
        self.push(data, Op::Div(a.0, b.0))
    }

    fn bcast_apply(&mut self, a: Var, b: Var, f: impl Fn(F, F) -> F) -> Array2<F> {
        self.bcast_ok(a, b);
        let (ra, ca) = self.dim(a);
        let mut data = Array2::zeros((ra, ca));
        for i in 0..ra {
            for j in 0..ca {
                data[[i, j]] = f(self.nodes[a.0].data[[i, j]], bq(&self.nodes[b.0].data, i, j));
            }
        }
        data
    }

    pub fn badd(&mut self, a: Var, b: Var) -> Var {
        let data = self.bcast_apply(a, b, |x, y| x + y);
        self.push(data, Op::BAdd(a.0, b.0))
    }

    pub fn bsub(&mut self, a: Var, b: Var) -> Var {
        let data = self.bcast_apply(a, b, |x, y| x - y);
        self.push(data, Op::BSub(a.0, b.0))
    }

    pub fn bmul(&mut self, a: Var, b: Var) -> Var {
        let data = self.bcast_apply(a, b, |x, y| x * y);
        self.push(data, Op::BMul(a.0, b.0))
    }

    pub fn bdiv(&mut self, a: Var, b: Var) -> Var {
        let data = self.bcast_apply(a, b, |x, y| x / y);
        self.push(data, Op::BDiv(a.0, b.0))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.dim(a).1, self.dim(b).0, "matmul inner dim mismatch");
        let data = self.nodes[a.0].data.dot(&self.nodes[b.0].data);
        self.push(data, Op::MatMul(a.0, b.0))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.dim(a).1, self.dim(b).1, "matmul_t inner dim mismatch");
        let data = self.nodes[a.0].data.dot(&self.nodes[b.0].data.t());
        self.push(data, Op::MatMulT(a.0, b.0))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let data = self.nodes[a.0].data.mapv(|x| if x > F::zero() { x } else { F::zero() });
        self.push(data, Op::Relu(a.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let data = self.nodes[a.0].data.mapv(|x| x.exp());
        self.push(data, Op::Exp(a.0))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let data = self.nodes[a.0].data.mapv(|x| x.ln());
        self.push(data, Op::Ln(a.0))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let data = self.nodes[a.0].data.mapv(|x| x.sqrt());
        self.push(data, Op::Sqrt(a.0))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let data = self.nodes[a.0].data.mapv(|x| x * x);
        self.push(data, Op::Square(a.0))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let data = self.nodes[a.0].data.mapv(|x| -x);
        self.push(data, Op::Neg(a.0))
    }

    pub fn scale(&mut self, a: Var, c: F) -> Var {
        let data = self.nodes[a.0].data.mapv(|x| x * c);
        self.push(data, Op::Scale(a.0, c))
    }

    pub fn add_const(&mut self, a: Var, c: F) -> Var {
        let data = self.nodes[a.0].data.mapv(|x| x + c);
        self.push(data, Op::AddConst(a.0, c))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].data.sum();
        self.push(Array2::from_elem((1, 1), s), Op::SumAll(a.0))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let (r, c) = self.dim(a);
        let s = self.nodes[a.0].data.sum() / F::from_count(r * c);
        self.push(Array2::from_elem((1, 1), s), Op::MeanAll(a.0))
    }

    /// Column sums: (r, c) -> (1, c).
    pub fn sum_axis0(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].data.sum_axis(Axis(0)).insert_axis(Axis(0));
        self.push(s, Op::SumAxis0(a.0))
    }

    /// Column means: (r, c) -> (1, c).
    pub fn mean_axis0(&mut self, a: Var) -> Var {
        let r = self.dim(a).0;
        let s = self
            .nodes[a.0]
            .data
            .sum_axis(Axis(0))
            .insert_axis(Axis(0))
            .mapv(|x| x / F::from_count(r));
        self.push(s, Op::MeanAxis0(a.0))
    }

    /// Row sums: (r, c) -> (r, 1).
    pub fn sum_axis1(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].data.sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(s, Op::SumAxis1(a.0))
    }

    pub fn gather_rows(&mut self, a: Var, rows: Arc<Vec<usize>>) -> Var {
        let c = self.dim(a).1;
        let mut data = Array2::zeros((rows.len(), c));
        for (k, &r) in rows.iter().enumerate() {
            data.row_mut(k).assign(&self.nodes[a.0].data.row(r));
        }
        self.push(data, Op::GatherRows(a.0, rows))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (ra, ca) = self.dim(a);
        let (rb, cb) = self.dim(b);
        assert_eq!(ra, rb, "concat_cols row mismatch");
        let mut data = Array2::zeros((ra, ca + cb));
        data.slice_mut(ndarray::s![.., ..ca]).assign(&self.nodes[a.0].data);
        data.slice_mut(ndarray::s![.., ca..]).assign(&self.nodes[b.0].data);
        self.push(data, Op::ConcatCols(a.0, b.0))
    }

    /// Stack same-width nodes vertically.
    pub fn vstack(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let c = self.dim(parts[0]).1;
        let rows: usize = parts.iter().map(|&v| self.dim(v).0).sum();
        let mut data = Array2::zeros((rows, c));
        let mut at = 0usize;
        for &v in parts {
            let r = self.dim(v).0;
            data.slice_mut(ndarray::s![at..at + r, ..]).assign(&self.nodes[v.0].data);
            at += r;
        }
        self.push(data, Op::VStack(parts.iter().map(|v| v.0).collect()))
    }

    /// In-neighbor sum along directed edges: out[dst] += in[src].
    pub fn edge_sum(&mut self, a: Var, edges: Arc<Vec<(usize, usize)>>) -> Var {
        let mut data = Array2::zeros(self.dim(a));
        for &(src, dst) in edges.iter() {
            let row = self.nodes[a.0].data.row(src).to_owned();
            data.row_mut(dst).zip_mut_with(&row, |o, &x| *o += x);
        }
        self.push(data, Op::EdgeSum(a.0, edges))
    }

    /// Mean of rows per segment: (n, c) -> (segments, c).
    pub fn segment_mean(&mut self, a: Var, membership: Arc<Vec<usize>>, segments: usize) -> Var {
        let (n, c) = self.dim(a);
        assert_eq!(n, membership.len(), "membership length mismatch");
        let mut counts = vec![F::zero(); segments];
        let mut data = Array2::zeros((segments, c));
        for (i, &s) in membership.iter().enumerate() {
            counts[s] += F::one();
            let row = self.nodes[a.0].data.row(i).to_owned();
            data.row_mut(s).zip_mut_with(&row, |o, &x| *o += x);
        }
        for (s, &count) in counts.iter().enumerate() {
            assert!(count > F::zero(), "empty segment {s}");
            data.row_mut(s).mapv_inplace(|x| x / count);
        }
        self.push(data, Op::SegmentMean(a.0, membership, segments))
    }

    /// Reverse sweep from `loss` (a 1x1 node), accumulating gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].data.dim() != (1, 1) {
            return Err(Error::InvalidConfig("backward target must be a scalar node".into()));
        }
        if !self.nodes[loss.0].data[[0, 0]].is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        for node in &mut self.nodes {
            node.grad.fill(F::zero());
        }
        self.nodes[loss.0].grad[[0, 0]] = F::one();

        for i in (0..=loss.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &rest[0];
            let g = &node.grad;
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    before[*a].grad.zip_mut_with(g, |o, &x| *o += x);
                    before[*b].grad.zip_mut_with(g, |o, &x| *o += x);
                }
                Op::Sub(a, b) => {
                    before[*a].grad.zip_mut_with(g, |o, &x| *o += x);
                    before[*b].grad.zip_mut_with(g, |o, &x| *o -= x);
                }
                Op::Mul(a, b) => {
                    if a == b {
                        let da = g * &before[*a].data.mapv(|x| x + x);
                        before[*a].grad.zip_mut_with(&da, |o, &x| *o += x);
                    } else {
                        let da = g * &before[*b].data;
                        let db = g * &before[*a].data;
                        before[*a].grad.zip_mut_with(&da, |o, &x| *o += x);
                        before[*b].grad.zip_mut_with(&db, |o, &x| *o += x);
                    }
                }
                Op::Div(a, b) => {
                    let da = g / &before[*b].data;
                    let db = Zip::from(g)
                        .and(&node.data)
                        .and(&before[*b].data)
                        .map_collect(|&gv, &out, &bv| -gv * out / bv);
                    before[*a].grad.zip_mut_with(&da, |o, &x| *o += x);
                    before[*b].grad.zip_mut_with(&db, |o, &x| *o += x);
                }
                Op::BAdd(a, b) => {
                    before[*a].grad.zip_mut_with(g, |o, &x| *o += x);
                    let db = reduce_to(g, before[*b].data.dim());
                    before[*b].grad.zip_mut_with(&db, |o, &x| *o += x);
                }
                Op::BSub(a, b) => {
                    before[*a].grad.zip_mut_with(g, |o, &x| *o += x);
                    let db = reduce_to(g, before[*b].data.dim());
                    before[*b].grad.zip_mut_with(&db, |o, &x| *o -= x);
                }
                Op::BMul(a, b) => {
                    let (r, c) = g.dim();
                    let mut da = Array2::zeros((r, c));
                    let mut full_db = Array2::zeros((r, c));
                    for i2 in 0..r {
                        for j2 in 0..c {
                            da[[i2, j2]] = g[[i2, j2]] * bq(&before[*b].data, i2, j2);
                            full_db[[i2, j2]] = g[[i2, j2]] * before[*a].data[[i2, j2]];
                        }
                    }
                    before[*a].grad.zip_mut_with(&da, |o, &x| *o += x);
                    let db = reduce_to(&full_db, before[*b].data.dim());
                    before[*b].grad.zip_mut_with(&db, |o, &x| *o += x);
                }
                Op::BDiv(a, b) => {
                    let (r, c) = g.dim();
                    let mut da = Array2::zeros((r, c));
                    let mut full_db = Array2::zeros((r, c));
                    for i2 in 0..r {
                        for j2 in 0..c {
                            let bv = bq(&before[*b].data, i2, j2);
                            da[[i2, j2]] = g[[i2, j2]] / bv;
                            full_db[[i2, j2]] = -g[[i2, j2]] * node.data[[i2, j2]] / bv;
                        }
                    }
                    before[*a].grad.zip_mut_with(&da, |o, &x| *o += x);
                    let db = reduce_to(&full_db, before[*b].data.dim());
                    before[*b].grad.zip_mut_with(&db, |o, &x| *o += x);
                }
                Op::MatMul(a, b) => {
                    let da = g.dot(&before[*b].data.t());
                    let db = before[*a].data.t().dot(g);
                    before[*a].grad.zip_mut_with(&da, |o, &x| *o += x);
                    before[*b].grad.zip_mut_with(&db, |o, &x| *o += x);
                }
                Op::MatMulT(a, b) => {
                    let da = g.dot(&before[*b].data);
                    let db = g.t().dot(&before[*a].data);
                    before[*a].grad.zip_mut_with(&da, |o, &x| *o += x);
                    before[*b].grad.zip_mut_with(&db, |o, &x| *o += x);
                }
                Op::Relu(a) => {
                    let da = Zip::from(g)
                        .and(&before[*a].data)
                        .map_collect(|&gv, &x| if x > F::zero() { gv } else { F::zero() });
                    before[*a].grad.zip_mut_with(&da, |o, &x| *o += x);
                }
                Op::Exp(a) => {
                    let da = g * &node.data;
                    before[*a].grad.zip_mut_with(&da, |o, &x| *o += x);
                }
                Op::Ln(a) => {
                    let da = g / &before[*a].data;
                    before[*a].grad.zip_mut_with(&da, |o, &x| *o += x);
                }
                Op::Sqrt(a) => {
                    let half = F::from_real(0.5);
                    let da = Zip::from(g).and(&node.data).map_collect(|&gv, &s| gv * half / s);
                    before[*a].grad.zip_mut_with(&da, |o, &x| *o += x);
                }
                Op::Square(a) => {
                    let two = F::from_real(2.0);
                    let da = Zip::from(g)
                        .and(&before[*a].data)
                        .map_collect(|&gv, &x| gv * two * x);
                    before[*a].grad.zip_mut_with(&da, |o, &x| *o += x);
                }
                Op::Neg(a) => {
                    before[*a].grad.zip_mut_with(g, |o, &x| *o -= x);
                }
                Op::Scale(a, cst) => {
                    let c = *cst;
                    before[*a].grad.zip_mut_with(g, |o, &x| *o += x * c);
                }
                Op::AddConst(a, _) => {
                    before[*a].grad.zip_mut_with(g, |o, &x| *o += x);
                }
                Op::SumAll(a) => {
                    let gv = g[[0, 0]];
                    before[*a].grad.mapv_inplace(|x| x + gv);
                }
                Op::MeanAll(a) => {
                    let (r, c) = before[*a].data.dim();
                    let gv = g[[0, 0]] / F::from_count(r * c);
                    before[*a].grad.mapv_inplace(|x| x + gv);
                }
                Op::SumAxis0(a) => {
                    let pa = &mut before[*a].grad;
                    for i2 in 0..pa.nrows() {
                        for j2 in 0..pa.ncols() {
                            pa[[i2, j2]] += g[[0, j2]];
                        }
                    }
                }
                Op::MeanAxis0(a) => {
                    let pa = &mut before[*a].grad;
                    let r = F::from_count(pa.nrows());
                    for i2 in 0..pa.nrows() {
                        for j2 in 0..pa.ncols() {
                            pa[[i2, j2]] += g[[0, j2]] / r;
                        }
                    }
                }
                Op::SumAxis1(a) => {
                    let pa = &mut before[*a].grad;
                    for i2 in 0..pa.nrows() {
                        for j2 in 0..pa.ncols() {
                            pa[[i2, j2]] += g[[i2, 0]];
                        }
                    }
                }
                Op::GatherRows(a, rows) => {
                    let pa = &mut before[*a].grad;
                    for (k, &r) in rows.iter().enumerate() {
                        for j2 in 0..pa.ncols() {
                            pa[[r, j2]] += g[[k, j2]];
                        }
                    }
                }
                Op::ConcatCols(a, b) => {
                    let ca = before[*a].data.ncols();
                    let da = g.slice(ndarray::s![.., ..ca]);
                    let db = g.slice(ndarray::s![.., ca..]);
                    before[*a].grad.zip_mut_with(&da, |o, &x| *o += x);
                    before[*b].grad.zip_mut_with(&db, |o, &x| *o += x);
                }
                Op::VStack(parts) => {
                    let mut at = 0usize;
                    for &p in parts {
                        let r = before[p].data.nrows();
                        let gp = g.slice(ndarray::s![at..at + r, ..]);
                        before[p].grad.zip_mut_with(&gp, |o, &x| *o += x);
                        at += r;
                    }
                }
                Op::EdgeSum(a, edges) => {
                    let pa = &mut before[*a].grad;
                    for &(src, dst) in edges.iter() {
                        for j2 in 0..pa.ncols() {
                            pa[[src, j2]] += g[[dst, j2]];
                        }
                    }
                }
                Op::SegmentMean(a, membership, segments) => {
                    let mut counts = vec![F::zero(); *segments];
                    for &s in membership.iter() {
                        counts[s] += F::one();
                    }
                    let pa = &mut before[*a].grad;
                    for (i2, &s) in membership.iter().enumerate() {
                        for j2 in 0..pa.ncols() {
                            pa[[i2, j2]] += g[[s, j2]] / counts[s];
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
