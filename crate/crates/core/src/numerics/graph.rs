//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order and the backward pass is a single reverse sweep.
//! Leaves are either parameters (gradients tracked) or constants. A node
//! tracks gradients when any input does; [`Graph::stop_gradient`] cuts that
//! chain while passing the value through unchanged.

use crate::error::{Result, TrustError};
use crate::numerics::Matrix;

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Param,
    Constant,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Log(NodeId),
    RowSoftmax(NodeId),
    RowLogSoftmax(NodeId),
    L2NormalizeRows(NodeId),
    GatherRows(NodeId, Vec<usize>),
    Transpose(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    RowSum(NodeId),
    /// Per-row `log Σ_j w_ij exp(x_ij)` with constant non-negative weights.
    WeightedLogSumExp(NodeId, Matrix),
    StopGradient,
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Param => "param",
            Op::Constant => "constant",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Tanh(..) => "tanh",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::RowSoftmax(..) => "row_softmax",
            Op::RowLogSoftmax(..) => "row_log_softmax",
            Op::L2NormalizeRows(..) => "l2_normalize_rows",
            Op::GatherRows(..) => "gather_rows",
            Op::Transpose(..) => "transpose",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::RowSum(..) => "row_sum",
            Op::WeightedLogSumExp(..) => "weighted_log_sum_exp",
            Op::StopGradient => "stop_gradient",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Matrix,
    tracks_grad: bool,
}

/// Recorded computation.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar output with respect to every gradient-tracking node.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient for `id`, or `None` when the node does not track gradients
    /// or the output does not depend on it.
    pub fn get(&self, id: NodeId) -> Option<&Matrix> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient for `id`, materialising zeros of the given shape when absent.
    pub fn get_or_zeros(&self, id: NodeId, rows: usize, cols: usize) -> Matrix {
        self.get(id).cloned().unwrap_or_else(|| Matrix::zeros(rows, cols))
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

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        debug_assert!(v.is_scalar());
        v.get(0, 0)
    }

    pub fn tracks_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].tracks_grad
    }

    fn push(&mut self, op: Op, value: Matrix) -> Result<NodeId> {
        value.ensure_finite(op.name())?;
        let tracks_grad = match &op {
            Op::Param => true,
            Op::Constant | Op::StopGradient => false,
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddRow(a, b) => {
                self.tracks_grad(*a) || self.tracks_grad(*b)
            }
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Tanh(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::RowSoftmax(a)
            | Op::RowLogSoftmax(a)
            | Op::L2NormalizeRows(a)
            | Op::GatherRows(a, _)
            | Op::Transpose(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::RowSum(a)
            | Op::WeightedLogSumExp(a, _) => self.tracks_grad(*a),
        };
        self.nodes.push(Node {
            op,
            value,
            tracks_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Param, value).expect("matrices are finite by construction")
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Constant, value).expect("matrices are finite by construction")
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        self.push(Op::MatMul(a, b), v)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).sub(self.value(b))?;
        self.push(Op::Sub(a, b), v)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).hadamard(self.value(b))?;
        self.push(Op::Mul(a, b), v)
    }

    /// Broadcast-adds a 1×cols row node to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let v = self.value(a).add_row(self.value(row))?;
        self.push(Op::AddRow(a, row), v)
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> Result<NodeId> {
        let v = self.value(a).scale(s);
        self.push(Op::Scale(a, s), v)
    }

    pub fn add_scalar(&mut self, a: NodeId, s: f64) -> Result<NodeId> {
        let v = self.value(a).map(|x| x + s);
        self.push(Op::AddScalar(a), v)
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(f64::exp);
        self.push(Op::Exp(a), v)
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(f64::ln);
        self.push(Op::Log(a), v)
    }

    pub fn row_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).row_softmax();
        self.push(Op::RowSoftmax(a), v)
    }

    pub fn row_log_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).row_log_softmax();
        self.push(Op::RowLogSoftmax(a), v)
    }

    pub fn l2_normalize_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).l2_normalize_rows()?;
        self.push(Op::L2NormalizeRows(a), v)
    }

    pub fn gather_rows(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId> {
        let v = self.value(a).gather_rows(indices)?;
        self.push(Op::GatherRows(a, indices.to_vec()), v)
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).transpose();
        self.push(Op::Transpose(a), v)
    }

    /// Sum of all entries, as a 1×1 node.
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let v = Matrix::scalar(self.value(a).sum());
        self.push(Op::Sum(a), v)
    }

    /// Mean of all entries, as a 1×1 node.
    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let m = self.value(a);
        if m.is_empty() {
            return Err(TrustError::shape("mean", "empty input"));
        }
        let v = Matrix::scalar(m.sum() / m.len() as f64);
        self.push(Op::Mean(a), v)
    }

    /// Per-row sums, as a rows×1 node.
    pub fn row_sum(&mut self, a: NodeId) -> Result<NodeId> {
        let m = self.value(a);
        let v = Matrix::from_raw(m.rows(), 1, m.row_sums());
        self.push(Op::RowSum(a), v)
    }

    /// Per-row `log Σ_j weights[i][j] · exp(a[i][j])`, stabilised by the
    /// maximum over entries with positive weight. `weights` must be
    /// non-negative, shaped like `a`, with at least one positive entry per row.
    pub fn weighted_log_sum_exp(&mut self, a: NodeId, weights: &Matrix) -> Result<NodeId> {
        let x = self.value(a);
        if x.shape() != weights.shape() {
            return Err(TrustError::shape(
                "weighted_log_sum_exp",
                format!("input {:?} vs weights {:?}", x.shape(), weights.shape()),
            ));
        }
        if weights.as_slice().iter().any(|&w| w < 0.0) {
            return Err(TrustError::InvalidArgument(
                "weighted_log_sum_exp weights must be non-negative".into(),
            ));
        }
        let mut out = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let (xr, wr) = (x.row(r), weights.row(r));
            let max = xr
                .iter()
                .zip(wr)
                .filter(|(_, &w)| w > 0.0)
                .map(|(&v, _)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(TrustError::Degenerate(format!(
                    "weighted_log_sum_exp row {r} has no positive weight"
                )));
            }
            let total: f64 = xr.iter().zip(wr).map(|(&v, &w)| w * (v - max).exp()).sum();
            out.push(max + total.ln());
        }
        let v = Matrix::from_raw(x.rows(), 1, out);
        self.push(Op::WeightedLogSumExp(a, weights.clone()), v)
    }

    /// Identity on values; blocks gradient flow.
    pub fn stop_gradient(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).clone();
        self.push(Op::StopGradient, v).expect("value already finite")
    }

    /// Reverse sweep from a 1×1 output node.
    pub fn backward(&self, output: NodeId) -> Result<Gradients> {
        let out_value = self.value(output);
        if !out_value.is_scalar() {
            return Err(TrustError::shape(
                "backward",
                format!("output must be 1x1, got {}x{}", out_value.rows(), out_value.cols()),
            ));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        if !self.tracks_grad(output) {
            return Ok(Gradients { grads });
        }
        grads[output.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracks_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], id: NodeId, g: Matrix) {
        if !self.tracks_grad(id) {
            return;
        }
        match &mut grads[id.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        let y = &node.value;
        match &node.op {
            Op::Param | Op::Constant | Op::StopGradient => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.tracks_grad(*a) {
                    self.accumulate(grads, *a, g.matmul(&vb.transpose())?);
                }
                if self.tracks_grad(*b) {
                    self.accumulate(grads, *b, va.transpose().matmul(g)?);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                if self.tracks_grad(*a) {
                    self.accumulate(grads, *a, g.hadamard(self.value(*b))?);
                }
                if self.tracks_grad(*b) {
                    self.accumulate(grads, *b, g.hadamard(self.value(*a))?);
                }
            }
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, g.clone());
                if self.tracks_grad(*row) {
                    self.accumulate(grads, *row, g.col_sums());
                }
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, g.scale(*s)),
            Op::AddScalar(a) => self.accumulate(grads, *a, g.clone()),
            Op::Tanh(a) => {
                let d = g.zip_map(y, "tanh_backward", |gv, yv| gv * (1.0 - yv * yv))?;
                self.accumulate(grads, *a, d);
            }
            Op::Exp(a) => self.accumulate(grads, *a, g.hadamard(y)?),
            Op::Log(a) => {
                let d = g.zip_map(self.value(*a), "log_backward", |gv, xv| gv / xv)?;
                self.accumulate(grads, *a, d);
            }
            Op::RowSoftmax(a) => {
                let mut d = Vec::with_capacity(y.len());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    d.extend(yr.iter().zip(gr).map(|(p, q)| p * (q - dot)));
                }
                self.accumulate(grads, *a, Matrix::from_raw(y.rows(), y.cols(), d));
            }
            Op::RowLogSoftmax(a) => {
                let mut d = Vec::with_capacity(y.len());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let total: f64 = gr.iter().sum();
                    d.extend(yr.iter().zip(gr).map(|(ly, q)| q - ly.exp() * total));
                }
                self.accumulate(grads, *a, Matrix::from_raw(y.rows(), y.cols(), d));
            }
            Op::L2NormalizeRows(a) => {
                let norms = self.value(*a).row_norms();
                let mut d = Vec::with_capacity(y.len());
                for (r, n) in norms.iter().enumerate() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    d.extend(yr.iter().zip(gr).map(|(p, q)| (q - p * dot) / n));
                }
                self.accumulate(grads, *a, Matrix::from_raw(y.rows(), y.cols(), d));
            }
            Op::GatherRows(a, indices) => {
                let src = self.value(*a);
                let mut d = Matrix::zeros(src.rows(), src.cols());
                let cols = src.cols();
                for (k, &i) in indices.iter().enumerate() {
                    let dst = &mut d.as_mut_slice()[i * cols..(i + 1) * cols];
                    for (o, v) in dst.iter_mut().zip(g.row(k)) {
                        *o += v;
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::Transpose(a) => self.accumulate(grads, *a, g.transpose()),
            Op::Sum(a) => {
                let (r, c) = self.value(*a).shape();
                self.accumulate(grads, *a, Matrix::from_raw(r, c, vec![g.get(0, 0); r * c]));
            }
            Op::Mean(a) => {
                let (r, c) = self.value(*a).shape();
                let v = g.get(0, 0) / (r * c) as f64;
                self.accumulate(grads, *a, Matrix::from_raw(r, c, vec![v; r * c]));
            }
            Op::RowSum(a) => {
                let (r, c) = self.value(*a).shape();
                let mut d = Vec::with_capacity(r * c);
                for i in 0..r {
                    d.extend(std::iter::repeat_n(g.get(i, 0), c));
                }
                self.accumulate(grads, *a, Matrix::from_raw(r, c, d));
            }
            Op::WeightedLogSumExp(a, w) => {
                let x = self.value(*a);
                let mut d = Vec::with_capacity(x.len());
                for r in 0..x.rows() {
                    let lse = y.get(r, 0);
                    let gr = g.get(r, 0);
                    d.extend(
                        x.row(r)
                            .iter()
                            .zip(w.row(r))
                            .map(|(&xv, &wv)| if wv > 0.0 { gr * wv * (xv - lse).exp() } else { 0.0 }),
                    );
                }
                self.accumulate(grads, *a, Matrix::from_raw(x.rows(), x.cols(), d));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let mut g = Graph::new();
        let x = g.param(Matrix::row_vector(&[1.0, 2.0]).unwrap());
        let sq = g.mul(x, x).unwrap();
        let out = g.sum(sq).unwrap();
        let grads = g.backward(out).unwrap();
        assert_eq!(grads.get(x).unwrap().as_slice(), &[2.0, 4.0]);
    }

    #[test]
    fn log_softmax_jacobian_at_origin() {
        let mut g = Graph::new();
        let x = g.param(Matrix::row_vector(&[0.0, 0.0]).unwrap());
        let sm = g.row_softmax(x).unwrap();
        let l = g.log(sm).unwrap();
        let pick = g.constant(Matrix::row_vector(&[1.0, 0.0]).unwrap());
        let picked = g.mul(l, pick).unwrap();
        let out = g.sum(picked).unwrap();
        let grads = g.backward(out).unwrap();
        let d = grads.get(x).unwrap();
        assert!((d.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((d.get(0, 1) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn linear_map_recovers_coefficients() {
        let c = Matrix::from_rows(&[vec![1.5, -2.0, 0.25], vec![3.0, 0.0, -7.0]]).unwrap();
        let mut g = Graph::new();
        let x = g.param(Matrix::zeros(2, 3));
        let k = g.constant(c.clone());
        let prod = g.mul(k, x).unwrap();
        let out = g.sum(prod).unwrap();
        let grads = g.backward(out).unwrap();
        assert_eq!(grads.get(x).unwrap(), &c);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut g = Graph::new();
        let x = g.param(Matrix::zeros(2, 2));
        assert!(matches!(g.backward(x), Err(TrustError::Shape { .. })));
    }

    #[test]
    fn stop_gradient_blocks_flow() {
        let mut g = Graph::new();
        let x = g.param(Matrix::row_vector(&[3.0]).unwrap());
        let stopped = g.stop_gradient(x);
        let prod = g.mul(x, stopped).unwrap();
        let out = g.sum(prod).unwrap();
        assert_eq!(g.scalar(out), 9.0);
        let grads = g.backward(out).unwrap();
        // d/dx (x · stop(x)) = stop(x) = 3, not 2x = 6
        assert_eq!(grads.get(x).unwrap().get(0, 0), 3.0);
        assert!(grads.get(stopped).is_none());
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::new();
        let c = g.constant(Matrix::row_vector(&[1.0, 2.0]).unwrap());
        let x = g.param(Matrix::row_vector(&[1.0, 1.0]).unwrap());
        let p = g.mul(c, x).unwrap();
        let out = g.sum(p).unwrap();
        let grads = g.backward(out).unwrap();
        assert!(grads.get(c).is_none());
        assert!(grads.get(x).is_some());
    }

    #[test]
    fn non_finite_forward_is_an_error() {
        let mut g = Graph::new();
        let x = g.param(Matrix::row_vector(&[0.0]).unwrap());
        assert!(matches!(g.log(x), Err(TrustError::NonFinite { op: "log" })));
        let big = g.param(Matrix::row_vector(&[1000.0]).unwrap());
        assert!(matches!(g.exp(big), Err(TrustError::NonFinite { .. })));
    }

    #[test]
    fn weighted_lse_rejects_empty_rows() {
        let mut g = Graph::new();
        let x = g.param(Matrix::zeros(2, 2));
        let w = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(g.weighted_log_sum_exp(x, &w), Err(TrustError::Degenerate(_))));
    }

    #[test]
    fn weighted_lse_matches_direct_sum() {
        let mut g = Graph::new();
        let x = g.param(Matrix::from_rows(&[vec![0.3, -1.2, 2.0]]).unwrap());
        let w = Matrix::from_rows(&[vec![0.5, 0.0, 2.0]]).unwrap();
        let out = g.weighted_log_sum_exp(x, &w).unwrap();
        let expected = (0.5 * 0.3f64.exp() + 2.0 * 2.0f64.exp()).ln();
        assert!((g.value(out).get(0, 0) - expected).abs() < 1e-14);
    }
}
