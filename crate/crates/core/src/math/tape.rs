//! Reverse-mode gradient tape over dense arrays.
//!
//! A [`Tape`] records a computation as a flat list of nodes; calling
//! [`Tape::backward`] on a scalar node returns exact gradients for every
//! recorded node. Tapes are single-owner and never mutated by backward, so
//! evaluating the same tape twice yields identical gradients.

use crate::math::array::{matmul, matmul_nt, matmul_tn};
use crate::math::{sigmoid, softplus, DenseArray, MathError, Real, PI, STD_FLOOR};

pub type NodeId = usize;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Constant,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    BroadcastCol(NodeId),
    AddScalar(NodeId),
    Scale(NodeId, Real),
    Neg(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Elu(NodeId),
    Relu(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Sqrt(NodeId),
    Square(NodeId),
    Softplus(NodeId),
    Sum(NodeId),
    RowMean(NodeId),
    ConcatCols(Vec<NodeId>),
    SliceCols(NodeId, usize, usize),
    SoftmaxRows(NodeId),
    StraightThrough(NodeId),
    Reshape(NodeId),
}

struct Node {
    op: Op,
    value: DenseArray,
}

pub struct Tape {
    nodes: Vec<Node>,
}

pub struct Gradients {
    grads: Vec<Option<DenseArray>>,
}

impl Gradients {
    /// Gradient of the recorded scalar w.r.t. node `id` (zeros if the node
    /// does not influence the output).
    pub fn wrt(&self, tape: &Tape, id: NodeId) -> DenseArray {
        match &self.grads[id] {
            Some(g) => g.clone(),
            None => DenseArray::zeros(tape.value(id).shape().to_vec()),
        }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &DenseArray {
        &self.nodes[id].value
    }

    fn push(&mut self, op: Op, value: DenseArray) -> NodeId {
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    /// Gradient-tracked input (a parameter).
    pub fn leaf(&mut self, value: DenseArray) -> NodeId {
        self.push(Op::Leaf, value)
    }

    /// Input with no gradient tracking (data, targets, noise draws).
    pub fn constant(&mut self, value: DenseArray) -> NodeId {
        self.push(Op::Constant, value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.zip(&self.nodes[b].value, |x, y| x + y);
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.zip(&self.nodes[b].value, |x, y| x - y);
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.zip(&self.nodes[b].value, |x, y| x * y);
        self.push(Op::Mul(a, b), v)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.zip(&self.nodes[b].value, |x, y| x / y);
        self.push(Op::Div(a, b), v)
    }

    /// `a: n×k` times `b: k×m`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = matmul(&self.nodes[a].value, &self.nodes[b].value);
        self.push(Op::MatMul(a, b), v)
    }

    /// Broadcast-add a row vector (`[m]` or `[1×m]`) to every row of `a: n×m`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let av = &self.nodes[a].value;
        let rv = &self.nodes[row].value;
        let (n, m) = av.dims2();
        assert_eq!(rv.len(), m, "add_row width mismatch");
        let mut out = av.values().to_vec();
        for i in 0..n {
            for j in 0..m {
                out[i * m + j] += rv.values()[j];
            }
        }
        self.push(Op::AddRow(a, row), DenseArray::matrix(n, m, out))
    }

    /// Broadcast a column `a: n×1` across `m` columns.
    pub fn broadcast_col(&mut self, a: NodeId, m: usize) -> NodeId {
        let av = &self.nodes[a].value;
        let (n, one) = av.dims2();
        assert_eq!(one, 1, "broadcast_col expects n×1");
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let v = av.values()[i];
            for j in 0..m {
                out[i * m + j] = v;
            }
        }
        self.push(Op::BroadcastCol(a), DenseArray::matrix(n, m, out))
    }

    pub fn add_scalar(&mut self, a: NodeId, c: Real) -> NodeId {
        let v = self.nodes[a].value.map(|x| x + c);
        self.push(Op::AddScalar(a), v)
    }

    pub fn scale(&mut self, a: NodeId, c: Real) -> NodeId {
        let v = self.nodes[a].value.map(|x| x * c);
        self.push(Op::Scale(a, c), v)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(|x| -x);
        self.push(Op::Neg(a), v)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(|x| x.tanh());
        self.push(Op::Tanh(a), v)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    pub fn elu(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(|x| if x > 0.0 { x } else { x.exp() - 1.0 });
        self.push(Op::Elu(a), v)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(|x| x.max(0.0));
        self.push(Op::Relu(a), v)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(|x| x.exp());
        self.push(Op::Exp(a), v)
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(|x| x.ln());
        self.push(Op::Ln(a), v)
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(|x| x.sqrt());
        self.push(Op::Sqrt(a), v)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(|x| x * x);
        self.push(Op::Square(a), v)
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(softplus);
        self.push(Op::Softplus(a), v)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = DenseArray::scalar(self.nodes[a].value.sum());
        self.push(Op::Sum(a), v)
    }

    /// Row means of `a: n×m`, producing `n×1`.
    pub fn row_mean(&mut self, a: NodeId) -> NodeId {
        let av = &self.nodes[a].value;
        let (n, m) = av.dims2();
        let mut out = vec![0.0; n];
        for i in 0..n {
            out[i] = av.row(i).iter().sum::<Real>() / m as Real;
        }
        self.push(Op::RowMean(a), DenseArray::matrix(n, 1, out))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let n = self.nodes[parts[0]].value.rows();
        let total: usize = parts.iter().map(|&p| self.nodes[p].value.cols()).sum();
        let mut out = vec![0.0; n * total];
        let mut offset = 0;
        for &p in parts {
            let pv = &self.nodes[p].value;
            assert_eq!(pv.rows(), n, "concat_cols row mismatch");
            let c = pv.cols();
            for i in 0..n {
                out[i * total + offset..i * total + offset + c].copy_from_slice(pv.row(i));
            }
            offset += c;
        }
        self.push(Op::ConcatCols(parts.to_vec()), DenseArray::matrix(n, total, out))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> NodeId {
        let av = &self.nodes[a].value;
        let (n, m) = av.dims2();
        assert!(start < end && end <= m, "slice_cols bounds");
        let w = end - start;
        let mut out = vec![0.0; n * w];
        for i in 0..n {
            out[i * w..(i + 1) * w].copy_from_slice(&av.row(i)[start..end]);
        }
        self.push(Op::SliceCols(a, start, end), DenseArray::matrix(n, w, out))
    }

    /// Row-wise softmax of `a: n×m`.
    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let av = &self.nodes[a].value;
        let (n, m) = av.dims2();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let row = av.row(i);
            let max = row.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
            let mut sum = 0.0;
            for j in 0..m {
                let e = (row[j] - max).exp();
                out[i * m + j] = e;
                sum += e;
            }
            for j in 0..m {
                out[i * m + j] /= sum;
            }
        }
        self.push(Op::SoftmaxRows(a), DenseArray::matrix(n, m, out))
    }

    /// Straight-through sample: the forward value is the provided one-hot
    /// draw; the backward pass routes the incoming gradient unchanged into
    /// the probabilities node.
    pub fn straight_through(&mut self, probs: NodeId, one_hot: DenseArray) -> NodeId {
        assert_eq!(
            self.nodes[probs].value.shape(),
            one_hot.shape(),
            "straight_through shape mismatch"
        );
        self.push(Op::StraightThrough(probs), one_hot)
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> NodeId {
        let v = self.nodes[a].value.reshaped(shape);
        self.push(Op::Reshape(a), v)
    }

    // ---- composite builders -------------------------------------------------

    /// `softplus(raw) + STD_FLOOR`, the positive transform for scale heads.
    pub fn positive_transform(&mut self, raw: NodeId) -> NodeId {
        let sp = self.softplus(raw);
        self.add_scalar(sp, STD_FLOOR)
    }

    /// Sum over all entries of the Gaussian negative log likelihood with
    /// unit scale: `Σ ½(x−μ)² + ½ ln 2π` per entry.
    pub fn gaussian_nll_unit_std(&mut self, mean: NodeId, target: NodeId) -> NodeId {
        let n = self.nodes[mean].value.len() as Real;
        let diff = self.sub(mean, target);
        let sq = self.square(diff);
        let s = self.sum(sq);
        let half = self.scale(s, 0.5);
        self.add_scalar(half, 0.5 * n * (2.0 * PI).ln())
    }

    /// Sum over all entries of the Gaussian negative log likelihood with a
    /// learned scale: `Σ ln σ + ½((x−μ)/σ)² + ½ ln 2π`.
    pub fn gaussian_nll(&mut self, mean: NodeId, std: NodeId, target: NodeId) -> NodeId {
        let n = self.nodes[mean].value.len() as Real;
        let diff = self.sub(target, mean);
        let z = self.div(diff, std);
        let zsq = self.square(z);
        let half_zsq = self.scale(zsq, 0.5);
        let ln_std = self.ln(std);
        let per = self.add(half_zsq, ln_std);
        let s = self.sum(per);
        self.add_scalar(s, 0.5 * n * (2.0 * PI).ln())
    }

    /// Closed-form `KL(p ‖ q)` between diagonal Gaussians given as
    /// (mean, std) node pairs; summed over all entries.
    pub fn kl_gaussians(
        &mut self,
        mean_p: NodeId,
        std_p: NodeId,
        mean_q: NodeId,
        std_q: NodeId,
    ) -> NodeId {
        let n = self.nodes[mean_p].value.len() as Real;
        let ln_q = self.ln(std_q);
        let ln_p = self.ln(std_p);
        let log_ratio = self.sub(ln_q, ln_p);
        let var_p = self.square(std_p);
        let dm = self.sub(mean_p, mean_q);
        let dm_sq = self.square(dm);
        let num = self.add(var_p, dm_sq);
        let var_q = self.square(std_q);
        let two_var_q = self.scale(var_q, 2.0);
        let frac = self.div(num, two_var_q);
        let term = self.add(log_ratio, frac);
        let s = self.sum(term);
        self.add_scalar(s, -0.5 * n)
    }

    /// Sum over rows of the discrete `KL(softmax(lp) ‖ softmax(lq))`.
    pub fn kl_categorical_logits(&mut self, logits_p: NodeId, logits_q: NodeId) -> NodeId {
        let p = self.softmax_rows(logits_p);
        let q = self.softmax_rows(logits_q);
        let ln_p = self.ln(p);
        let ln_q = self.ln(q);
        let diff = self.sub(ln_p, ln_q);
        let w = self.mul(p, diff);
        self.sum(w)
    }

    // ---- backward -----------------------------------------------------------

    /// Exact gradients of the scalar node `output` w.r.t. every node.
    pub fn backward(&self, output: NodeId) -> Result<Gradients, MathError> {
        let out_len = self.nodes[output].value.len();
        if out_len != 1 {
            return Err(MathError::NonScalarOutput(out_len));
        }
        let mut grads: Vec<Option<DenseArray>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output] = Some(DenseArray::new(
            self.nodes[output].value.shape().to_vec(),
            vec![1.0],
        ));

        for id in (0..=output).rev() {
            let Some(g) = grads[id].take() else {
                continue;
            };
            match &self.nodes[id].op {
                Op::Leaf | Op::Constant => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    let ga = g.zip(&self.nodes[*b].value, |x, y| x * y);
                    let gb = g.zip(&self.nodes[*a].value, |x, y| x * y);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Div(a, b) => {
                    let bv = &self.nodes[*b].value;
                    let ga = g.zip(bv, |x, y| x / y);
                    let av = &self.nodes[*a].value;
                    let gb = DenseArray::new(
                        g.shape().to_vec(),
                        g.values()
                            .iter()
                            .zip(av.values())
                            .zip(bv.values())
                            .map(|((&gv, &a_), &b_)| -gv * a_ / (b_ * b_))
                            .collect(),
                    );
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::MatMul(a, b) => {
                    let ga = matmul_nt(&g, &self.nodes[*b].value);
                    let gb = matmul_tn(&self.nodes[*a].value, &g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddRow(a, row) => {
                    let (n, m) = g.dims2();
                    let mut col_sum = vec![0.0; m];
                    for i in 0..n {
                        for j in 0..m {
                            col_sum[j] += g.row(i)[j];
                        }
                    }
                    let row_shape = self.nodes[*row].value.shape().to_vec();
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *row, DenseArray::new(row_shape, col_sum));
                }
                Op::BroadcastCol(a) => {
                    let (n, m) = g.dims2();
                    let mut sums = vec![0.0; n];
                    for i in 0..n {
                        sums[i] = g.row(i).iter().sum();
                    }
                    let _ = m;
                    accumulate(&mut grads, *a, DenseArray::matrix(n, 1, sums));
                }
                Op::AddScalar(a) => accumulate(&mut grads, *a, g),
                Op::Scale(a, c) => {
                    let c = *c;
                    accumulate(&mut grads, *a, g.map(|x| x * c));
                }
                Op::Neg(a) => accumulate(&mut grads, *a, g.map(|x| -x)),
                Op::Tanh(a) => {
                    let y = &self.nodes[id].value;
                    accumulate(&mut grads, *a, g.zip(y, |gv, yv| gv * (1.0 - yv * yv)));
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[id].value;
                    accumulate(&mut grads, *a, g.zip(y, |gv, yv| gv * yv * (1.0 - yv)));
                }
                Op::Elu(a) => {
                    let y = &self.nodes[id].value;
                    accumulate(
                        &mut grads,
                        *a,
                        g.zip(y, |gv, yv| if yv > 0.0 { gv } else { gv * (yv + 1.0) }),
                    );
                }
                Op::Relu(a) => {
                    let x = &self.nodes[*a].value;
                    accumulate(
                        &mut grads,
                        *a,
                        g.zip(x, |gv, xv| if xv > 0.0 { gv } else { 0.0 }),
                    );
                }
                Op::Exp(a) => {
                    let y = &self.nodes[id].value;
                    accumulate(&mut grads, *a, g.zip(y, |gv, yv| gv * yv));
                }
                Op::Ln(a) => {
                    let x = &self.nodes[*a].value;
                    accumulate(&mut grads, *a, g.zip(x, |gv, xv| gv / xv));
                }
                Op::Sqrt(a) => {
                    let y = &self.nodes[id].value;
                    accumulate(&mut grads, *a, g.zip(y, |gv, yv| gv / (2.0 * yv)));
                }
                Op::Square(a) => {
                    let x = &self.nodes[*a].value;
                    accumulate(&mut grads, *a, g.zip(x, |gv, xv| gv * 2.0 * xv));
                }
                Op::Softplus(a) => {
                    let x = &self.nodes[*a].value;
                    accumulate(&mut grads, *a, g.zip(x, |gv, xv| gv * sigmoid(xv)));
                }
                Op::Sum(a) => {
                    let gv = g.item();
                    let shape = self.nodes[*a].value.shape().to_vec();
                    let n: usize = shape.iter().product();
                    accumulate(&mut grads, *a, DenseArray::new(shape, vec![gv; n]));
                }
                Op::RowMean(a) => {
                    let (n, m) = self.nodes[*a].value.dims2();
                    let mut out = vec![0.0; n * m];
                    for i in 0..n {
                        let gv = g.values()[i] / m as Real;
                        for j in 0..m {
                            out[i * m + j] = gv;
                        }
                    }
                    accumulate(&mut grads, *a, DenseArray::matrix(n, m, out));
                }
                Op::ConcatCols(parts) => {
                    let n = g.rows();
                    let mut offset = 0;
                    for &p in parts {
                        let c = self.nodes[p].value.cols();
                        let mut out = vec![0.0; n * c];
                        for i in 0..n {
                            out[i * c..(i + 1) * c]
                                .copy_from_slice(&g.row(i)[offset..offset + c]);
                        }
                        let shape = self.nodes[p].value.shape().to_vec();
                        accumulate(&mut grads, p, DenseArray::new(shape, out));
                        offset += c;
                    }
                }
                Op::SliceCols(a, start, end) => {
                    let (n, m) = self.nodes[*a].value.dims2();
                    let w = end - start;
                    let mut out = vec![0.0; n * m];
                    for i in 0..n {
                        out[i * m + start..i * m + end].copy_from_slice(&g.row(i)[0..w]);
                    }
                    accumulate(&mut grads, *a, DenseArray::matrix(n, m, out));
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.nodes[id].value;
                    let (n, m) = y.dims2();
                    let mut out = vec![0.0; n * m];
                    for i in 0..n {
                        let yr = y.row(i);
                        let gr = g.row(i);
                        let dot: Real = yr.iter().zip(gr).map(|(&yv, &gv)| yv * gv).sum();
                        for j in 0..m {
                            out[i * m + j] = yr[j] * (gr[j] - dot);
                        }
                    }
                    accumulate(&mut grads, *a, DenseArray::matrix(n, m, out));
                }
                Op::StraightThrough(probs) => accumulate(&mut grads, *probs, g),
                Op::Reshape(a) => {
                    let shape = self.nodes[*a].value.shape().to_vec();
                    accumulate(&mut grads, *a, g.reshaped(shape));
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<DenseArray>], id: NodeId, g: DenseArray) {
    match &mut grads[id] {
        Some(existing) => existing.add_in_place(&g),
        slot @ None => *slot = Some(g),
    }
}
