//! Layers with paired forward passes: a plain evaluation over arrays (used
//! by rollouts and data generation) and a taped evaluation (used by
//! training). A fuzz test asserts the two agree to machine precision.

use crate::math::array::matmul;
use crate::math::{sigmoid, softplus, DenseArray, NodeId, Real, RngStream, Tape};
use crate::nn::{Leaves, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Elu,
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(&self, x: Real) -> Real {
        match self {
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp() - 1.0
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    pub fn apply_tape(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        match self {
            Activation::Elu => tape.elu(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Relu => tape.relu(x),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "elu" => Some(Activation::Elu),
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Elu => "elu",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }
}

/// Affine layer `y = x·W + b`, `W: in×out`, `b: [out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: String,
    pub b: String,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn register(
        ps: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut RngStream,
    ) -> Self {
        let w = format!("{prefix}.w");
        let b = format!("{prefix}.b");
        ps.insert_weight(&w, in_dim, out_dim, rng);
        ps.insert_zeros(&b, vec![out_dim]);
        Self {
            w,
            b,
            in_dim,
            out_dim,
        }
    }

    /// `x: n×in` → `n×out`.
    pub fn forward(&self, ps: &ParamStore, x: &DenseArray) -> DenseArray {
        let mut y = matmul(x, ps.get(&self.w));
        let b = ps.get(&self.b).values();
        let (n, m) = y.dims2();
        let yv = y.values_mut();
        for i in 0..n {
            for j in 0..m {
                yv[i * m + j] += b[j];
            }
        }
        y
    }

    pub fn forward_tape(&self, tape: &mut Tape, leaves: &Leaves, x: NodeId) -> NodeId {
        let xw = tape.matmul(x, leaves.id(&self.w));
        tape.add_row(xw, leaves.id(&self.b))
    }
}

/// Multi-layer perceptron: `depth` hidden layers of `width` units with the
/// given activation, then an affine head.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub hidden: Vec<Linear>,
    pub head: Linear,
    pub act: Activation,
}

impl Mlp {
    pub fn register(
        ps: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        width: usize,
        depth: usize,
        out_dim: usize,
        act: Activation,
        rng: &mut RngStream,
    ) -> Self {
        let mut hidden = Vec::with_capacity(depth);
        let mut d = in_dim;
        for l in 0..depth {
            hidden.push(Linear::register(
                ps,
                &format!("{prefix}.h{l}"),
                d,
                width,
                rng,
            ));
            d = width;
        }
        let head = Linear::register(ps, &format!("{prefix}.out"), d, out_dim, rng);
        Self { hidden, head, act }
    }

    pub fn forward(&self, ps: &ParamStore, x: &DenseArray) -> DenseArray {
        let mut h = x.clone();
        for layer in &self.hidden {
            h = layer.forward(ps, &h).map(|v| self.act.apply(v));
        }
        self.head.forward(ps, &h)
    }

    pub fn forward_tape(&self, tape: &mut Tape, leaves: &Leaves, x: NodeId) -> NodeId {
        let mut h = x;
        for layer in &self.hidden {
            let pre = layer.forward_tape(tape, leaves, h);
            h = self.act.apply_tape(tape, pre);
        }
        self.head.forward_tape(tape, leaves, h)
    }
}

/// Gated recurrent cell.
///
/// With packed input weights `wx: in×3H` (reset, update, candidate) and
/// recurrent weights `wh_rz: H×2H`, `wh_n: H×H`:
///
/// ```text
/// r  = σ(x·Wxr + h·Whr + br)
/// u  = σ(x·Wxu + h·Whu + bu)
/// n  = tanh(x·Wxn + (r ⊙ h)·Whn + bn)
/// h' = u ⊙ h + (1 − u) ⊙ n
/// ```
#[derive(Clone, Debug)]
pub struct GruCell {
    pub wx: String,
    pub wh_rz: String,
    pub wh_n: String,
    pub b: String,
    pub in_dim: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn register(
        ps: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        hidden: usize,
        rng: &mut RngStream,
    ) -> Self {
        let wx = format!("{prefix}.wx");
        let wh_rz = format!("{prefix}.wh_rz");
        let wh_n = format!("{prefix}.wh_n");
        let b = format!("{prefix}.b");
        ps.insert_weight(&wx, in_dim, 3 * hidden, rng);
        ps.insert_weight(&wh_rz, hidden, 2 * hidden, rng);
        ps.insert_weight(&wh_n, hidden, hidden, rng);
        ps.insert_zeros(&b, vec![3 * hidden]);
        Self {
            wx,
            wh_rz,
            wh_n,
            b,
            in_dim,
            hidden,
        }
    }

    /// `x: n×in`, `h: n×H` → `n×H`.
    pub fn forward(&self, ps: &ParamStore, x: &DenseArray, h: &DenseArray) -> DenseArray {
        let hd = self.hidden;
        let n = x.rows();
        let xw = matmul(x, ps.get(&self.wx));
        let hw = matmul(h, ps.get(&self.wh_rz));
        let b = ps.get(&self.b).values();
        let mut out = vec![0.0; n * hd];
        let mut gated = vec![0.0; n * hd];
        for i in 0..n {
            let xr = xw.row(i);
            let hr = hw.row(i);
            for j in 0..hd {
                let r = sigmoid(xr[j] + hr[j] + b[j]);
                gated[i * hd + j] = r * h.row(i)[j];
            }
        }
        let gated = DenseArray::matrix(n, hd, gated);
        let gw = matmul(&gated, ps.get(&self.wh_n));
        for i in 0..n {
            let xr = xw.row(i);
            let hr = hw.row(i);
            let gr = gw.row(i);
            for j in 0..hd {
                let u = sigmoid(xr[hd + j] + hr[hd + j] + b[hd + j]);
                let cand = (xr[2 * hd + j] + gr[j] + b[2 * hd + j]).tanh();
                out[i * hd + j] = u * h.row(i)[j] + (1.0 - u) * cand;
            }
        }
        DenseArray::matrix(n, hd, out)
    }

    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        leaves: &Leaves,
        x: NodeId,
        h: NodeId,
    ) -> NodeId {
        let hd = self.hidden;
        let xw_all = tape.matmul(x, leaves.id(&self.wx));
        let xw = tape.add_row(xw_all, leaves.id(&self.b));
        let hw = tape.matmul(h, leaves.id(&self.wh_rz));
        let xr = tape.slice_cols(xw, 0, hd);
        let xu = tape.slice_cols(xw, hd, 2 * hd);
        let xn = tape.slice_cols(xw, 2 * hd, 3 * hd);
        let hr = tape.slice_cols(hw, 0, hd);
        let hu = tape.slice_cols(hw, hd, 2 * hd);
        let r_pre = tape.add(xr, hr);
        let r = tape.sigmoid(r_pre);
        let u_pre = tape.add(xu, hu);
        let u = tape.sigmoid(u_pre);
        let gated = tape.mul(r, h);
        let gn = tape.matmul(gated, leaves.id(&self.wh_n));
        let n_pre = tape.add(xn, gn);
        let n = tape.tanh(n_pre);
        let uh = tape.mul(u, h);
        let one_minus_u = {
            let neg = tape.neg(u);
            tape.add_scalar(neg, 1.0)
        };
        let un = tape.mul(one_minus_u, n);
        tape.add(uh, un)
    }
}

/// Layer normalization over each row, with learned gain and bias.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: String,
    pub beta: String,
    pub dim: usize,
}

const LN_EPS: Real = 1e-5;

impl LayerNorm {
    pub fn register(ps: &mut ParamStore, prefix: &str, dim: usize) -> Self {
        let gamma = format!("{prefix}.gamma");
        let beta = format!("{prefix}.beta");
        ps.insert(&gamma, DenseArray::vector(vec![1.0; dim]));
        ps.insert_zeros(&beta, vec![dim]);
        Self { gamma, beta, dim }
    }

    pub fn forward(&self, ps: &ParamStore, x: &DenseArray) -> DenseArray {
        let (n, m) = x.dims2();
        let gamma = ps.get(&self.gamma).values();
        let beta = ps.get(&self.beta).values();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let row = x.row(i);
            let mean = row.iter().sum::<Real>() / m as Real;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<Real>() / m as Real;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            for j in 0..m {
                out[i * m + j] = (row[j] - mean) * inv * gamma[j] + beta[j];
            }
        }
        DenseArray::matrix(n, m, out)
    }

    pub fn forward_tape(&self, tape: &mut Tape, leaves: &Leaves, x: NodeId) -> NodeId {
        let m = tape.value(x).cols();
        let mu = tape.row_mean(x);
        let mu_wide = tape.broadcast_col(mu, m);
        let centered = tape.sub(x, mu_wide);
        let sq = tape.square(centered);
        let var = tape.row_mean(sq);
        let var_eps = tape.add_scalar(var, LN_EPS);
        let std = tape.sqrt(var_eps);
        let std_wide = tape.broadcast_col(std, m);
        let normed = tape.div(centered, std_wide);
        // Scale rows by gamma then shift by beta, both broadcast.
        let n = tape.value(x).rows();
        let zeros = tape.constant(DenseArray::zeros(vec![n, m]));
        let gamma_wide = tape.add_row(zeros, leaves.id(&self.gamma));
        let scaled = tape.mul(normed, gamma_wide);
        tape.add_row(scaled, leaves.id(&self.beta))
    }
}

/// Evaluate `softplus(raw) + floor` elementwise (plain counterpart of
/// `Tape::positive_transform`).
pub fn positive_transform_array(raw: &DenseArray) -> DenseArray {
    raw.map(|x| softplus(x) + crate::math::STD_FLOOR)
}
