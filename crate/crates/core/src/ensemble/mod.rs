//! Ensembles for epistemic uncertainty: a latent transition ensemble over
//! the model's deterministic state, and the physical-dynamics probabilistic
//! ensemble baseline. Disagreement is measured with the geometric
//! Jensen-Shannon construction from [`crate::math`].
//!
//! Ensemble training consumes detached value copies only; it cannot reach
//! the latent dynamics model's parameters.


use crate::env::{EnvError, PhysicalState, World};
use crate::math::{
    gjs_uncertainty, DenseArray, DiagonalGaussian, MathError, Real, RngStream, Tape,
};
use crate::nn::{layers::positive_transform_array, Activation, Adam, LayerNorm, Linear, ParamStore};
use crate::train::{ReplayBuffer, StepValues};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("empty training batch")]
    EmptyBatch,
    #[error(transparent)]
    Math(#[from] MathError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Clone, Debug)]
pub struct EnsembleConfig {
    pub members: usize,
    /// Hidden linear layers per member.
    pub depth: usize,
    pub width: usize,
    /// LayerNorm between hidden layers.
    pub layer_norm: bool,
    /// Per-member bootstrap resampling of each batch.
    pub bootstrap: bool,
    pub lr: Real,
    pub grad_clip: Real,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            members: 5,
            depth: 5,
            width: 300,
            layer_norm: true,
            bootstrap: true,
            lr: 6e-4,
            grad_clip: 100.0,
        }
    }
}

/// One member network: `depth` × (linear, optional LayerNorm, ELU), then a
/// linear head emitting mean and raw scale halves.
#[derive(Clone, Debug)]
struct MemberNet {
    hidden: Vec<Linear>,
    norms: Vec<Option<LayerNorm>>,
    head: Linear,
    out_dim: usize,
}

impl MemberNet {
    fn register(
        ps: &mut ParamStore,
        in_dim: usize,
        out_dim: usize,
        cfg: &EnsembleConfig,
        rng: &mut RngStream,
    ) -> Self {
        let mut hidden = Vec::with_capacity(cfg.depth);
        let mut norms = Vec::with_capacity(cfg.depth);
        let mut d = in_dim;
        for l in 0..cfg.depth {
            hidden.push(Linear::register(ps, &format!("h{l}"), d, cfg.width, rng));
            norms.push(if cfg.layer_norm {
                Some(LayerNorm::register(ps, &format!("ln{l}"), cfg.width))
            } else {
                None
            });
            d = cfg.width;
        }
        let head = Linear::register(ps, "out", d, 2 * out_dim, rng);
        Self {
            hidden,
            norms,
            head,
            out_dim,
        }
    }

    fn forward(&self, ps: &ParamStore, x: &DenseArray) -> DiagonalGaussianBatch {
        let mut h = x.clone();
        for (lin, norm) in self.hidden.iter().zip(&self.norms) {
            h = lin.forward(ps, &h);
            if let Some(ln) = norm {
                h = ln.forward(ps, &h);
            }
            h = h.map(|v| Activation::Elu.apply(v));
        }
        let out = self.head.forward(ps, &h);
        let (n, two_d) = out.dims2();
        let d = two_d / 2;
        let mut mean = vec![0.0; n * d];
        let mut raw = vec![0.0; n * d];
        for i in 0..n {
            mean[i * d..(i + 1) * d].copy_from_slice(&out.row(i)[..d]);
            raw[i * d..(i + 1) * d].copy_from_slice(&out.row(i)[d..]);
        }
        let std = positive_transform_array(&DenseArray::matrix(n, d, raw));
        DiagonalGaussianBatch {
            mean: DenseArray::matrix(n, d, mean),
            std,
        }
    }

    fn nll_tape(
        &self,
        tape: &mut Tape,
        leaves: &crate::nn::Leaves,
        x: DenseArray,
        target: DenseArray,
    ) -> crate::math::NodeId {
        let mut h = tape.constant(x);
        for (lin, norm) in self.hidden.iter().zip(&self.norms) {
            h = lin.forward_tape(tape, leaves, h);
            if let Some(ln) = norm {
                h = ln.forward_tape(tape, leaves, h);
            }
            h = tape.elu(h);
        }
        let out = self.head.forward_tape(tape, leaves, h);
        let d = self.out_dim;
        let mean = tape.slice_cols(out, 0, d);
        let raw = tape.slice_cols(out, d, 2 * d);
        let std = tape.positive_transform(raw);
        let t = tape.constant(target);
        let n = tape.value(mean).rows() as Real;
        let nll = tape.gaussian_nll(mean, std, t);
        tape.scale(nll, 1.0 / n)
    }
}

/// Per-row diagonal Gaussians over the output space.
#[derive(Clone, Debug)]
pub struct DiagonalGaussianBatch {
    pub mean: DenseArray,
    pub std: DenseArray,
}

impl DiagonalGaussianBatch {
    pub fn row(&self, i: usize) -> DiagonalGaussian {
        DiagonalGaussian::new(self.mean.row(i).to_vec(), self.std.row(i).to_vec())
            .expect("positive std by construction")
    }
}

struct Member {
    params: ParamStore,
    net: MemberNet,
    opt: Adam,
}

/// M independently initialized Gaussian predictors over a shared
/// input/output space.
pub struct Ensemble {
    pub cfg: EnsembleConfig,
    pub in_dim: usize,
    pub out_dim: usize,
    members: Vec<Member>,
}

impl Ensemble {
    pub fn new(cfg: EnsembleConfig, in_dim: usize, out_dim: usize, seed: u64) -> Self {
        assert!(cfg.members >= 2, "need at least two members");
        let members = (0..cfg.members)
            .map(|i| {
                let mut rng = RngStream::derive(seed, 0xE0 + i as u64);
                let mut ps = ParamStore::new();
                let net = MemberNet::register(&mut ps, in_dim, out_dim, &cfg, &mut rng);
                Member {
                    params: ps,
                    net,
                    opt: Adam::new(cfg.lr, cfg.grad_clip),
                }
            })
            .collect();
        Self {
            cfg,
            in_dim,
            out_dim,
            members,
        }
    }

    pub fn member_count(&self) -> usize {
        self.members.len()
    }

    /// Copy member 0's parameters into every member (tests of the
    /// identical-members contract).
    pub fn tie_members_to_first(&mut self) {
        let first = self.members[0].params.clone();
        for m in &mut self.members[1..] {
            m.params = first.clone();
        }
    }

    pub fn member_checksums(&self) -> Vec<u64> {
        self.members.iter().map(|m| m.params.checksum()).collect()
    }

    /// Per-member predictive distributions for one input row, in stable
    /// member order.
    pub fn predict(&self, input: &[Real]) -> Vec<DiagonalGaussian> {
        assert_eq!(input.len(), self.in_dim, "ensemble input size");
        let x = DenseArray::matrix(1, input.len(), input.to_vec());
        self.members
            .iter()
            .map(|m| m.net.forward(&m.params, &x).row(0))
            .collect()
    }

    /// Batched member predictions: one [`DiagonalGaussianBatch`] per member.
    pub fn predict_batch(&self, inputs: &DenseArray) -> Vec<DiagonalGaussianBatch> {
        self.members
            .iter()
            .map(|m| m.net.forward(&m.params, inputs))
            .collect()
    }

    /// GJS disagreement for one input row.
    pub fn disagreement(&self, input: &[Real]) -> Result<Real, MathError> {
        gjs_uncertainty(&self.predict(input))
    }

    /// One Gaussian-NLL Adam step per member, each on its own bootstrap
    /// view of the batch when enabled. Returns per-member mean NLL.
    pub fn train_step(
        &mut self,
        inputs: &DenseArray,
        targets: &DenseArray,
        rng: &mut RngStream,
    ) -> Result<Vec<Real>, EnsembleError> {
        let n = inputs.rows();
        if n == 0 {
            return Err(EnsembleError::EmptyBatch);
        }
        assert_eq!(targets.rows(), n);
        let mut losses = Vec::with_capacity(self.members.len());
        for m in &mut self.members {
            let (x, t) = if self.cfg.bootstrap {
                let idx: Vec<usize> = (0..n).map(|_| rng.index(n)).collect();
                (gather_rows(inputs, &idx), gather_rows(targets, &idx))
            } else {
                (inputs.clone(), targets.clone())
            };
            let mut tape = Tape::new();
            let leaves = m.params.leaves(&mut tape);
            let loss = m.net.nll_tape(&mut tape, &leaves, x, t);
            let grads = tape.backward(loss)?;
            let grad_arrays = m.params.collect_grads(&tape, &leaves, &grads);
            m.opt.update(&mut m.params, grad_arrays);
            losses.push(tape.value(loss).item());
        }
        Ok(losses)
    }

    /// Mean NLL of the batch under each member, without updating anything.
    pub fn eval_nll(&self, inputs: &DenseArray, targets: &DenseArray) -> Vec<Real> {
        self.members
            .iter()
            .map(|m| {
                let pred = m.net.forward(&m.params, inputs);
                let mut nll = 0.0;
                let n = inputs.rows();
                for i in 0..n {
                    nll -= pred.row(i).log_prob(targets.row(i));
                }
                nll / n as Real
            })
            .collect()
    }

    pub fn members_params(&self) -> impl Iterator<Item = &ParamStore> {
        self.members.iter().map(|m| &m.params)
    }

    pub fn member_params_mut(&mut self, i: usize) -> &mut ParamStore {
        &mut self.members[i].params
    }

    /// Mean NLL of member `i` on the batch, with its analytic gradient
    /// flattened in parameter order. Hook for the gradient-check suite.
    pub fn member_nll_gradient(
        &self,
        i: usize,
        inputs: &DenseArray,
        targets: &DenseArray,
    ) -> (ParamStore, Vec<Real>) {
        let m = &self.members[i];
        let mut tape = Tape::new();
        let leaves = m.params.leaves(&mut tape);
        let loss = m
            .net
            .nll_tape(&mut tape, &leaves, inputs.clone(), targets.clone());
        let grads = tape.backward(loss).expect("scalar loss");
        let flat: Vec<Real> = m
            .params
            .collect_grads(&tape, &leaves, &grads)
            .iter()
            .flat_map(|g| g.values().to_vec())
            .collect();
        (m.params.clone(), flat)
    }

    /// Mean NLL of member `i` evaluated at substitute parameters given as a
    /// flat vector. Forward pass only.
    pub fn member_nll_value_at(
        &self,
        i: usize,
        flat: &[Real],
        inputs: &DenseArray,
        targets: &DenseArray,
    ) -> Real {
        let m = &self.members[i];
        let params = m.params.unflatten(flat);
        let mut tape = Tape::new();
        let leaves = params.leaves(&mut tape);
        let loss = m
            .net
            .nll_tape(&mut tape, &leaves, inputs.clone(), targets.clone());
        tape.value(loss).item()
    }
}

fn gather_rows(a: &DenseArray, idx: &[usize]) -> DenseArray {
    let (_, m) = a.dims2();
    let mut out = Vec::with_capacity(idx.len() * m);
    for &i in idx {
        out.extend_from_slice(a.row(i));
    }
    DenseArray::matrix(idx.len(), m, out)
}

/// Ensemble of one-step latent transition predictors
/// `(h_{t−1}, z_{t−1}, a_{t−1}) → h_t`.
pub struct LatentEnsemble {
    pub inner: Ensemble,
}

impl LatentEnsemble {
    pub fn new(cfg: EnsembleConfig, deter: usize, stoch_event: usize, action: usize, seed: u64) -> Self {
        Self {
            inner: Ensemble::new(cfg, deter + stoch_event + action, deter, seed),
        }
    }

    /// Flatten detached ELBO step values into `(input, target)` training
    /// matrices: inputs `[N × (H+E+A)]`, targets `[N × H]`.
    pub fn tuples_from_steps(steps: &[StepValues]) -> (DenseArray, DenseArray) {
        assert!(!steps.is_empty());
        let b = steps[0].h.rows();
        let in_dim = steps[0].h_prev.cols() + steps[0].z_prev.cols() + steps[0].a_prev.cols();
        let out_dim = steps[0].h.cols();
        let n = steps.len() * b;
        let mut inputs = Vec::with_capacity(n * in_dim);
        let mut targets = Vec::with_capacity(n * out_dim);
        for s in steps {
            for i in 0..b {
                inputs.extend_from_slice(s.h_prev.row(i));
                inputs.extend_from_slice(s.z_prev.row(i));
                inputs.extend_from_slice(s.a_prev.row(i));
                targets.extend_from_slice(s.h.row(i));
            }
        }
        (
            DenseArray::matrix(n, in_dim, inputs),
            DenseArray::matrix(n, out_dim, targets),
        )
    }

    /// Member predictions of the next deterministic state.
    pub fn predict(&self, h: &[Real], z: &[Real], a: &[Real]) -> Vec<DiagonalGaussian> {
        let mut input = Vec::with_capacity(self.inner.in_dim);
        input.extend_from_slice(h);
        input.extend_from_slice(z);
        input.extend_from_slice(a);
        self.inner.predict(&input)
    }

    pub fn disagreement(&self, h: &[Real], z: &[Real], a: &[Real]) -> Result<Real, MathError> {
        gjs_uncertainty(&self.predict(h, z, a))
    }
}

/// How a physical-ensemble rollout propagates its state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PropagationMode {
    /// Average of member means.
    Mean,
    /// Sample from a uniformly chosen member each step.
    MemberSample,
}

impl PropagationMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mean" => Some(PropagationMode::Mean),
            "member-sample" => Some(PropagationMode::MemberSample),
            _ => None,
        }
    }
}

/// Probabilistic ensemble over physical dynamics:
/// `(encoded s_t, a_t) → encoded s_{t+1}`.
pub struct PhysicalEnsemble {
    pub inner: Ensemble,
}

impl PhysicalEnsemble {
    pub fn new(cfg: EnsembleConfig, enc_dim: usize, action: usize, seed: u64) -> Self {
        Self {
            inner: Ensemble::new(cfg, enc_dim + action, enc_dim, seed),
        }
    }

    /// Sample up to `max_n` consecutive `(s_t, a_t, s_{t+1})` transitions
    /// from the buffer, encoded for training.
    pub fn transitions_from_buffer(
        buffer: &ReplayBuffer,
        world: &World,
        max_n: usize,
        rng: &mut RngStream,
    ) -> Option<(DenseArray, DenseArray)> {
        let episodes = buffer.episodes();
        let total: usize = episodes.iter().map(|e| e.len().saturating_sub(1)).sum();
        if total == 0 {
            return None;
        }
        let n = max_n.min(total);
        let enc_dim = world.encoded_dim();
        let act_dim = world.action_dim();
        let mut inputs = Vec::with_capacity(n * (enc_dim + act_dim));
        let mut targets = Vec::with_capacity(n * enc_dim);
        for _ in 0..n {
            let mut pick = rng.index(total);
            for e in episodes {
                let count = e.len().saturating_sub(1);
                if pick < count {
                    inputs.extend_from_slice(&world.encode_physical(&e.states[pick]));
                    inputs.extend_from_slice(&e.actions[pick]);
                    targets.extend_from_slice(&world.encode_physical(&e.states[pick + 1]));
                    break;
                }
                pick -= count;
            }
        }
        Some((
            DenseArray::matrix(n, enc_dim + act_dim, inputs),
            DenseArray::matrix(n, enc_dim, targets),
        ))
    }

    /// Autoregressive rollout from `s0` under `actions`, with per-step GJS
    /// disagreement. Horizon 0 yields empty outputs.
    pub fn rollout(
        &self,
        world: &World,
        s0: &PhysicalState,
        actions: &[Vec<Real>],
        mode: PropagationMode,
        rng: &mut RngStream,
    ) -> Result<(Vec<PhysicalState>, Vec<Real>), EnsembleError> {
        world.validate(s0)?;
        let mut states = Vec::with_capacity(actions.len());
        let mut uncertainty = Vec::with_capacity(actions.len());
        let mut enc = world.encode_physical(s0);
        for a in actions {
            let mut input = enc.clone();
            input.extend_from_slice(a);
            let dists = self.inner.predict(&input);
            uncertainty.push(gjs_uncertainty(&dists)?);
            let next_enc: Vec<Real> = match mode {
                PropagationMode::Mean => {
                    let d = self.inner.out_dim;
                    let mut mean = vec![0.0; d];
                    for dist in &dists {
                        for (m, &v) in mean.iter_mut().zip(dist.mean()) {
                            *m += v;
                        }
                    }
                    mean.iter().map(|v| v / dists.len() as Real).collect()
                }
                PropagationMode::MemberSample => {
                    let pick = rng.index(dists.len());
                    dists[pick].sample(rng)
                }
            };
            // Project back onto the state manifold (angles re-normalized via
            // atan2) and re-encode for the next input.
            let state = world.decode_encoded(&next_enc);
            enc = world.encode_physical(&state);
            states.push(state);
        }
        Ok((states, uncertainty))
    }
}
