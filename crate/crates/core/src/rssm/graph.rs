//! Taped, batched twin of the plain model evaluation: every op works on
//! `[B × ·]` matrices recorded on a gradient tape. The ELBO and the
//! gradient-check suite are built from these pieces.

use crate::math::{DenseArray, NodeId, RngStream, Tape};
use crate::nn::Leaves;
use crate::rssm::{Rssm, Variant};

/// Stochastic-state distribution as tape nodes.
#[derive(Clone, Copy, Debug)]
pub enum DistNodes {
    /// `mean`, `std`: `[B × S]`.
    Gaussian { mean: NodeId, std: NodeId },
    /// Logits reshaped to `[B·K × C]` so softmax rows are per group.
    Categorical { logits: NodeId },
}

pub struct RssmGraph<'a> {
    pub rssm: &'a Rssm,
    pub leaves: Leaves,
}

impl<'a> RssmGraph<'a> {
    pub fn new(tape: &mut Tape, rssm: &'a Rssm) -> Self {
        let leaves = rssm.params.leaves(tape);
        Self { rssm, leaves }
    }

    /// Initial deterministic state: `[B × H]` zeros.
    pub fn init_h(&self, tape: &mut Tape, batch: usize) -> NodeId {
        tape.constant(DenseArray::zeros(vec![batch, self.rssm.cfg.deter]))
    }

    /// `h' = GRU(act(embed([z, a])), h)`.
    pub fn transition(
        &self,
        tape: &mut Tape,
        h_prev: NodeId,
        z_prev: NodeId,
        a_prev: NodeId,
    ) -> NodeId {
        let za = tape.concat_cols(&[z_prev, a_prev]);
        let pre = self.rssm.layers.embed_za.forward_tape(tape, &self.leaves, za);
        let embedded = self.rssm.cfg.activation.apply_tape(tape, pre);
        self.rssm
            .layers
            .gru
            .forward_tape(tape, &self.leaves, embedded, h_prev)
    }

    fn head_to_dist(&self, tape: &mut Tape, out: NodeId) -> DistNodes {
        match self.rssm.cfg.variant {
            Variant::Gaussian => {
                let s = self.rssm.cfg.stoch;
                let mean = tape.slice_cols(out, 0, s);
                let raw = tape.slice_cols(out, s, 2 * s);
                let std = tape.positive_transform(raw);
                DistNodes::Gaussian { mean, std }
            }
            Variant::Categorical => {
                let b = tape.value(out).rows();
                let (k, c) = (self.rssm.cfg.groups, self.rssm.cfg.classes);
                let logits = tape.reshape(out, vec![b * k, c]);
                DistNodes::Categorical { logits }
            }
        }
    }

    pub fn prior(&self, tape: &mut Tape, h: NodeId) -> DistNodes {
        let out = self
            .rssm
            .layers
            .prior_head
            .forward_tape(tape, &self.leaves, h);
        self.head_to_dist(tape, out)
    }

    pub fn posterior(&self, tape: &mut Tape, h: NodeId, obs: NodeId) -> DistNodes {
        let embed = self.rssm.layers.encoder.forward_tape(tape, &self.leaves, obs);
        let joint = tape.concat_cols(&[h, embed]);
        let out = self
            .rssm
            .layers
            .post_head
            .forward_tape(tape, &self.leaves, joint);
        self.head_to_dist(tape, out)
    }

    /// Draw the stochastic state: reparameterized for the Gaussian variant,
    /// straight-through one-hot for the categorical variant. Returns
    /// `[B × E]`.
    pub fn sample(&self, tape: &mut Tape, dist: DistNodes, rng: &mut RngStream) -> NodeId {
        match dist {
            DistNodes::Gaussian { mean, std } => {
                let shape = tape.value(mean).shape().to_vec();
                let n: usize = shape.iter().product();
                let eps = tape.constant(DenseArray::new(shape, rng.normal_vec(n)));
                let noise = tape.mul(std, eps);
                tape.add(mean, noise)
            }
            DistNodes::Categorical { logits } => {
                let probs = tape.softmax_rows(logits);
                let pv = tape.value(probs).clone();
                let (rows, c) = pv.dims2();
                let mut one_hot = vec![0.0; rows * c];
                for i in 0..rows {
                    let u = rng.uniform();
                    let mut acc = 0.0;
                    let mut chosen = c - 1;
                    for (j, &p) in pv.row(i).iter().enumerate() {
                        acc += p;
                        if u < acc {
                            chosen = j;
                            break;
                        }
                    }
                    one_hot[i * c + chosen] = 1.0;
                }
                let st = tape.straight_through(probs, DenseArray::matrix(rows, c, one_hot));
                let (k, _) = (self.rssm.cfg.groups, self.rssm.cfg.classes);
                let b = rows / k;
                tape.reshape(st, vec![b, k * c])
            }
        }
    }

    /// Differentiable surrogate draw: reparameterized for the Gaussian
    /// variant (identical to [`RssmGraph::sample`]); for the categorical
    /// variant the softmax probabilities stand in for the one-hot sample.
    /// The straight-through estimator routes gradients exactly as this
    /// surrogate does for a linear readout, which is what makes the
    /// finite-difference suite applicable to the categorical variant.
    pub fn sample_relaxed(&self, tape: &mut Tape, dist: DistNodes, rng: &mut RngStream) -> NodeId {
        match dist {
            DistNodes::Gaussian { .. } => self.sample(tape, dist, rng),
            DistNodes::Categorical { logits } => {
                let probs = tape.softmax_rows(logits);
                let (rows, c) = tape.value(probs).dims2();
                let k = self.rssm.cfg.groups;
                let b = rows / k;
                tape.reshape(probs, vec![b, k * c])
            }
        }
    }

    /// Distribution mode: Gaussian mean, or per-group argmax one-hot routed
    /// straight-through. Returns `[B × E]`.
    pub fn mode(&self, tape: &mut Tape, dist: DistNodes) -> NodeId {
        match dist {
            DistNodes::Gaussian { mean, .. } => mean,
            DistNodes::Categorical { logits } => {
                let probs = tape.softmax_rows(logits);
                let pv = tape.value(probs).clone();
                let (rows, c) = pv.dims2();
                let mut one_hot = vec![0.0; rows * c];
                for i in 0..rows {
                    let row = pv.row(i);
                    let mut best = 0;
                    for j in 1..c {
                        if row[j] > row[best] {
                            best = j;
                        }
                    }
                    one_hot[i * c + best] = 1.0;
                }
                let st = tape.straight_through(probs, DenseArray::matrix(rows, c, one_hot));
                let k = self.rssm.cfg.groups;
                let b = rows / k;
                tape.reshape(st, vec![b, k * c])
            }
        }
    }

    /// Total `KL(post ‖ prior)` summed over the batch.
    pub fn kl_sum(&self, tape: &mut Tape, post: DistNodes, prior: DistNodes) -> NodeId {
        match (post, prior) {
            (
                DistNodes::Gaussian { mean: mp, std: sp },
                DistNodes::Gaussian { mean: mq, std: sq },
            ) => tape.kl_gaussians(mp, sp, mq, sq),
            (DistNodes::Categorical { logits: lp }, DistNodes::Categorical { logits: lq }) => {
                tape.kl_categorical_logits(lp, lq)
            }
            _ => unreachable!("variant mismatch inside one model"),
        }
    }

    /// Decoder means from `(h, z)`: observation, reward, physical.
    pub fn decode_means(
        &self,
        tape: &mut Tape,
        h: NodeId,
        z: NodeId,
    ) -> (NodeId, NodeId, NodeId) {
        let feat = tape.concat_cols(&[h, z]);
        let obs = self.rssm.layers.dec_obs.forward_tape(tape, &self.leaves, feat);
        let rew = self.rssm.layers.dec_rew.forward_tape(tape, &self.leaves, feat);
        let phys = self
            .rssm
            .layers
            .dec_phys
            .forward_tape(tape, &self.leaves, feat);
        (obs, rew, phys)
    }

    /// Initial stochastic state at `h = 0`: prior sample (or mode under
    /// deterministic init).
    pub fn init_z(&self, tape: &mut Tape, batch: usize, rng: &mut RngStream) -> NodeId {
        let h0 = self.init_h(tape, batch);
        let prior0 = self.prior(tape, h0);
        if self.rssm.cfg.deterministic_init {
            self.mode(tape, prior0)
        } else {
            self.sample(tape, prior0, rng)
        }
    }

    /// Zero action row block `[B × A]` used before the first step.
    pub fn zero_action(&self, tape: &mut Tape, batch: usize) -> NodeId {
        tape.constant(DenseArray::zeros(vec![batch, self.rssm.cfg.action_dim]))
    }
}

