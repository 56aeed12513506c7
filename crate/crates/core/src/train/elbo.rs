//! Sequence ELBO: posterior-filtered unroll with reconstruction terms for
//! observations, rewards, and physical states, regularized by
//! `KL(posterior ‖ prior)` per step; averaged over batch and time.

use crate::math::{DenseArray, NodeId, Real, RngStream, Tape};
use crate::nn::Leaves;
use crate::rssm::{Rssm, RssmGraph};
use crate::train::{SequenceBatch, TrainError};

/// Per-term scalar breakdown; the four terms sum to the total loss.
#[derive(Clone, Copy, Debug, Default)]
pub struct ElboTerms {
    pub total: Real,
    pub recon_o: Real,
    pub recon_r: Real,
    pub recon_s: Real,
    pub kl: Real,
}

/// Detached belief values for one unroll step (copies of tape values, so no
/// gradient can flow back through them).
#[derive(Clone, Debug)]
pub struct StepValues {
    pub h_prev: DenseArray,
    pub z_prev: DenseArray,
    pub a_prev: DenseArray,
    pub h: DenseArray,
    pub z: DenseArray,
}

/// A recorded ELBO evaluation, ready for `backward`.
pub struct ElboComputation {
    pub tape: Tape,
    pub leaves: Leaves,
    pub loss: NodeId,
    pub terms: ElboTerms,
    pub steps: Vec<StepValues>,
}

/// Record the ELBO loss of `batch` under `rssm`. Posterior samples are
/// reparameterized (Gaussian) or straight-through (categorical). When
/// `relaxed` is set, sampling uses the differentiable surrogate instead —
/// the mode the finite-difference suite checks.
pub fn elbo_loss(
    rssm: &Rssm,
    batch: &SequenceBatch,
    rng: &mut RngStream,
    relaxed: bool,
) -> Result<ElboComputation, TrainError> {
    if batch.obs.is_empty() {
        return Err(TrainError::InsufficientData { needed: 1 });
    }
    let b = batch.batch;
    let l = batch.len;
    let mut tape = Tape::new();
    let graph = RssmGraph::new(&mut tape, rssm);

    let sample = |tape: &mut Tape, graph: &RssmGraph, dist, rng: &mut RngStream| {
        if relaxed {
            graph.sample_relaxed(tape, dist, rng)
        } else {
            graph.sample(tape, dist, rng)
        }
    };

    let mut h_prev = graph.init_h(&mut tape, b);
    let prior0 = graph.prior(&mut tape, h_prev);
    let mut z_prev = sample(&mut tape, &graph, prior0, rng);
    let mut a_prev = graph.zero_action(&mut tape, b);

    let mut nll_o: Option<NodeId> = None;
    let mut nll_r: Option<NodeId> = None;
    let mut nll_s: Option<NodeId> = None;
    let mut kl: Option<NodeId> = None;
    let mut steps = Vec::with_capacity(l);

    let chain = |tape: &mut Tape, acc: &mut Option<NodeId>, term: NodeId| {
        *acc = Some(match *acc {
            Some(prev) => tape.add(prev, term),
            None => term,
        });
    };

    for t in 0..l {
        let h = graph.transition(&mut tape, h_prev, z_prev, a_prev);
        let prior = graph.prior(&mut tape, h);
        let obs = tape.constant(batch.obs[t].clone());
        let post = graph.posterior(&mut tape, h, obs);
        let z = sample(&mut tape, &graph, post, rng);

        let (o_mean, r_mean, p_mean) = graph.decode_means(&mut tape, h, z);
        let o_term = tape.gaussian_nll_unit_std(o_mean, obs);
        let r_target = tape.constant(batch.rewards[t].clone());
        let r_term = tape.gaussian_nll_unit_std(r_mean, r_target);
        let p_target = tape.constant(batch.phys[t].clone());
        let p_term = tape.gaussian_nll_unit_std(p_mean, p_target);
        let kl_term = graph.kl_sum(&mut tape, post, prior);

        chain(&mut tape, &mut nll_o, o_term);
        chain(&mut tape, &mut nll_r, r_term);
        chain(&mut tape, &mut nll_s, p_term);
        chain(&mut tape, &mut kl, kl_term);

        steps.push(StepValues {
            h_prev: tape.value(h_prev).clone(),
            z_prev: tape.value(z_prev).clone(),
            a_prev: tape.value(a_prev).clone(),
            h: tape.value(h).clone(),
            z: tape.value(z).clone(),
        });

        h_prev = h;
        z_prev = z;
        if t + 1 < l {
            a_prev = tape.constant(batch.actions[t].clone());
        }
    }

    let scale = 1.0 / (b * l) as Real;
    let recon_o = tape.scale(nll_o.unwrap(), scale);
    let recon_r = tape.scale(nll_r.unwrap(), scale);
    let recon_s = tape.scale(nll_s.unwrap(), scale);
    let kl_scaled = tape.scale(kl.unwrap(), scale);
    let recon = tape.add(recon_o, recon_r);
    let reg = tape.add(recon_s, kl_scaled);
    let loss = tape.add(recon, reg);

    let terms = ElboTerms {
        total: tape.value(loss).item(),
        recon_o: tape.value(recon_o).item(),
        recon_r: tape.value(recon_r).item(),
        recon_s: tape.value(recon_s).item(),
        kl: tape.value(kl_scaled).item(),
    };
    let leaves = graph.leaves;
    Ok(ElboComputation {
        tape,
        leaves,
        loss,
        terms,
        steps,
    })
}
