//! Registered gradient-check cases: every differentiable loss at small
//! sizes, compared against central finite differences. A configurable bug
//! injection proves the harness catches broken backward passes.
//!
//! The categorical model loss runs with the differentiable surrogate
//! (softmax probabilities in place of one-hot samples); the
//! straight-through estimator itself is pinned by an exact contract test
//! in the math module.

use crate::ensemble::{Ensemble, EnsembleConfig};
use crate::env::{EnvConfig, EnvKind, World};
use crate::math::gradcheck::{central_diff, max_rel_err};
use crate::math::{Real, RngStream};
use crate::rssm::{Rssm, RssmConfig, Variant};
use crate::train::{elbo_loss, Episode, ReplayBuffer};

pub struct GradcheckCase {
    pub name: &'static str,
    pub params: usize,
    pub rel_err: Real,
    pub tolerance: Real,
}

const TOLERANCE: Real = 1e-4;
const FD_STEP: Real = 1e-5;

fn tiny_world() -> World {
    let mut cfg = EnvConfig::new(EnvKind::Pendulum);
    cfg.obs_dim = 2;
    cfg.seed = 5;
    cfg.episode_len = 8;
    World::new(cfg)
}

fn tiny_rssm(variant: Variant, world: &World) -> Rssm {
    let mut cfg = RssmConfig::new(variant, world.obs_dim(), world.action_dim(), world.decoder_dim());
    cfg.stoch = 2;
    cfg.groups = 1;
    cfg.classes = 2;
    cfg.deter = 2;
    cfg.hidden = 3;
    cfg.depth = 1;
    // The pendulum decoder target is 3-wide; shrink nothing else.
    Rssm::new(cfg, 7)
}

fn elbo_case(variant: Variant, inject: bool) -> GradcheckCase {
    let world = tiny_world();
    let rssm = tiny_rssm(variant, &world);
    let mut rng = RngStream::seed_from(3);
    let mut buffer = ReplayBuffer::new();
    let mut episode = Episode {
        obs: Vec::new(),
        actions: Vec::new(),
        rewards: Vec::new(),
        states: Vec::new(),
    };
    for _ in 0..6 {
        episode.obs.push(rng.uniform_vec_in(world.obs_dim(), -1.0, 1.0));
        episode.actions.push(rng.uniform_vec_in(1, -1.0, 1.0));
        episode.rewards.push(rng.uniform_in(0.0, 1.0));
        episode.states.push(crate::env::PhysicalState(vec![
            rng.uniform_in(-2.0, 2.0),
            rng.uniform_in(-3.0, 3.0),
        ]));
    }
    buffer.push(episode);
    let batch = buffer.sample_batch(&world, 2, 3, &mut rng).unwrap();

    let f = |flat: &[Real]| -> Real {
        let mut probe = rssm.clone();
        probe.params = rssm.params.unflatten(flat);
        let mut r = RngStream::seed_from(11);
        elbo_loss(&probe, &batch, &mut r, true).unwrap().terms.total
    };
    let flat = rssm.params.flatten();
    let fd = central_diff(&f, &flat, FD_STEP);

    let mut r = RngStream::seed_from(11);
    let comp = elbo_loss(&rssm, &batch, &mut r, true).unwrap();
    let grads = comp.tape.backward(comp.loss).unwrap();
    let mut analytic: Vec<Real> = rssm
        .params
        .collect_grads(&comp.tape, &comp.leaves, &grads)
        .iter()
        .flat_map(|g| g.values().to_vec())
        .collect();
    if inject {
        analytic[0] = analytic[0] * 1.5 + 0.1;
    }
    GradcheckCase {
        name: match variant {
            Variant::Gaussian => "elbo-gaussian",
            Variant::Categorical => "elbo-categorical",
        },
        params: flat.len(),
        rel_err: max_rel_err(&analytic, &fd),
        tolerance: TOLERANCE,
    }
}

fn ensemble_case(name: &'static str, layer_norm: bool, inject: bool) -> GradcheckCase {
    let cfg = EnsembleConfig {
        members: 2,
        depth: 2,
        width: 4,
        layer_norm,
        bootstrap: false,
        lr: 1e-3,
        grad_clip: 100.0,
    };
    let ens = Ensemble::new(cfg, 3, 2, 13);
    let mut rng = RngStream::seed_from(17);
    let x = crate::math::DenseArray::matrix(4, 3, (0..12).map(|_| rng.uniform_in(-1.0, 1.0)).collect());
    let y = crate::math::DenseArray::matrix(4, 2, (0..8).map(|_| rng.uniform_in(-1.0, 1.0)).collect());
    let (params, analytic0) = ens.member_nll_gradient(0, &x, &y);
    let f = {
        let ens = &ens;
        let x = x.clone();
        let y = y.clone();
        move |flat: &[Real]| ens.member_nll_value_at(0, flat, &x, &y)
    };
    let flat = params.flatten();
    let fd = central_diff(&f, &flat, FD_STEP);
    let mut analytic = analytic0;
    if inject {
        analytic[1] = analytic[1] * 2.0 + 0.05;
    }
    GradcheckCase {
        name,
        params: flat.len(),
        rel_err: max_rel_err(&analytic, &fd),
        tolerance: TOLERANCE,
    }
}

/// All registered cases; `inject_bug` corrupts the analytic gradient of
/// the named loss.
pub fn run_all(inject_bug: Option<&str>) -> Vec<GradcheckCase> {
    let hit = |name: &str| inject_bug == Some(name);
    vec![
        elbo_case(Variant::Gaussian, hit("elbo-gaussian")),
        elbo_case(Variant::Categorical, hit("elbo-categorical")),
        ensemble_case("latent-ensemble-nll", true, hit("latent-ensemble-nll")),
        ensemble_case("pe-nll", false, hit("pe-nll")),
    ]
}
