use super::*;
use crate::math::gradcheck::{central_diff, max_rel_err};
use crate::math::{softplus, DenseArray, Tape, PI, STD_FLOOR};
use crate::nn::ParamStore;

fn tiny_cfg(variant: Variant) -> RssmConfig {
    let mut cfg = RssmConfig::new(variant, 5, 1, 3);
    cfg.stoch = 3;
    cfg.groups = 2;
    cfg.classes = 3;
    cfg.deter = 4;
    cfg.hidden = 6;
    cfg.depth = 1;
    cfg
}

fn both_variants() -> Vec<Rssm> {
    vec![
        Rssm::new(tiny_cfg(Variant::Gaussian), 7),
        Rssm::new(tiny_cfg(Variant::Categorical), 7),
    ]
}

#[test]
fn init_belief_deterministic_flag() {
    for mut rssm in both_variants() {
        rssm.cfg.deterministic_init = true;
        let a = rssm.init_belief(Some(&mut RngStream::seed_from(1)));
        let b = rssm.init_belief(Some(&mut RngStream::seed_from(2)));
        assert_eq!(a, b);
        assert!(a.h.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn default_sizes_match_reference_settings() {
    let cfg = RssmConfig::new(Variant::Gaussian, 16, 1, 3);
    assert_eq!(cfg.deter, 200);
    assert_eq!(cfg.stoch, 30);
    assert_eq!(cfg.hidden, 300);
    let rssm = Rssm::new(cfg, 0);
    let b = rssm.init_belief(None);
    assert_eq!(b.h.len(), 200);

    let cat = RssmConfig::new(Variant::Categorical, 16, 1, 3);
    assert_eq!((cat.groups, cat.classes), (32, 32));
    let rssm = Rssm::new(cat, 0);
    let b = rssm.init_belief(Some(&mut RngStream::seed_from(3)));
    assert_eq!(b.z.len(), 32 * 32);
    for g in 0..32 {
        let row = &b.z[g * 32..(g + 1) * 32];
        assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
        assert!(row.iter().all(|&v| v == 0.0 || v == 1.0));
    }
}

#[test]
fn transition_prior_pure_and_sized() {
    for rssm in both_variants() {
        let b = rssm.init_belief(Some(&mut RngStream::seed_from(5)));
        let (h1, d1) = rssm.transition_prior(&b, &[0.3]);
        let (h2, d2) = rssm.transition_prior(&b, &[0.3]);
        assert_eq!(h1, h2);
        assert_eq!(d1.mode(), d2.mode());
        assert_eq!(h1.len(), rssm.cfg.deter);
    }
}

#[test]
fn zero_weights_prior_is_transform_of_zero() {
    let mut rssm = Rssm::new(tiny_cfg(Variant::Gaussian), 1);
    rssm.params.zero_all();
    let b = Belief {
        h: vec![0.0; 4],
        z: vec![0.4, -0.2, 0.9],
    };
    let (h, dist) = rssm.transition_prior(&b, &[0.5]);
    assert!(h.iter().all(|&v| v == 0.0));
    match dist {
        StochDist::Gaussian(g) => {
            let expect = softplus(0.0) + STD_FLOOR;
            for (&m, &s) in g.mean().iter().zip(g.std()) {
                assert_eq!(m, 0.0);
                assert!((s - expect).abs() < 1e-15, "std {s} expect {expect}");
            }
        }
        _ => unreachable!(),
    }
}

#[test]
fn posterior_prior_same_event_shape_and_zero_kl_at_zero_weights() {
    for mut rssm in both_variants() {
        rssm.params.zero_all();
        let b = rssm.init_belief(None);
        let (h, prior) = rssm.transition_prior(&b, &[0.1]);
        let obs = vec![0.7; rssm.cfg.obs_dim];
        let post = rssm.posterior(&h, &obs).unwrap();
        assert_eq!(post.event_len(), prior.event_len());
        let kl = post.kl(&prior).unwrap();
        assert!(kl.abs() < 1e-12, "kl {kl}");
    }
}

#[test]
fn posterior_rejects_wrong_obs_dim() {
    let rssm = Rssm::new(tiny_cfg(Variant::Gaussian), 2);
    let b = rssm.init_belief(None);
    let (h, _) = rssm.transition_prior(&b, &[0.0]);
    assert!(rssm.posterior(&h, &[0.0; 3]).is_err());
}

#[test]
fn decoder_dims_and_mean_log_likelihood() {
    for rssm in both_variants() {
        let b = rssm.init_belief(Some(&mut RngStream::seed_from(8)));
        let obs = rssm.decode_observation(&b);
        assert_eq!(obs.dim(), rssm.cfg.obs_dim);
        let rew = rssm.decode_reward(&b);
        assert_eq!(rew.dim(), 1);
        let phys = rssm.decode_physical(&b);
        assert_eq!(phys.dim(), rssm.cfg.phys_dim);
        // Unit-scale Gaussian at its own mean: log p = −d/2 · ln 2π.
        let lp = obs.log_prob(obs.mean());
        let expect = -0.5 * obs.dim() as Real * (2.0 * PI).ln();
        assert!((lp - expect).abs() < 1e-10, "{lp} vs {expect}");
    }
}

#[test]
fn no_weight_sharing_between_prior_and_posterior() {
    let rssm = Rssm::new(tiny_cfg(Variant::Gaussian), 3);
    let prior = rssm.prior_param_names();
    let post = rssm.posterior_param_names();
    assert!(!prior.is_empty() && !post.is_empty());
    for p in &prior {
        assert!(!post.contains(p), "shared parameter {p}");
    }
}

#[test]
fn fuzzed_pipeline_stays_finite() {
    for rssm in both_variants() {
        let mut rng = RngStream::seed_from(11);
        for _ in 0..10_000 {
            let b = Belief {
                h: rng.uniform_vec_in(rssm.cfg.deter, -10.0, 10.0),
                z: rng.uniform_vec_in(rssm.cfg.stoch_event(), -10.0, 10.0),
            };
            let a = rng.uniform_vec_in(rssm.cfg.action_dim, -10.0, 10.0);
            let (h, prior) = rssm.transition_prior(&b, &a);
            assert!(h.iter().all(|v| v.is_finite()));
            let obs = rng.uniform_vec_in(rssm.cfg.obs_dim, -10.0, 10.0);
            let post = rssm.posterior(&h, &obs).unwrap();
            assert!(post.kl(&prior).unwrap().is_finite());
            let nb = Belief { h, z: post.sample(&mut rng) };
            let o = rssm.decode_observation(&nb);
            let r = rssm.decode_reward(&nb);
            let p = rssm.decode_physical(&nb);
            for d in [o, r, p] {
                assert!(d.mean().iter().all(|v| v.is_finite()));
            }
        }
    }
}

#[test]
fn plain_and_taped_paths_agree() {
    for rssm in both_variants() {
        let mut rng = RngStream::seed_from(21);
        for _ in 0..25 {
            let b = Belief {
                h: rng.uniform_vec_in(rssm.cfg.deter, -2.0, 2.0),
                z: rng.uniform_vec_in(rssm.cfg.stoch_event(), -1.0, 1.0),
            };
            let a = rng.uniform_vec_in(rssm.cfg.action_dim, -1.0, 1.0);
            let obs = rng.uniform_vec_in(rssm.cfg.obs_dim, -2.0, 2.0);

            let (h_plain, prior_plain) = rssm.transition_prior(&b, &a);
            let post_plain = rssm.posterior(&h_plain, &obs).unwrap();

            let mut t = Tape::new();
            let g = RssmGraph::new(&mut t, &rssm);
            let z0 = t.constant(DenseArray::matrix(1, b.z.len(), b.z.clone()));
            let h0 = t.constant(DenseArray::matrix(1, b.h.len(), b.h.clone()));
            let a0 = t.constant(DenseArray::matrix(1, a.len(), a.clone()));
            let h1 = g.transition(&mut t, h0, z0, a0);
            for (x, y) in t.value(h1).values().iter().zip(&h_plain) {
                assert!((x - y).abs() < 1e-12);
            }
            let prior_nodes = g.prior(&mut t, h1);
            let oi = t.constant(DenseArray::matrix(1, obs.len(), obs.clone()));
            let post_nodes = g.posterior(&mut t, h1, oi);

            match (&prior_plain, prior_nodes) {
                (StochDist::Gaussian(pg), DistNodes::Gaussian { mean, std }) => {
                    for (x, y) in t.value(mean).values().iter().zip(pg.mean()) {
                        assert!((x - y).abs() < 1e-12);
                    }
                    for (x, y) in t.value(std).values().iter().zip(pg.std()) {
                        assert!((x - y).abs() < 1e-12);
                    }
                }
                (StochDist::Categorical(pc), DistNodes::Categorical { logits }) => {
                    let flat: Vec<Real> = (0..rssm.cfg.groups)
                        .flat_map(|gi| t.value(logits).row(gi).to_vec())
                        .collect();
                    for (x, y) in flat.iter().zip(pc.logits().values()) {
                        assert!((x - y).abs() < 1e-12);
                    }
                }
                _ => unreachable!(),
            }
            // Posterior and prior share event shape on tape too.
            match (post_nodes, &post_plain) {
                (DistNodes::Gaussian { mean, .. }, StochDist::Gaussian(pg)) => {
                    for (x, y) in t.value(mean).values().iter().zip(pg.mean()) {
                        assert!((x - y).abs() < 1e-12);
                    }
                }
                (DistNodes::Categorical { logits }, StochDist::Categorical(pc)) => {
                    let flat: Vec<Real> = (0..rssm.cfg.groups)
                        .flat_map(|gi| t.value(logits).row(gi).to_vec())
                        .collect();
                    for (x, y) in flat.iter().zip(pc.logits().values()) {
                        assert!((x - y).abs() < 1e-12);
                    }
                }
                _ => unreachable!(),
            }

            let belief = Belief {
                h: h_plain.clone(),
                z: b.z.clone(),
            };
            let o_plain = rssm.decode_observation(&belief);
            let (o_node, _, _) = g.decode_means(&mut t, h1, z0);
            for (x, y) in t.value(o_node).values().iter().zip(o_plain.mean()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}

/// One-step model loss over the taped graph, checked against central finite
/// differences parameter by parameter.
fn graph_loss(rssm: &Rssm, params: &ParamStore, seed: u64) -> Real {
    let mut eval = rssm.clone();
    eval.params = params.clone();
    let mut t = Tape::new();
    let g = RssmGraph::new(&mut t, &eval);
    let mut rng = RngStream::seed_from(seed);
    let batch = 2;
    let h0 = g.init_h(&mut t, batch);
    let prior0 = g.prior(&mut t, h0);
    let z0 = g.sample_relaxed(&mut t, prior0, &mut rng);
    let a0 = t.constant(DenseArray::matrix(batch, 1, vec![0.3, -0.6]));
    let h1 = g.transition(&mut t, h0, z0, a0);
    let prior = g.prior(&mut t, h1);
    let obs = t.constant(DenseArray::matrix(
        batch,
        eval.cfg.obs_dim,
        (0..batch * eval.cfg.obs_dim)
            .map(|i| ((i * 13 % 7) as Real) / 7.0 - 0.4)
            .collect(),
    ));
    let post = g.posterior(&mut t, h1, obs);
    let z1 = g.sample_relaxed(&mut t, post, &mut rng);
    let (o_mean, r_mean, p_mean) = g.decode_means(&mut t, h1, z1);
    let o_target = t.constant(DenseArray::matrix(
        batch,
        eval.cfg.obs_dim,
        vec![0.2; batch * eval.cfg.obs_dim],
    ));
    let r_target = t.constant(DenseArray::matrix(batch, 1, vec![0.7, 0.1]));
    let p_target = t.constant(DenseArray::matrix(
        batch,
        eval.cfg.phys_dim,
        vec![-0.3; batch * eval.cfg.phys_dim],
    ));
    let nll_o = t.gaussian_nll_unit_std(o_mean, o_target);
    let nll_r = t.gaussian_nll_unit_std(r_mean, r_target);
    let nll_p = t.gaussian_nll_unit_std(p_mean, p_target);
    let kl = g.kl_sum(&mut t, post, prior);
    let a = t.add(nll_o, nll_r);
    let b = t.add(nll_p, kl);
    let loss = t.add(a, b);
    t.value(loss).item()
}

#[test]
#[cfg(not(feature = "single-precision"))]
fn one_step_model_loss_gradcheck_both_variants() {
    for rssm in both_variants() {
        let flat = rssm.params.flatten();
        let f = |v: &[Real]| graph_loss(&rssm, &rssm.params.unflatten(v), 99);

        // Analytic gradients through the same construction.
        let mut eval = rssm.clone();
        eval.params = rssm.params.clone();
        let mut t = Tape::new();
        let g = RssmGraph::new(&mut t, &eval);
        let mut rng = RngStream::seed_from(99);
        let batch = 2;
        let h0 = g.init_h(&mut t, batch);
        let prior0 = g.prior(&mut t, h0);
        let z0 = g.sample_relaxed(&mut t, prior0, &mut rng);
        let a0 = t.constant(DenseArray::matrix(batch, 1, vec![0.3, -0.6]));
        let h1 = g.transition(&mut t, h0, z0, a0);
        let prior = g.prior(&mut t, h1);
        let obs = t.constant(DenseArray::matrix(
            batch,
            eval.cfg.obs_dim,
            (0..batch * eval.cfg.obs_dim)
                .map(|i| ((i * 13 % 7) as Real) / 7.0 - 0.4)
                .collect(),
        ));
        let post = g.posterior(&mut t, h1, obs);
        let z1 = g.sample_relaxed(&mut t, post, &mut rng);
        let (o_mean, r_mean, p_mean) = g.decode_means(&mut t, h1, z1);
        let o_target = t.constant(DenseArray::matrix(
            batch,
            eval.cfg.obs_dim,
            vec![0.2; batch * eval.cfg.obs_dim],
        ));
        let r_target = t.constant(DenseArray::matrix(batch, 1, vec![0.7, 0.1]));
        let p_target = t.constant(DenseArray::matrix(
            batch,
            eval.cfg.phys_dim,
            vec![-0.3; batch * eval.cfg.phys_dim],
        ));
        let nll_o = t.gaussian_nll_unit_std(o_mean, o_target);
        let nll_r = t.gaussian_nll_unit_std(r_mean, r_target);
        let nll_p = t.gaussian_nll_unit_std(p_mean, p_target);
        let kl = g.kl_sum(&mut t, post, prior);
        let s1 = t.add(nll_o, nll_r);
        let s2 = t.add(nll_p, kl);
        let loss = t.add(s1, s2);
        let grads = t.backward(loss).unwrap();
        let analytic: Vec<Real> = rssm
            .params
            .collect_grads(&t, &g.leaves, &grads)
            .iter()
            .flat_map(|a| a.values().to_vec())
            .collect();

        let fd = central_diff(&f, &flat, 1e-5);
        let err = max_rel_err(&analytic, &fd);
        assert!(
            err < 1e-4,
            "{} variant gradcheck rel err {err}",
            rssm.cfg.variant.name()
        );
    }
}
