use super::*;
use crate::ensemble::EnsembleConfig;
use crate::env::{EnvConfig, EnvKind};
use crate::rssm::{RssmConfig, Variant};

fn setup(variant: Variant) -> (Rssm, World, LatentEnsemble) {
    let mut env_cfg = EnvConfig::new(EnvKind::Pendulum);
    env_cfg.seed = 7;
    env_cfg.episode_len = 60;
    let world = World::new(env_cfg);
    let mut cfg = RssmConfig::new(variant, world.obs_dim(), world.action_dim(), world.decoder_dim());
    cfg.stoch = 4;
    cfg.groups = 2;
    cfg.classes = 3;
    cfg.deter = 6;
    cfg.hidden = 10;
    cfg.depth = 1;
    let rssm = Rssm::new(cfg.clone(), 3);
    let ens = LatentEnsemble::new(
        EnsembleConfig {
            members: 2,
            depth: 1,
            width: 8,
            ..EnsembleConfig::default()
        },
        cfg.deter,
        cfg.stoch_event(),
        cfg.action_dim,
        11,
    );
    (rssm, world, ens)
}

fn spec(kind: RolloutKind, horizon: usize, warmup: usize) -> RolloutSpec {
    let mut s = RolloutSpec::new(kind);
    s.horizon = horizon;
    s.warmup = warmup;
    s.seed = 5;
    s
}

fn start() -> PhysicalState {
    PhysicalState(vec![2.0, 0.5])
}

fn beliefs_equal(a: &TrajStep, b: &TrajStep) -> bool {
    a.belief == b.belief && a.action == b.action && a.z_feature == b.z_feature
}

#[test]
fn defaults_match_reference_protocol() {
    let s = RolloutSpec::new(RolloutKind::Prior);
    assert_eq!(s.horizon, 50);
    assert_eq!(s.warmup, 3);
}

#[test]
fn warmup_exceeding_horizon_rejected() {
    let s = spec(RolloutKind::Prior, 4, 5);
    assert!(matches!(
        s.validate(),
        Err(RolloutError::InvalidSpec(_))
    ));
}

#[test]
fn rollouts_deterministic_given_seed() {
    for variant in [Variant::Gaussian, Variant::Categorical] {
        let (rssm, world, _) = setup(variant);
        let s = spec(RolloutKind::Prior, 12, 3);
        let run = || {
            let mut env = world.clone();
            let mut streams = RolloutStreams::derive(s.seed, 0);
            rollout(&rssm, None, &mut env, &s, &start(), &mut streams).unwrap()
        };
        let a = run();
        let b = run();
        for (x, y) in a.steps.iter().zip(&b.steps) {
            assert!(beliefs_equal(x, y));
            assert_eq!(x.reward_pred.to_bits(), y.reward_pred.to_bits());
        }
    }
}

#[test]
fn observation_counts_per_kind() {
    let (rssm, world, _) = setup(Variant::Gaussian);
    let horizon = 15;
    let warmup = 3;
    let counts = |kind: RolloutKind| -> u64 {
        let mut env = CountingEnv::new(world.clone());
        let s = spec(kind, horizon, warmup);
        let mut streams = RolloutStreams::derive(s.seed, 0);
        rollout(&rssm, None, &mut env, &s, &start(), &mut streams).unwrap();
        env.observe_calls
    };
    assert_eq!(counts(RolloutKind::Prior), warmup as u64);
    assert_eq!(counts(RolloutKind::Posterior), horizon as u64);
    assert_eq!(counts(RolloutKind::PosteriorInformed), (horizon - 1) as u64);
}

#[test]
fn all_kinds_agree_during_warmup() {
    for variant in [Variant::Gaussian, Variant::Categorical] {
        let (rssm, world, _) = setup(variant);
        let warmup = 4;
        let mut trajs = Vec::new();
        for kind in [
            RolloutKind::Prior,
            RolloutKind::Posterior,
            RolloutKind::PosteriorInformed,
        ] {
            let mut env = world.clone();
            let s = spec(kind, 10, warmup);
            let mut streams = RolloutStreams::derive(s.seed, 0);
            trajs.push(rollout(&rssm, None, &mut env, &s, &start(), &mut streams).unwrap());
        }
        for t in 0..warmup {
            assert!(
                beliefs_equal(&trajs[0].steps[t], &trajs[1].steps[t]),
                "{variant:?} prior vs posterior diverge at warm-up step {t}"
            );
            assert!(
                beliefs_equal(&trajs[0].steps[t], &trajs[2].steps[t]),
                "{variant:?} prior vs posterior-informed diverge at warm-up step {t}"
            );
            assert!(trajs.iter().all(|tr| tr.steps[t].warmup));
        }
        assert!(trajs.iter().all(|tr| !tr.steps[warmup].warmup));
    }
}

#[test]
fn horizon_equals_warmup_matches_posterior() {
    let (rssm, world, _) = setup(Variant::Gaussian);
    let horizon = 6;
    let run = |kind: RolloutKind| {
        let mut env = world.clone();
        let s = spec(kind, horizon, horizon);
        let mut streams = RolloutStreams::derive(s.seed, 0);
        rollout(&rssm, None, &mut env, &s, &start(), &mut streams).unwrap()
    };
    let prior = run(RolloutKind::Prior);
    let posterior = run(RolloutKind::Posterior);
    assert_eq!(prior.len(), horizon);
    for (a, b) in prior.steps.iter().zip(&posterior.steps) {
        assert!(beliefs_equal(a, b));
    }
}

#[test]
fn posterior_informed_single_step_equals_prior() {
    let (rssm, world, _) = setup(Variant::Gaussian);
    let warmup = 3;
    let horizon = warmup + 1;
    let run = |kind: RolloutKind| {
        let mut env = world.clone();
        let s = spec(kind, horizon, warmup);
        let mut streams = RolloutStreams::derive(s.seed, 0);
        rollout(&rssm, None, &mut env, &s, &start(), &mut streams).unwrap()
    };
    let prior = run(RolloutKind::Prior);
    let informed = run(RolloutKind::PosteriorInformed);
    for (a, b) in prior.steps.iter().zip(&informed.steps) {
        assert!(beliefs_equal(a, b));
    }
}

#[test]
fn uncertainty_presence_follows_spec() {
    let (rssm, world, ens) = setup(Variant::Gaussian);
    for kind in [
        RolloutKind::Prior,
        RolloutKind::Posterior,
        RolloutKind::PosteriorInformed,
    ] {
        let mut env = world.clone();
        let s = spec(kind, 9, 3);
        let mut streams = RolloutStreams::derive(s.seed, 0);
        let traj = rollout(&rssm, Some(&ens), &mut env, &s, &start(), &mut streams).unwrap();
        assert_eq!(traj.len(), 9);
        for (t, step) in traj.steps.iter().enumerate() {
            let expect_some = t >= 3 && kind != RolloutKind::Posterior;
            assert_eq!(step.uncertainty.is_some(), expect_some, "{kind:?} step {t}");
            assert_eq!(step.warmup, t < 3);
            if kind == RolloutKind::PosteriorInformed {
                assert_eq!(step.refreshed.is_some(), t >= 3 && t + 1 < 9);
            } else {
                assert!(step.refreshed.is_none());
            }
            if let Some(u) = step.uncertainty {
                assert!(u > 0.0);
            }
        }
    }
}

#[test]
fn batch_single_equals_direct_call_and_workers_agree() {
    let (rssm, world, ens) = setup(Variant::Gaussian);
    let s = spec(RolloutKind::Prior, 8, 2);
    let fixed = start();

    let direct = {
        let mut env = world.clone();
        let mut streams = RolloutStreams::derive(s.seed, 0);
        rollout(&rssm, Some(&ens), &mut env, &s, &fixed, &mut streams).unwrap()
    };
    let batch = batch_rollouts(
        &rssm,
        Some(&ens),
        &world,
        &s,
        1,
        1,
        &StartResolver::Fixed(&fixed),
    )
    .unwrap();
    assert_eq!(batch.len(), 1);
    for (a, b) in batch[0].steps.iter().zip(&direct.steps) {
        assert!(beliefs_equal(a, b));
        assert_eq!(a.uncertainty, b.uncertainty);
    }

    let w1 = batch_rollouts(&rssm, Some(&ens), &world, &s, 13, 1, &StartResolver::Reset).unwrap();
    let w8 = batch_rollouts(&rssm, Some(&ens), &world, &s, 13, 8, &StartResolver::Reset).unwrap();
    assert_eq!(w1.len(), 13);
    for (a, b) in w1.iter().zip(&w8) {
        assert_eq!(a.start, b.start);
        for (x, y) in a.steps.iter().zip(&b.steps) {
            assert!(beliefs_equal(x, y));
            assert_eq!(x.uncertainty, y.uncertainty);
        }
    }
}

#[test]
fn pool_starts_drawn_from_pool() {
    let (rssm, world, _) = setup(Variant::Gaussian);
    let s = spec(RolloutKind::Posterior, 4, 1);
    let pool = vec![
        PhysicalState(vec![0.1, 0.0]),
        PhysicalState(vec![1.0, -1.0]),
        PhysicalState(vec![-2.0, 2.0]),
    ];
    let trajs =
        batch_rollouts(&rssm, None, &world, &s, 20, 2, &StartResolver::Pool(&pool)).unwrap();
    for t in &trajs {
        assert!(pool.contains(&t.start));
    }
}
