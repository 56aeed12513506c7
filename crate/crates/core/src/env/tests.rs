use super::pendulum::pendulum_energy;
use super::*;

fn pendulum_world(seed: u64) -> World {
    let mut cfg = EnvConfig::new(EnvKind::Pendulum);
    cfg.seed = seed;
    World::new(cfg)
}

fn cartpole_world(seed: u64) -> World {
    let mut cfg = EnvConfig::new(EnvKind::Cartpole);
    cfg.seed = seed;
    World::new(cfg)
}

#[test]
fn upright_equilibrium_is_fixed_point() {
    let mut cfg = EnvConfig::new(EnvKind::Pendulum);
    cfg.obs_noise = 0.0;
    let mut world = World::new(cfg);
    let up = PhysicalState(vec![0.0, 0.0]);
    world.reset_to_state(&up).unwrap();
    let (s, r) = world.step_dynamics(&[0.0]).unwrap();
    assert!(s.values()[0].abs() < 1e-9 && s.values()[1].abs() < 1e-9);
    assert!((r - 1.0).abs() < 1e-12, "reward {r} should be maximal");
}

#[test]
fn undamped_energy_drift_below_tolerance() {
    let mut cfg = EnvConfig::new(EnvKind::Pendulum);
    cfg.pendulum.damping = 0.0;
    cfg.obs_noise = 0.0;
    let mut world = World::new(cfg);
    world.reset_to_state(&PhysicalState(vec![2.0, 0.0])).unwrap();
    let p = world.cfg.pendulum.clone();
    let e0 = pendulum_energy(&p, world.state().unwrap().values());
    let mut worst: Real = 0.0;
    for _ in 0..1000 {
        world.step_dynamics(&[0.0]).unwrap();
        let e = pendulum_energy(&p, world.state().unwrap().values());
        worst = worst.max(((e - e0) / e0).abs());
    }
    assert!(worst < 1e-4, "relative energy drift {worst}");
}

#[test]
fn trajectories_bit_identical_for_same_seed() {
    let run = || {
        let mut world = pendulum_world(3);
        let mut rng = RngStream::seed_from(10);
        let (_, mut obs) = world.reset(&mut rng);
        let mut record = Vec::new();
        for i in 0..50 {
            let a = ((i as Real) * 0.37).sin();
            let (s, o, r) = world.step(&[a], &mut rng).unwrap();
            record.push((s.0.clone(), o.clone(), r));
            obs = o;
        }
        (record, obs)
    };
    let (a, _) = run();
    let (b, _) = run();
    for ((sa, oa, ra), (sb, ob, rb)) in a.iter().zip(&b) {
        assert_eq!(sa, sb);
        assert_eq!(oa, ob);
        assert_eq!(ra.to_bits(), rb.to_bits());
    }
}

#[test]
fn reset_same_seed_identical() {
    let mut w1 = pendulum_world(5);
    let mut w2 = pendulum_world(5);
    let (s1, o1) = w1.reset(&mut RngStream::seed_from(9));
    let (s2, o2) = w2.reset(&mut RngStream::seed_from(9));
    assert_eq!(s1, s2);
    assert_eq!(o1, o2);
}

#[test]
fn reset_angle_distribution_uniform_chi_squared() {
    let mut world = pendulum_world(1);
    let mut rng = RngStream::seed_from(20);
    let bins = 20;
    let n = 10_000;
    let mut counts = vec![0usize; bins];
    for _ in 0..n {
        let (s, _) = world.reset(&mut rng);
        let theta = s.values()[0];
        assert!(theta > -PI && theta <= PI);
        let mut b = ((theta + PI) / (2.0 * PI) * bins as Real) as usize;
        if b >= bins {
            b = bins - 1;
        }
        counts[b] += 1;
    }
    let expected = n as Real / bins as Real;
    let chi2: Real = counts
        .iter()
        .map(|&c| {
            let d = c as Real - expected;
            d * d / expected
        })
        .sum();
    // df = 19, 1% critical value.
    assert!(chi2 < 36.191, "chi-squared {chi2}");
}

#[test]
fn reset_to_state_exact_and_validated() {
    let mut world = pendulum_world(2);
    let s = PhysicalState(vec![1.234567, -3.21]);
    world.reset_to_state(&s).unwrap();
    assert_eq!(world.state().unwrap(), &s);

    let nan = PhysicalState(vec![Real::NAN, 0.0]);
    let err = world.reset_to_state(&nan).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("theta") && msg.contains("finite"), "{msg}");

    let too_fast = PhysicalState(vec![0.0, 40.0]);
    let msg = world.reset_to_state(&too_fast).unwrap_err().to_string();
    assert!(msg.contains("omega"), "{msg}");
}

#[test]
fn ood_catalog_entries_are_valid() {
    for world in [pendulum_world(0), cartpole_world(0)] {
        for entry in world.ood_catalog() {
            world
                .validate(&entry.state)
                .unwrap_or_else(|e| panic!("{} invalid: {e}", entry.name));
            assert!(!entry.interpretation.is_empty());
        }
    }
    let mut w = pendulum_world(0);
    let entry = w.ood_start("hanging-spin").unwrap();
    w.reset_to_state(&entry.state).unwrap();
    let err = w.ood_start("nope").unwrap_err();
    assert!(err.to_string().contains("hanging-spin"));
}

#[test]
fn replay_empty_and_repeatable() {
    let world = pendulum_world(4);
    let s0 = PhysicalState(vec![0.5, 0.0]);
    let (states, rewards) = world.replay(&s0, &[]).unwrap();
    assert!(states.is_empty() && rewards.is_empty());

    let actions: Vec<Vec<Real>> = (0..40).map(|i| vec![((i * 7) % 5) as Real / 2.5 - 1.0]).collect();
    let a = world.replay(&s0, &actions).unwrap();
    let b = world.replay(&s0, &actions).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.0.len(), actions.len());
}

#[test]
fn replay_matches_stepwise_loop_exactly() {
    for mut world in [pendulum_world(6), cartpole_world(6)] {
        world.cfg.obs_noise = 0.0;
        let s0 = match world.kind() {
            EnvKind::Pendulum => PhysicalState(vec![2.5, 1.0]),
            EnvKind::Cartpole => PhysicalState(vec![0.3, -0.5, 2.0, 0.7]),
        };
        let actions: Vec<Vec<Real>> =
            (0..60).map(|i| vec![((i as Real) * 0.71).cos()]).collect();
        let (replay_states, replay_rewards) = world.replay(&s0, &actions).unwrap();

        world.reset_to_state(&s0).unwrap();
        for (t, a) in actions.iter().enumerate() {
            let (s, r) = world.step_dynamics(a).unwrap();
            assert_eq!(s, replay_states[t], "state diverged at step {t}");
            assert_eq!(r.to_bits(), replay_rewards[t].to_bits());
        }
    }
}

#[test]
fn encode_physical_angle_pairs() {
    let world = pendulum_world(0);
    let enc = world.encode_physical(&PhysicalState(vec![0.0, 3.0]));
    assert_eq!(enc, vec![0.0, 1.0, 3.0]);
    let enc = world.encode_physical(&PhysicalState(vec![PI / 2.0, 0.0]));
    assert!((enc[0] - 1.0).abs() < 1e-12 && enc[1].abs() < 1e-12);
}

#[test]
fn arctan2_round_trip() {
    let world = cartpole_world(0);
    let mut rng = RngStream::seed_from(14);
    for _ in 0..1000 {
        let s = PhysicalState(vec![
            rng.uniform_in(-2.0, 2.0),
            rng.uniform_in(-3.0, 3.0),
            normalize_angle(rng.uniform_in(-PI, PI)),
            rng.uniform_in(-5.0, 5.0),
        ]);
        let target = world.decoder_target(&s);
        let decoded = world.decode_prediction(&target);
        // x excluded; remaining components recovered.
        assert_eq!(decoded.len(), 3);
        for (idx, value) in decoded {
            assert!(
                (value - s.values()[idx]).abs() < 1e-12,
                "component {idx}: {value} vs {}",
                s.values()[idx]
            );
        }
    }
}

#[test]
fn normalize_angle_idempotent_fuzz() {
    let mut rng = RngStream::seed_from(15);
    for _ in 0..10_000 {
        let a = rng.uniform_in(-50.0, 50.0);
        let once = normalize_angle(a);
        let twice = normalize_angle(once);
        assert_eq!(once.to_bits(), twice.to_bits(), "angle {a}");
        assert!(once > -PI && once <= PI);
    }
    assert_eq!(normalize_angle(-PI), PI);
}

#[test]
fn circular_distance_wrap_case() {
    let d = circular_distance(PI - 0.01, -PI + 0.01);
    assert!((d - 0.02).abs() < 1e-12, "distance {d}");
}

#[test]
fn observation_map_frozen_across_instances() {
    let w1 = pendulum_world(42);
    let w2 = pendulum_world(42);
    let w3 = pendulum_world(43);
    let s = PhysicalState(vec![1.0, 2.0]);
    let o1 = w1.obs_map.apply(&w1.encode_physical(&s));
    let o2 = w2.obs_map.apply(&w2.encode_physical(&s));
    let o3 = w3.obs_map.apply(&w3.encode_physical(&s));
    assert_eq!(o1, o2);
    assert_ne!(o1, o3);
    assert_eq!(o1.len(), 16);
}

#[test]
fn out_of_bounds_action_clipped_with_counter() {
    let mut world = pendulum_world(7);
    world.reset_to_state(&PhysicalState(vec![1.0, 0.0])).unwrap();
    let (s_clipped, _) = world.step_dynamics(&[5.0]).unwrap();
    assert_eq!(world.clip_warnings, 1);
    let mut world2 = pendulum_world(7);
    world2.reset_to_state(&PhysicalState(vec![1.0, 0.0])).unwrap();
    let (s_max, _) = world2.step_dynamics(&[1.0]).unwrap();
    assert_eq!(s_clipped, s_max);
    assert_eq!(world2.clip_warnings, 0);
}

#[test]
fn uninitialized_step_errors() {
    let mut world = pendulum_world(0);
    assert!(matches!(
        world.step_dynamics(&[0.0]),
        Err(EnvError::NotInitialized)
    ));
}

#[test]
fn cartpole_rail_stops_cart() {
    let mut world = cartpole_world(0);
    world
        .reset_to_state(&PhysicalState(vec![2.8, 9.0, PI, 0.0]))
        .unwrap();
    for _ in 0..200 {
        world.step_dynamics(&[1.0]).unwrap();
    }
    let s = world.state().unwrap();
    assert!(s.values()[0] <= world.cfg.cartpole.rail_limit + 0.5 + 1e-9);
    world.validate(s).unwrap();
}

#[test]
fn rewards_bounded_unit_interval() {
    let mut rng = RngStream::seed_from(30);
    for world in [pendulum_world(1), cartpole_world(1)] {
        for _ in 0..500 {
            let s = match world.kind() {
                EnvKind::Pendulum => {
                    PhysicalState(vec![rng.uniform_in(-PI, PI), rng.uniform_in(-8.0, 8.0)])
                }
                EnvKind::Cartpole => PhysicalState(vec![
                    rng.uniform_in(-2.9, 2.9),
                    rng.uniform_in(-5.0, 5.0),
                    rng.uniform_in(-PI, PI),
                    rng.uniform_in(-8.0, 8.0),
                ]),
            };
            let r = world.reward(&s);
            assert!((0.0..=1.0).contains(&r), "reward {r} out of range");
        }
    }
}
