//! Data-collection policies: uniform random, scripted energy controllers,
//! and a one-step prior-greedy lookahead on the learned model.

use crate::env::{EnvKind, PhysicalState, World};
use crate::math::{Real, RngStream};
use crate::rssm::{Belief, Rssm};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyKind {
    Random,
    Scripted,
    PriorGreedy,
}

impl PolicyKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "random" => Some(PolicyKind::Random),
            "scripted" => Some(PolicyKind::Scripted),
            "prior-greedy" => Some(PolicyKind::PriorGreedy),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Random => "random",
            PolicyKind::Scripted => "scripted",
            PolicyKind::PriorGreedy => "prior-greedy",
        }
    }
}

/// Action for the current state. Scripted and prior-greedy policies add
/// clipped Gaussian exploration noise; the random policy is uniform.
pub fn policy_action(
    kind: PolicyKind,
    world: &World,
    state: &PhysicalState,
    model: Option<(&Rssm, &Belief)>,
    noise: Real,
    rng: &mut RngStream,
) -> Vec<Real> {
    match kind {
        PolicyKind::Random => (0..world.action_dim())
            .map(|_| rng.uniform_in(-1.0, 1.0))
            .collect(),
        PolicyKind::Scripted => {
            let base = scripted(world, state);
            add_noise(base, noise, rng)
        }
        PolicyKind::PriorGreedy => {
            let base = match model {
                Some((rssm, belief)) => prior_greedy(rssm, belief, world.action_dim()),
                None => scripted(world, state),
            };
            add_noise(base, noise, rng)
        }
    }
}

fn add_noise(mut a: Vec<Real>, noise: Real, rng: &mut RngStream) -> Vec<Real> {
    if noise > 0.0 {
        for v in &mut a {
            *v = (*v + noise * rng.standard_normal()).clamp(-1.0, 1.0);
        }
    }
    a
}

fn scripted(world: &World, state: &PhysicalState) -> Vec<Real> {
    match world.kind() {
        EnvKind::Pendulum => vec![pendulum_swing_up(world, state)],
        EnvKind::Cartpole => vec![cartpole_swing_up(world, state)],
    }
}

/// Energy-pumping swing-up: drive the mechanical energy to the upright
/// value, then hand over to a PD balance law near the top.
fn pendulum_swing_up(world: &World, state: &PhysicalState) -> Real {
    let p = &world.cfg.pendulum;
    let (theta, omega) = (state.values()[0], state.values()[1]);
    let inertia = p.mass * p.length * p.length;
    let energy = 0.5 * inertia * omega * omega + p.mass * p.gravity * p.length * theta.cos();
    let target = p.mass * p.gravity * p.length;
    if theta.cos() > 0.9 && omega.abs() < 2.5 {
        return (-4.0 * theta - 1.2 * omega).clamp(-1.0, 1.0);
    }
    let gap = target - energy;
    let direction = if omega.abs() < 1e-3 {
        1.0
    } else {
        omega.signum()
    };
    (0.8 * gap * direction).clamp(-1.0, 1.0)
}

/// Pole energy pumping through cart acceleration plus recentering, with a
/// PD balance law near the top.
fn cartpole_swing_up(world: &World, state: &PhysicalState) -> Real {
    let p = &world.cfg.cartpole;
    let (x, xdot, theta, omega) = (
        state.values()[0],
        state.values()[1],
        state.values()[2],
        state.values()[3],
    );
    if theta.cos() > 0.85 {
        return (-6.0 * theta - 1.5 * omega - 0.6 * x - 1.0 * xdot).clamp(-1.0, 1.0);
    }
    let ml = p.pole_mass * p.pole_half_length;
    let inertia = 4.0 / 3.0 * p.pole_mass * p.pole_half_length * p.pole_half_length;
    let energy = 0.5 * inertia * omega * omega + ml * p.gravity * theta.cos();
    let target = ml * p.gravity;
    let gap = target - energy;
    let pump = 6.0 * gap * omega.signum() * theta.cos().signum();
    let recenter = -0.4 * x - 0.5 * xdot;
    let kick = if omega.abs() < 1e-3 && theta.cos() < 0.0 {
        0.5
    } else {
        0.0
    };
    (pump + recenter + kick).clamp(-1.0, 1.0)
}

/// Evaluate a small action grid with one prior transition each and pick the
/// action whose predicted next belief decodes to the highest reward.
fn prior_greedy(rssm: &Rssm, belief: &Belief, action_dim: usize) -> Vec<Real> {
    let candidates = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let mut best = vec![0.0; action_dim];
    let mut best_reward = Real::NEG_INFINITY;
    for &c in &candidates {
        let action = vec![c; action_dim];
        let (h, prior) = rssm.transition_prior(belief, &action);
        let next = Belief {
            h,
            z: prior.mode(),
        };
        let r = rssm.decode_reward(&next).mean()[0];
        if r > best_reward {
            best_reward = r;
            best = action;
        }
    }
    best
}
