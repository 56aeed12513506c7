//! Pendulum swing-up. State `[θ, ω]` with θ measured from upright in
//! `(−π, π]`. The torque budget is too small to lift the pole directly, so
//! reaching the top requires energy pumping.

use crate::math::Real;

#[derive(Clone, Debug)]
pub struct PendulumPhysics {
    pub gravity: Real,
    pub mass: Real,
    pub length: Real,
    pub damping: Real,
    /// Torque at action = ±1.
    pub max_torque: Real,
}

impl Default for PendulumPhysics {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            mass: 1.0,
            length: 1.0,
            damping: 0.05,
            max_torque: 2.0,
        }
    }
}

pub(super) fn deriv(p: &PendulumPhysics, s: &[Real], u: &[Real]) -> Vec<Real> {
    let theta = s[0];
    let omega = s[1];
    let inertia = p.mass * p.length * p.length;
    let torque = u[0] * p.max_torque;
    let alpha = (p.gravity / p.length) * theta.sin() + (torque - p.damping * omega) / inertia;
    vec![omega, alpha]
}

/// Upright cosine shaping in `[0, 1]`, maximal at θ = 0.
pub(super) fn reward(s: &[Real]) -> Real {
    0.5 * (1.0 + s[0].cos())
}

/// Total mechanical energy `½ m l² ω² + m g l cos θ` (zero torque, zero
/// damping conserves it). Used by the integrator drift oracle.
pub fn pendulum_energy(p: &PendulumPhysics, s: &[Real]) -> Real {
    let inertia = p.mass * p.length * p.length;
    0.5 * inertia * s[1] * s[1] + p.mass * p.gravity * p.length * s[0].cos()
}
