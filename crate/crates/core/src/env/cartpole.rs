//! Cartpole swing-up. State `[x, ẋ, θ, ω]` with θ measured from upright in
//! `(−π, π]`; the standard initial distribution hangs the pole near θ = π.
//! The cart runs on a finite rail: hitting an end stops it dead.

use crate::math::Real;

#[derive(Clone, Debug)]
pub struct CartpolePhysics {
    pub gravity: Real,
    pub cart_mass: Real,
    pub pole_mass: Real,
    /// Half the pole length.
    pub pole_half_length: Real,
    /// Force at action = ±1.
    pub force_scale: Real,
    /// Rail limit |x| in meters.
    pub rail_limit: Real,
}

impl Default for CartpolePhysics {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_half_length: 0.5,
            force_scale: 10.0,
            rail_limit: 2.4,
        }
    }
}

pub(super) fn deriv(p: &CartpolePhysics, s: &[Real], u: &[Real]) -> Vec<Real> {
    let (xdot, theta, omega) = (s[1], s[2], s[3]);
    let force = u[0] * p.force_scale;
    let total_mass = p.cart_mass + p.pole_mass;
    let ml = p.pole_mass * p.pole_half_length;
    let (sin_t, cos_t) = theta.sin_cos();
    let temp = (force + ml * omega * omega * sin_t) / total_mass;
    let alpha = (p.gravity * sin_t - cos_t * temp)
        / (p.pole_half_length * (4.0 / 3.0 - p.pole_mass * cos_t * cos_t / total_mass));
    let accel = temp - ml * alpha * cos_t / total_mass;
    vec![xdot, accel, omega, alpha]
}

/// Hard rail ends: clamp the cart and zero its velocity at the limit.
pub(super) fn apply_rail_limit(p: &CartpolePhysics, s: &mut [Real]) {
    let limit = p.rail_limit + 0.5;
    if s[0] > limit {
        s[0] = limit;
        s[1] = 0.0;
    } else if s[0] < -limit {
        s[0] = -limit;
        s[1] = 0.0;
    }
}

/// Tolerance-style shaping in `[0, 1]`: upright cosine term times a
/// centered term that decays quadratically toward the rail limit.
pub(super) fn reward(p: &CartpolePhysics, s: &[Real]) -> Real {
    let upright = 0.5 * (1.0 + s[2].cos());
    let centered = (1.0 - (s[0] / p.rail_limit) * (s[0] / p.rail_limit)).max(0.0);
    upright * centered
}
