//! Deterministic toy control environments with exact state replay: the
//! ground-truth oracle the diagnostics compare against.
//!
//! Two environments are built in: pendulum swing-up (state `[θ, ω]`) and
//! cartpole swing-up (state `[x, ẋ, θ, ω]`), both integrated with fixed-step
//! RK4 under an action repeat. Observations come from a frozen random
//! two-layer tanh feature map of the encoded state plus Gaussian noise, so
//! the representation-learning problem is nontrivial without conv stacks.

mod cartpole;
mod pendulum;

pub use cartpole::CartpolePhysics;
pub use pendulum::{pendulum_energy, PendulumPhysics};

use crate::math::{DenseArray, Real, RngStream, PI};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid state: component {component} ({name}) is {value}, violates {bound}")]
    InvalidState {
        component: usize,
        name: &'static str,
        value: Real,
        bound: String,
    },
    #[error("state has {got} components, environment expects {expect}")]
    WrongDimension { got: usize, expect: usize },
    #[error("environment not initialized (call reset first)")]
    NotInitialized,
    #[error("unknown environment id {0:?}")]
    UnknownEnv(String),
    #[error("unknown OOD state {name:?}; catalog: {catalog:?}")]
    UnknownOod { name: String, catalog: Vec<String> },
}

/// Physical state: raw component values in the environment's documented
/// order. Angles are reported in `(−π, π]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalState(pub Vec<Real>);

impl PhysicalState {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[Real] {
        &self.0
    }
}

/// A named, physically valid but off-distribution start state.
#[derive(Clone, Debug)]
pub struct OodStart {
    pub name: &'static str,
    pub state: PhysicalState,
    pub interpretation: &'static str,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvKind {
    Pendulum,
    Cartpole,
}

impl EnvKind {
    pub fn parse(s: &str) -> Result<Self, EnvError> {
        match s {
            "pendulum" => Ok(EnvKind::Pendulum),
            "cartpole" => Ok(EnvKind::Cartpole),
            other => Err(EnvError::UnknownEnv(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvKind::Pendulum => "pendulum",
            EnvKind::Cartpole => "cartpole",
        }
    }
}

#[derive(Clone, Debug)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub obs_dim: usize,
    /// Observation noise σ_o.
    pub obs_noise: Real,
    pub action_repeat: usize,
    /// Integration step in seconds.
    pub dt: Real,
    /// Seed freezing the observation feature map.
    pub seed: u64,
    /// Episode length in agent steps.
    pub episode_len: usize,
    pub pendulum: PendulumPhysics,
    pub cartpole: CartpolePhysics,
}

impl EnvConfig {
    pub fn new(kind: EnvKind) -> Self {
        Self {
            kind,
            obs_dim: 16,
            obs_noise: 0.01,
            action_repeat: 2,
            dt: 0.01,
            seed: 0,
            episode_len: 400,
            pendulum: PendulumPhysics::default(),
            cartpole: CartpolePhysics::default(),
        }
    }
}

/// Normalize an angle into `(−π, π]`. Exactly idempotent: values already in
/// range are returned unchanged.
pub fn normalize_angle(a: Real) -> Real {
    if a > -PI && a <= PI {
        return a;
    }
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Distance between two angles on the circle, in `[0, π]`.
pub fn circular_distance(a: Real, b: Real) -> Real {
    normalize_angle(a - b).abs()
}

/// Classic fixed-step RK4 for `ds/dt = f(s, u)`.
fn rk4_step(
    s: &[Real],
    u: &[Real],
    dt: Real,
    f: impl Fn(&[Real], &[Real]) -> Vec<Real>,
) -> Vec<Real> {
    let k1 = f(s, u);
    let mid1: Vec<Real> = s.iter().zip(&k1).map(|(&x, &k)| x + 0.5 * dt * k).collect();
    let k2 = f(&mid1, u);
    let mid2: Vec<Real> = s.iter().zip(&k2).map(|(&x, &k)| x + 0.5 * dt * k).collect();
    let k3 = f(&mid2, u);
    let end: Vec<Real> = s.iter().zip(&k3).map(|(&x, &k)| x + dt * k).collect();
    let k4 = f(&end, u);
    s.iter()
        .zip(&k1)
        .zip(k2.iter().zip(&k3))
        .zip(&k4)
        .map(|(((&x, &a), (&b, &c)), &d)| x + dt / 6.0 * (a + 2.0 * b + 2.0 * c + d))
        .collect()
}

/// Frozen random feature map from encoded physical state to observations.
#[derive(Clone, Debug)]
struct ObsMap {
    w1: DenseArray,
    b1: Vec<Real>,
    w2: DenseArray,
    b2: Vec<Real>,
    input_scale: Vec<Real>,
    hidden: usize,
}

const OBS_MAP_STREAM: u64 = 0xb5;

impl ObsMap {
    fn new(enc_dim: usize, obs_dim: usize, input_scale: Vec<Real>, seed: u64) -> Self {
        let mut rng = RngStream::derive(seed, OBS_MAP_STREAM);
        let hidden = 32;
        let s1 = 1.5 / (enc_dim as Real).sqrt();
        let w1 = DenseArray::matrix(
            hidden,
            enc_dim,
            (0..hidden * enc_dim)
                .map(|_| rng.standard_normal() * s1)
                .collect(),
        );
        let b1 = (0..hidden).map(|_| rng.standard_normal() * 0.3).collect();
        let s2 = 1.5 / (hidden as Real).sqrt();
        let w2 = DenseArray::matrix(
            obs_dim,
            hidden,
            (0..obs_dim * hidden)
                .map(|_| rng.standard_normal() * s2)
                .collect(),
        );
        let b2 = (0..obs_dim).map(|_| rng.standard_normal() * 0.3).collect();
        Self {
            w1,
            b1,
            w2,
            b2,
            input_scale,
            hidden,
        }
    }

    fn apply(&self, enc: &[Real]) -> Vec<Real> {
        let scaled: Vec<Real> = enc
            .iter()
            .zip(&self.input_scale)
            .map(|(&v, &s)| v * s)
            .collect();
        let mut hid = vec![0.0; self.hidden];
        for (i, h) in hid.iter_mut().enumerate() {
            let row = self.w1.row(i);
            let mut acc = self.b1[i];
            for (w, x) in row.iter().zip(&scaled) {
                acc += w * x;
            }
            *h = acc.tanh();
        }
        let obs_dim = self.b2.len();
        let mut out = vec![0.0; obs_dim];
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.w2.row(i);
            let mut acc = self.b2[i];
            for (w, x) in row.iter().zip(&hid) {
                acc += w * x;
            }
            *o = acc.tanh();
        }
        out
    }
}

/// A toy control environment instance: single-owner mutable, cheap to clone.
#[derive(Clone, Debug)]
pub struct World {
    pub cfg: EnvConfig,
    obs_map: ObsMap,
    state: Option<PhysicalState>,
    /// Number of action components clipped back into `[−1, 1]` so far.
    pub clip_warnings: u64,
}

impl World {
    pub fn new(cfg: EnvConfig) -> Self {
        let enc_dim = kind_encoded_dim(cfg.kind);
        let obs_map = ObsMap::new(
            enc_dim,
            cfg.obs_dim,
            kind_obs_input_scale(cfg.kind),
            cfg.seed,
        );
        Self {
            cfg,
            obs_map,
            state: None,
            clip_warnings: 0,
        }
    }

    pub fn kind(&self) -> EnvKind {
        self.cfg.kind
    }

    pub fn state_dim(&self) -> usize {
        match self.cfg.kind {
            EnvKind::Pendulum => 2,
            EnvKind::Cartpole => 4,
        }
    }

    pub fn action_dim(&self) -> usize {
        1
    }

    pub fn obs_dim(&self) -> usize {
        self.cfg.obs_dim
    }

    /// Which raw components are angles.
    pub fn angle_mask(&self) -> &'static [bool] {
        match self.cfg.kind {
            EnvKind::Pendulum => &[true, false],
            EnvKind::Cartpole => &[false, false, true, false],
        }
    }

    /// Which raw components are positions (rather than velocities).
    pub fn position_mask(&self) -> &'static [bool] {
        match self.cfg.kind {
            EnvKind::Pendulum => &[true, false],
            EnvKind::Cartpole => &[true, false, true, false],
        }
    }

    /// Raw components excluded from the physical decoder target (the
    /// forward x-position, where the environment has one).
    pub fn excluded_components(&self) -> &'static [usize] {
        match self.cfg.kind {
            EnvKind::Pendulum => &[],
            EnvKind::Cartpole => &[0],
        }
    }

    pub fn component_names(&self) -> &'static [&'static str] {
        match self.cfg.kind {
            EnvKind::Pendulum => &["theta", "omega"],
            EnvKind::Cartpole => &["x", "xdot", "theta", "thetadot"],
        }
    }

    pub fn validate(&self, s: &PhysicalState) -> Result<(), EnvError> {
        if s.dim() != self.state_dim() {
            return Err(EnvError::WrongDimension {
                got: s.dim(),
                expect: self.state_dim(),
            });
        }
        let names = self.component_names();
        for (i, &v) in s.values().iter().enumerate() {
            if !v.is_finite() {
                return Err(EnvError::InvalidState {
                    component: i,
                    name: names[i],
                    value: v,
                    bound: "finite".to_string(),
                });
            }
        }
        let bounds: &[(usize, Real)] = match self.cfg.kind {
            EnvKind::Pendulum => &[(1, 12.0)],
            EnvKind::Cartpole => &[(0, 3.0), (1, 10.0), (3, 20.0)],
        };
        for &(i, limit) in bounds {
            if s.values()[i].abs() > limit {
                return Err(EnvError::InvalidState {
                    component: i,
                    name: names[i],
                    value: s.values()[i],
                    bound: format!("|{}| <= {}", names[i], limit),
                });
            }
        }
        Ok(())
    }

    /// Named off-distribution start states, all validity-checked.
    pub fn ood_catalog(&self) -> Vec<OodStart> {
        match self.cfg.kind {
            EnvKind::Pendulum => vec![OodStart {
                name: "hanging-spin",
                state: PhysicalState(vec![PI, 8.0]),
                interpretation: "hanging position spinning at +8 rad/s, beyond any swing-up energy",
            }],
            EnvKind::Cartpole => vec![OodStart {
                name: "edge-drift",
                state: PhysicalState(vec![2.0, -2.0, PI, 0.0]),
                interpretation: "cart at +2 m drifting back at -2 m/s with the pole hanging",
            }],
        }
    }

    pub fn ood_start(&self, name: &str) -> Result<OodStart, EnvError> {
        self.ood_catalog()
            .into_iter()
            .find(|o| o.name == name)
            .ok_or_else(|| EnvError::UnknownOod {
                name: name.to_string(),
                catalog: self
                    .ood_catalog()
                    .iter()
                    .map(|o| o.name.to_string())
                    .collect(),
            })
    }

    /// Draw from the standard initial-state distribution without touching
    /// the environment's own state.
    pub fn sample_initial_state(&self, rng: &mut RngStream) -> PhysicalState {
        self.initial_state(rng)
    }

    fn initial_state(&self, rng: &mut RngStream) -> PhysicalState {
        match self.cfg.kind {
            EnvKind::Pendulum => {
                // θ uniform over (−π, π], ω near zero.
                let theta = PI - 2.0 * PI * rng.uniform();
                let omega = rng.uniform_in(-0.05, 0.05);
                PhysicalState(vec![theta, omega])
            }
            EnvKind::Cartpole => {
                let x = rng.uniform_in(-0.05, 0.05);
                let xdot = rng.uniform_in(-0.05, 0.05);
                let theta = normalize_angle(PI + rng.uniform_in(-0.05, 0.05));
                let thetadot = rng.uniform_in(-0.05, 0.05);
                PhysicalState(vec![x, xdot, theta, thetadot])
            }
        }
    }

    /// Draw the standard initial-state distribution and observe it.
    pub fn reset(&mut self, rng: &mut RngStream) -> (PhysicalState, Vec<Real>) {
        let s = self.initial_state(rng);
        self.state = Some(s.clone());
        let obs = self.observe(rng);
        (s, obs)
    }

    /// Set the internal state exactly to `s`. Returns the noiseless
    /// observation of `s`; use [`World::observe`] for a noisy read.
    pub fn reset_to_state(&mut self, s: &PhysicalState) -> Result<Vec<Real>, EnvError> {
        self.validate(s)?;
        self.state = Some(s.clone());
        Ok(self.obs_map.apply(&self.encode_physical(s)))
    }

    pub fn state(&self) -> Option<&PhysicalState> {
        self.state.as_ref()
    }

    /// Noisy observation of the current state.
    pub fn observe(&self, rng: &mut RngStream) -> Vec<Real> {
        let s = self.state.as_ref().expect("environment not initialized");
        let mut obs = self.obs_map.apply(&self.encode_physical(s));
        if self.cfg.obs_noise > 0.0 {
            for o in &mut obs {
                *o += self.cfg.obs_noise * rng.standard_normal();
            }
        }
        obs
    }

    /// Advance dynamics by action-repeat × dt (no observation drawn).
    pub fn step_dynamics(&mut self, action: &[Real]) -> Result<(PhysicalState, Real), EnvError> {
        let s = self.state.as_ref().ok_or(EnvError::NotInitialized)?.clone();
        let (next, clipped) = self.advance(&s, action);
        self.clip_warnings += clipped;
        let reward = self.reward(&next);
        self.state = Some(next.clone());
        Ok((next, reward))
    }

    /// Advance dynamics and observe: `(state, observation, reward)`.
    pub fn step(
        &mut self,
        action: &[Real],
        rng: &mut RngStream,
    ) -> Result<(PhysicalState, Vec<Real>, Real), EnvError> {
        let (s, r) = self.step_dynamics(action)?;
        let obs = self.observe(rng);
        Ok((s, obs, r))
    }

    /// One action-repeat advance shared by `step` and `replay`, so the two
    /// agree bit for bit. Returns the next state and how many action
    /// components were clipped.
    fn advance(&self, s: &PhysicalState, action: &[Real]) -> (PhysicalState, u64) {
        let mut clipped = 0;
        let u: Vec<Real> = action
            .iter()
            .map(|&a| {
                if !(-1.0..=1.0).contains(&a) {
                    clipped += 1;
                    a.clamp(-1.0, 1.0)
                } else {
                    a
                }
            })
            .collect();
        let mut cur = s.0.clone();
        for _ in 0..self.cfg.action_repeat {
            cur = match self.cfg.kind {
                EnvKind::Pendulum => {
                    let p = &self.cfg.pendulum;
                    rk4_step(&cur, &u, self.cfg.dt, |s, u| pendulum::deriv(p, s, u))
                }
                EnvKind::Cartpole => {
                    let p = &self.cfg.cartpole;
                    rk4_step(&cur, &u, self.cfg.dt, |s, u| cartpole::deriv(p, s, u))
                }
            };
        }
        for (i, &is_angle) in self.angle_mask().iter().enumerate() {
            if is_angle {
                cur[i] = normalize_angle(cur[i]);
            }
        }
        if self.cfg.kind == EnvKind::Cartpole {
            cartpole::apply_rail_limit(&self.cfg.cartpole, &mut cur);
        }
        (PhysicalState(cur), clipped)
    }

    /// State-based reward, evaluated on the post-step state.
    pub fn reward(&self, s: &PhysicalState) -> Real {
        match self.cfg.kind {
            EnvKind::Pendulum => pendulum::reward(s.values()),
            EnvKind::Cartpole => cartpole::reward(&self.cfg.cartpole, s.values()),
        }
    }

    /// Deterministic ground-truth trajectory for an action sequence:
    /// `(states, rewards)`, one entry per action, observation noise ignored.
    pub fn replay(
        &self,
        s0: &PhysicalState,
        actions: &[Vec<Real>],
    ) -> Result<(Vec<PhysicalState>, Vec<Real>), EnvError> {
        self.validate(s0)?;
        let mut states = Vec::with_capacity(actions.len());
        let mut rewards = Vec::with_capacity(actions.len());
        let mut cur = s0.clone();
        for a in actions {
            let (next, _) = self.advance(&cur, a);
            rewards.push(self.reward(&next));
            states.push(next.clone());
            cur = next;
        }
        Ok((states, rewards))
    }

    /// Encode a raw state: angles expand to `(sin θ, cos θ)` in component
    /// order, linear components pass through.
    pub fn encode_physical(&self, s: &PhysicalState) -> Vec<Real> {
        let mut out = Vec::with_capacity(self.encoded_dim());
        for (i, &v) in s.values().iter().enumerate() {
            if self.angle_mask()[i] {
                out.push(v.sin());
                out.push(v.cos());
            } else {
                out.push(v);
            }
        }
        out
    }

    pub fn encoded_dim(&self) -> usize {
        kind_encoded_dim(self.cfg.kind)
    }

    /// Inverse of [`World::encode_physical`]: recover every raw component,
    /// angles via `atan2(sin, cos)`. Off-circle sin/cos pairs project onto
    /// the nearest angle.
    pub fn decode_encoded(&self, enc: &[Real]) -> PhysicalState {
        assert_eq!(enc.len(), self.encoded_dim(), "encoded state size");
        let mut out = Vec::with_capacity(self.state_dim());
        let mut k = 0;
        for i in 0..self.state_dim() {
            if self.angle_mask()[i] {
                out.push(enc[k].atan2(enc[k + 1]));
                k += 2;
            } else {
                out.push(enc[k]);
                k += 1;
            }
        }
        PhysicalState(out)
    }

    /// Encoded state with the excluded components removed: the physical
    /// decoder's regression target.
    pub fn decoder_target(&self, s: &PhysicalState) -> Vec<Real> {
        let mut out = Vec::with_capacity(self.decoder_dim());
        for (i, &v) in s.values().iter().enumerate() {
            if self.excluded_components().contains(&i) {
                continue;
            }
            if self.angle_mask()[i] {
                out.push(v.sin());
                out.push(v.cos());
            } else {
                out.push(v);
            }
        }
        out
    }

    pub fn decoder_dim(&self) -> usize {
        let mut d = 0;
        for i in 0..self.state_dim() {
            if self.excluded_components().contains(&i) {
                continue;
            }
            d += if self.angle_mask()[i] { 2 } else { 1 };
        }
        d
    }

    /// Decode a physical-decoder prediction back to raw components:
    /// `(component index, value)` pairs covering every non-excluded
    /// component, angles recovered via `atan2(sin, cos)`.
    pub fn decode_prediction(&self, pred: &[Real]) -> Vec<(usize, Real)> {
        assert_eq!(pred.len(), self.decoder_dim(), "decoder prediction size");
        let mut out = Vec::new();
        let mut k = 0;
        for i in 0..self.state_dim() {
            if self.excluded_components().contains(&i) {
                continue;
            }
            if self.angle_mask()[i] {
                let theta = pred[k].atan2(pred[k + 1]);
                out.push((i, theta));
                k += 2;
            } else {
                out.push((i, pred[k]));
                k += 1;
            }
        }
        out
    }
}

fn kind_encoded_dim(kind: EnvKind) -> usize {
    match kind {
        EnvKind::Pendulum => 3,
        EnvKind::Cartpole => 5,
    }
}

/// Per-component scaling applied inside the observation feature map so that
/// velocities do not saturate the tanh layers. Does not affect
/// `encode_physical`.
fn kind_obs_input_scale(kind: EnvKind) -> Vec<Real> {
    match kind {
        EnvKind::Pendulum => vec![1.0, 1.0, 0.125],
        EnvKind::Cartpole => vec![0.4, 0.2, 1.0, 1.0, 0.1],
    }
}

#[cfg(test)]
mod tests;
