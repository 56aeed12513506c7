//! The three rollout protocols with warm-up handling.
//!
//! All kinds share the first `warmup` posterior-driven steps bit for bit.
//! After warm-up:
//!
//! - prior rollouts sample every stochastic state from the transition
//!   model and never read an observation again;
//! - posterior rollouts refresh from the representation model with the
//!   real observation at every step;
//! - posterior-informed rollouts record a one-step prior prediction while
//!   filtering the underlying state through the posterior.
//!
//! Observation access goes through the [`RolloutEnv`] trait so a counting
//! test double can prove the no-peeking contract.

#[cfg(test)]
mod tests;

use crate::ensemble::LatentEnsemble;
use crate::env::{EnvError, PhysicalState, World};
use crate::math::{MathError, Real, RngStream};
use crate::rssm::{Belief, Rssm};
use crate::train::{policy_action, PolicyKind};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RolloutError {
    #[error("invalid rollout spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Math(#[from] MathError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RolloutKind {
    Prior,
    Posterior,
    PosteriorInformed,
}

impl RolloutKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "prior" => Some(RolloutKind::Prior),
            "posterior" => Some(RolloutKind::Posterior),
            "posterior-informed" => Some(RolloutKind::PosteriorInformed),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RolloutKind::Prior => "prior",
            RolloutKind::Posterior => "posterior",
            RolloutKind::PosteriorInformed => "posterior-informed",
        }
    }
}

/// Where a rollout starts.
#[derive(Clone, Debug, PartialEq)]
pub enum StartSpec {
    /// Draw from the environment's initial-state distribution.
    Reset,
    /// Uniform draw from a pool of stored states (the replay buffer).
    BufferRandom,
    /// The selected in-distribution state.
    Id,
    /// A named catalog entry.
    Ood(String),
}

#[derive(Clone, Debug)]
pub struct RolloutSpec {
    pub kind: RolloutKind,
    /// Horizon T.
    pub horizon: usize,
    /// Posterior warm-up steps W, `0 ≤ W ≤ T`.
    pub warmup: usize,
    pub policy: PolicyKind,
    pub noise: Real,
    pub start: StartSpec,
    pub seed: u64,
}

impl RolloutSpec {
    pub fn new(kind: RolloutKind) -> Self {
        Self {
            kind,
            horizon: 50,
            warmup: 3,
            policy: PolicyKind::Scripted,
            noise: 0.3,
            start: StartSpec::Reset,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), RolloutError> {
        if self.warmup > self.horizon {
            return Err(RolloutError::InvalidSpec(format!(
                "warmup {} exceeds horizon {}",
                self.warmup, self.horizon
            )));
        }
        Ok(())
    }
}

/// Narrow environment surface a rollout is allowed to touch. Observation
/// reads are explicit so they can be counted.
pub trait RolloutEnv {
    fn reset_to(&mut self, s: &PhysicalState) -> Result<(), EnvError>;
    fn observe(&mut self, rng: &mut RngStream) -> Vec<Real>;
    fn step_dynamics(&mut self, action: &[Real]) -> Result<(PhysicalState, Real), EnvError>;
    fn current_state(&self) -> PhysicalState;
    fn world(&self) -> &World;
}

impl RolloutEnv for World {
    fn reset_to(&mut self, s: &PhysicalState) -> Result<(), EnvError> {
        self.reset_to_state(s).map(|_| ())
    }

    fn observe(&mut self, rng: &mut RngStream) -> Vec<Real> {
        World::observe(self, rng)
    }

    fn step_dynamics(&mut self, action: &[Real]) -> Result<(PhysicalState, Real), EnvError> {
        World::step_dynamics(self, action)
    }

    fn current_state(&self) -> PhysicalState {
        self.state().expect("initialized").clone()
    }

    fn world(&self) -> &World {
        self
    }
}

/// Test double that counts observation reads.
pub struct CountingEnv {
    pub inner: World,
    pub observe_calls: u64,
}

impl CountingEnv {
    pub fn new(inner: World) -> Self {
        Self {
            inner,
            observe_calls: 0,
        }
    }
}

impl RolloutEnv for CountingEnv {
    fn reset_to(&mut self, s: &PhysicalState) -> Result<(), EnvError> {
        self.inner.reset_to_state(s).map(|_| ())
    }

    fn observe(&mut self, rng: &mut RngStream) -> Vec<Real> {
        self.observe_calls += 1;
        self.inner.observe(rng)
    }

    fn step_dynamics(&mut self, action: &[Real]) -> Result<(PhysicalState, Real), EnvError> {
        World::step_dynamics(&mut self.inner, action)
    }

    fn current_state(&self) -> PhysicalState {
        self.inner.state().expect("initialized").clone()
    }

    fn world(&self) -> &World {
        &self.inner
    }
}

/// Independent random streams for one rollout, derived from
/// `(seed, rollout index)` so batches are order-deterministic under any
/// worker count.
pub struct RolloutStreams {
    pub latent: RngStream,
    pub obs: RngStream,
    pub policy: RngStream,
    pub start: RngStream,
}

impl RolloutStreams {
    pub fn derive(seed: u64, index: u64) -> Self {
        Self {
            latent: RngStream::derive(seed, index * 4),
            obs: RngStream::derive(seed, index * 4 + 1),
            policy: RngStream::derive(seed, index * 4 + 2),
            start: RngStream::derive(seed, index * 4 + 3),
        }
    }
}

/// One recorded rollout step.
#[derive(Clone, Debug)]
pub struct TrajStep {
    /// Belief recorded at this step (the prediction, for prior kinds).
    pub belief: Belief,
    /// Mean stochastic state (Gaussian) or mode one-hot (categorical) of
    /// the distribution the step's `z` was drawn from.
    pub z_feature: Vec<Real>,
    /// Action chosen at this step.
    pub action: Vec<Real>,
    /// Reward decoder mean.
    pub reward_pred: Real,
    /// Physical decoder mean (decoder-target encoding).
    pub phys_pred: Vec<Real>,
    /// Ensemble disagreement about the transition into this step
    /// (post-warm-up prior kinds only).
    pub uncertainty: Option<Real>,
    pub warmup: bool,
    /// Posterior-refreshed belief (posterior-informed rollouts only).
    pub refreshed: Option<Belief>,
}

#[derive(Clone, Debug)]
pub struct LatentTrajectory {
    pub kind: RolloutKind,
    pub start: PhysicalState,
    pub steps: Vec<TrajStep>,
}

impl LatentTrajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn actions(&self) -> Vec<Vec<Real>> {
        self.steps.iter().map(|s| s.action.clone()).collect()
    }
}

/// Run one rollout from `s0` under `spec`.
pub fn rollout<E: RolloutEnv>(
    rssm: &Rssm,
    ensemble: Option<&LatentEnsemble>,
    env: &mut E,
    spec: &RolloutSpec,
    s0: &PhysicalState,
    streams: &mut RolloutStreams,
) -> Result<LatentTrajectory, RolloutError> {
    spec.validate()?;
    env.reset_to(s0)?;
    let horizon = spec.horizon;
    let warmup = spec.warmup;
    let mut belief = rssm.init_belief(Some(&mut streams.latent));
    let mut prev_action = vec![0.0; rssm.cfg.action_dim];
    let mut steps = Vec::with_capacity(horizon);

    for t in 0..horizon {
        let is_warmup = t < warmup;
        let uncertainty = match (ensemble, spec.kind, is_warmup) {
            (Some(ens), RolloutKind::Prior | RolloutKind::PosteriorInformed, false) => {
                Some(ens.disagreement(&belief.h, &belief.z, &prev_action)?)
            }
            _ => None,
        };

        let (h, prior) = rssm.transition_prior(&belief, &prev_action);

        let posterior_step = is_warmup || spec.kind == RolloutKind::Posterior;
        let (z, z_feature, refreshed) = if posterior_step {
            let obs = env.observe(&mut streams.obs);
            let post = rssm.posterior(&h, &obs)?;
            let z = post.sample(&mut streams.latent);
            (z, post.mode(), None)
        } else {
            match spec.kind {
                RolloutKind::Prior => {
                    let z = prior.sample(&mut streams.latent);
                    (z, prior.mode(), None)
                }
                RolloutKind::PosteriorInformed => {
                    let z = prior.sample(&mut streams.latent);
                    let refreshed = if t + 1 < horizon {
                        let obs = env.observe(&mut streams.obs);
                        let post = rssm.posterior(&h, &obs)?;
                        Some(Belief {
                            z: post.sample(&mut streams.latent),
                            h: h.clone(),
                        })
                    } else {
                        None
                    };
                    (z, prior.mode(), refreshed)
                }
                RolloutKind::Posterior => unreachable!(),
            }
        };

        let recorded = Belief { h, z };
        let reward_pred = rssm.decode_reward(&recorded).mean()[0];
        let phys_pred = rssm.decode_physical(&recorded).mean().to_vec();

        let state = env.current_state();
        let action = policy_action(
            spec.policy,
            env.world(),
            &state,
            Some((rssm, &recorded)),
            spec.noise,
            &mut streams.policy,
        );
        env.step_dynamics(&action)?;

        // The posterior-refreshed belief carries the filtering forward;
        // the recorded prediction is what diagnostics consume.
        let next_belief = match (&refreshed, spec.kind) {
            (Some(r), RolloutKind::PosteriorInformed) => r.clone(),
            _ => recorded.clone(),
        };
        steps.push(TrajStep {
            belief: recorded,
            z_feature,
            action: action.clone(),
            reward_pred,
            phys_pred,
            uncertainty,
            warmup: is_warmup,
            refreshed,
        });
        belief = next_belief;
        prev_action = action;
    }

    Ok(LatentTrajectory {
        kind: spec.kind,
        start: s0.clone(),
        steps,
    })
}

/// How `batch_rollouts` picks a start state per rollout.
pub enum StartResolver<'a> {
    Fixed(&'a PhysicalState),
    Pool(&'a [PhysicalState]),
    Reset,
}

impl StartResolver<'_> {
    fn resolve(&self, world: &World, rng: &mut RngStream) -> PhysicalState {
        match self {
            StartResolver::Fixed(s) => (*s).clone(),
            StartResolver::Pool(pool) => pool[rng.index(pool.len())].clone(),
            StartResolver::Reset => world.sample_initial_state(rng),
        }
    }
}

/// `count` independent seeded rollouts; outputs are ordered by rollout
/// index and identical for any worker count.
pub fn batch_rollouts(
    rssm: &Rssm,
    ensemble: Option<&LatentEnsemble>,
    world_proto: &World,
    spec: &RolloutSpec,
    count: usize,
    workers: usize,
    starts: &StartResolver,
) -> Result<Vec<LatentTrajectory>, RolloutError> {
    spec.validate()?;
    let workers = workers.max(1);
    let mut results: Vec<Option<LatentTrajectory>> = (0..count).map(|_| None).collect();
    let chunk = count.div_ceil(workers);

    std::thread::scope(|scope| -> Result<(), RolloutError> {
        let mut handles = Vec::new();
        for (w, slot_chunk) in results.chunks_mut(chunk).enumerate() {
            let base = w * chunk;
            handles.push(scope.spawn(move || -> Result<(), RolloutError> {
                let mut world = world_proto.clone();
                for (offset, slot) in slot_chunk.iter_mut().enumerate() {
                    let index = (base + offset) as u64;
                    let mut streams = RolloutStreams::derive(spec.seed, index);
                    let s0 = starts.resolve(&world, &mut streams.start);
                    let traj = rollout(rssm, ensemble, &mut world, spec, &s0, &mut streams)?;
                    *slot = Some(traj);
                }
                Ok(())
            }));
        }
        for h in handles {
            h.join().expect("rollout worker panicked")?;
        }
        Ok(())
    })?;

    Ok(results.into_iter().map(|r| r.expect("filled")).collect())
}
