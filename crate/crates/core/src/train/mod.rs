//! ELBO optimization, the sequence replay buffer, and the data-collection
//! loop (warm-up random episodes, then alternating model updates and
//! scripted collection).

mod elbo;
mod fit;
mod policy;

pub use elbo::{elbo_loss, ElboComputation, ElboTerms, StepValues};
pub use fit::{collect_episode, fit, train_step, FitResult, LogRow, TrainMetrics, Trainer};
pub use policy::{policy_action, PolicyKind};

use crate::env::{EnvError, PhysicalState, World};
use crate::math::{DenseArray, MathError, Real, RngStream};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("insufficient data: need at least one episode with {needed} steps")]
    InsufficientData { needed: usize },
    #[error("non-finite loss at training step {step}")]
    Numeric { step: u64 },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Math(#[from] MathError),
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    /// Model learning rate.
    pub lr: Real,
    /// Global gradient-norm clip.
    pub grad_clip: Real,
    /// Subsequences per update.
    pub batch: usize,
    /// Subsequence length.
    pub seq_len: usize,
    /// Random episodes collected before training starts.
    pub warmup_episodes: usize,
    /// Model updates between collected episodes.
    pub collect_interval: usize,
    /// Additive action noise during collection.
    pub exploration_noise: Real,
    /// Total environment-step budget, counted in simulated frames
    /// (agent steps × action repeat).
    pub env_steps: u64,
    pub policy: PolicyKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 6e-4,
            grad_clip: 100.0,
            batch: 50,
            seq_len: 50,
            warmup_episodes: 5,
            collect_interval: 100,
            exploration_noise: 0.3,
            env_steps: 20_000,
            policy: PolicyKind::Scripted,
            seed: 0,
        }
    }
}

/// One collected episode: aligned per-step `(observation, action, reward,
/// physical state)`, all the same length.
#[derive(Clone, Debug)]
pub struct Episode {
    pub obs: Vec<Vec<Real>>,
    pub actions: Vec<Vec<Real>>,
    pub rewards: Vec<Real>,
    pub states: Vec<PhysicalState>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    fn check_aligned(&self) {
        assert_eq!(self.obs.len(), self.actions.len());
        assert_eq!(self.obs.len(), self.rewards.len());
        assert_eq!(self.obs.len(), self.states.len());
    }
}

/// Episode storage. Capacity is unbounded at desk scale.
#[derive(Clone, Debug, Default)]
pub struct ReplayBuffer {
    episodes: Vec<Episode>,
}

/// Aligned subsequences: `len` step-major blocks of `[batch × ·]` arrays.
/// `phys` rows hold the physical decoder target encoding.
#[derive(Clone, Debug)]
pub struct SequenceBatch {
    pub batch: usize,
    pub len: usize,
    pub obs: Vec<DenseArray>,
    pub actions: Vec<DenseArray>,
    pub rewards: Vec<DenseArray>,
    pub phys: Vec<DenseArray>,
}

impl ReplayBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, episode: Episode) {
        episode.check_aligned();
        self.episodes.push(episode);
    }

    pub fn episodes(&self) -> &[Episode] {
        &self.episodes
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn total_steps(&self) -> usize {
        self.episodes.iter().map(|e| e.len()).sum()
    }

    /// Number of `(episode, start)` pairs a length-`l` subsequence can
    /// occupy without crossing an episode boundary.
    pub fn valid_starts(&self, l: usize) -> usize {
        self.episodes
            .iter()
            .map(|e| e.len().saturating_sub(l - 1))
            .sum()
    }

    /// Draw a `(episode, start)` pair uniformly over all valid pairs.
    pub fn sample_start(&self, l: usize, rng: &mut RngStream) -> Option<(usize, usize)> {
        let total = self.valid_starts(l);
        if total == 0 {
            return None;
        }
        let mut pick = rng.index(total);
        for (i, e) in self.episodes.iter().enumerate() {
            let n = e.len().saturating_sub(l - 1);
            if pick < n {
                return Some((i, pick));
            }
            pick -= n;
        }
        unreachable!("cumulative counts cover the draw")
    }

    /// Sample `b` subsequences of length `l` uniformly (with replacement
    /// across subsequences). Physical states are converted to the decoder
    /// target encoding of `world`.
    pub fn sample_batch(
        &self,
        world: &World,
        b: usize,
        l: usize,
        rng: &mut RngStream,
    ) -> Result<SequenceBatch, TrainError> {
        if self.valid_starts(l) == 0 {
            return Err(TrainError::InsufficientData { needed: l });
        }
        let obs_dim = world.obs_dim();
        let act_dim = world.action_dim();
        let phys_dim = world.decoder_dim();
        let starts: Vec<(usize, usize)> = (0..b)
            .map(|_| self.sample_start(l, rng).expect("checked nonempty"))
            .collect();
        let mut obs = Vec::with_capacity(l);
        let mut actions = Vec::with_capacity(l);
        let mut rewards = Vec::with_capacity(l);
        let mut phys = Vec::with_capacity(l);
        for t in 0..l {
            let mut o = Vec::with_capacity(b * obs_dim);
            let mut a = Vec::with_capacity(b * act_dim);
            let mut r = Vec::with_capacity(b);
            let mut p = Vec::with_capacity(b * phys_dim);
            for &(ei, si) in &starts {
                let e = &self.episodes[ei];
                let idx = si + t;
                o.extend_from_slice(&e.obs[idx]);
                a.extend_from_slice(&e.actions[idx]);
                r.push(e.rewards[idx]);
                p.extend_from_slice(&world.decoder_target(&e.states[idx]));
            }
            obs.push(DenseArray::matrix(b, obs_dim, o));
            actions.push(DenseArray::matrix(b, act_dim, a));
            rewards.push(DenseArray::matrix(b, 1, r));
            phys.push(DenseArray::matrix(b, phys_dim, p));
        }
        Ok(SequenceBatch {
            batch: b,
            len: l,
            obs,
            actions,
            rewards,
            phys,
        })
    }

    /// Uniform draw over every stored physical state.
    pub fn random_state(&self, rng: &mut RngStream) -> Option<&PhysicalState> {
        let total = self.total_steps();
        if total == 0 {
            return None;
        }
        let mut pick = rng.index(total);
        for e in &self.episodes {
            if pick < e.len() {
                return Some(&e.states[pick]);
            }
            pick -= e.len();
        }
        unreachable!()
    }

    pub fn all_states(&self) -> Vec<&PhysicalState> {
        self.episodes.iter().flat_map(|e| e.states.iter()).collect()
    }
}
