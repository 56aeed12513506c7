//! Recurrent latent dynamics model in two variants: Gaussian stochastic
//! state and categorical stochastic state, with observation, reward, and
//! physical-state decoders. Both variants expose identical operation
//! signatures; the variant is chosen by configuration.

mod graph;
mod model;
#[cfg(test)]
mod tests;

pub use graph::{DistNodes, RssmGraph};
pub use model::Rssm;

use crate::math::{
    kl_categorical, kl_diag_gaussian, CategoricalLatent, DiagonalGaussian, MathError, Real,
    RngStream,
};
use crate::nn::Activation;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Gaussian,
    Categorical,
}

impl Variant {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gaussian" => Some(Variant::Gaussian),
            "categorical" => Some(Variant::Categorical),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Gaussian => "gaussian",
            Variant::Categorical => "categorical",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RssmConfig {
    pub variant: Variant,
    /// Gaussian stochastic state size.
    pub stoch: usize,
    /// Categorical groups × classes.
    pub groups: usize,
    pub classes: usize,
    /// Deterministic recurrent state size.
    pub deter: usize,
    /// Width of every hidden layer.
    pub hidden: usize,
    /// Hidden layers in the encoder and decoders.
    pub depth: usize,
    pub activation: Activation,
    pub obs_dim: usize,
    pub action_dim: usize,
    /// Physical decoder target size (encoded state minus excluded parts).
    pub phys_dim: usize,
    /// When set, `init_belief` uses the prior mode instead of a sample.
    pub deterministic_init: bool,
}

impl RssmConfig {
    pub fn new(variant: Variant, obs_dim: usize, action_dim: usize, phys_dim: usize) -> Self {
        Self {
            variant,
            stoch: 30,
            groups: 32,
            classes: 32,
            deter: 200,
            hidden: 300,
            depth: 3,
            activation: Activation::Elu,
            obs_dim,
            action_dim,
            phys_dim,
            deterministic_init: false,
        }
    }

    /// Length of the stochastic state vector (one-hot-flattened for the
    /// categorical variant).
    pub fn stoch_event(&self) -> usize {
        match self.variant {
            Variant::Gaussian => self.stoch,
            Variant::Categorical => self.groups * self.classes,
        }
    }

    /// Output width of the prior / posterior heads.
    pub fn head_out(&self) -> usize {
        match self.variant {
            Variant::Gaussian => 2 * self.stoch,
            Variant::Categorical => self.groups * self.classes,
        }
    }

    pub fn feature_len(&self) -> usize {
        self.deter + self.stoch_event()
    }
}

/// The RSSM belief: deterministic recurrent state `h` and stochastic state
/// `z` (a sample; flattened one-hot rows for the categorical variant).
#[derive(Clone, Debug, PartialEq)]
pub struct Belief {
    pub h: Vec<Real>,
    pub z: Vec<Real>,
}

impl Belief {
    pub fn feature(&self) -> Vec<Real> {
        let mut f = self.h.clone();
        f.extend_from_slice(&self.z);
        f
    }
}

/// Distribution over the stochastic state, either variant.
#[derive(Clone, Debug)]
pub enum StochDist {
    Gaussian(DiagonalGaussian),
    Categorical(CategoricalLatent),
}

impl StochDist {
    pub fn event_len(&self) -> usize {
        match self {
            StochDist::Gaussian(g) => g.dim(),
            StochDist::Categorical(c) => c.groups() * c.classes(),
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> Vec<Real> {
        match self {
            StochDist::Gaussian(g) => g.sample(rng),
            StochDist::Categorical(c) => c.sample_one_hot(rng),
        }
    }

    /// Mean stochastic state for the Gaussian variant, categorical mode
    /// one-hot otherwise. Doubles as the deterministic-init value and the
    /// feature entering embeddings.
    pub fn mode(&self) -> Vec<Real> {
        match self {
            StochDist::Gaussian(g) => g.mean().to_vec(),
            StochDist::Categorical(c) => c.mode_one_hot(),
        }
    }

    pub fn kl(&self, other: &StochDist) -> Result<Real, MathError> {
        match (self, other) {
            (StochDist::Gaussian(p), StochDist::Gaussian(q)) => kl_diag_gaussian(p, q),
            (StochDist::Categorical(p), StochDist::Categorical(q)) => kl_categorical(p, q),
            _ => Err(MathError::DimensionMismatch {
                left: self.event_len(),
                right: other.event_len(),
                context: "kl between different variants",
            }),
        }
    }
}
