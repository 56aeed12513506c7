//! Plain (untaped) evaluation of the latent dynamics model, used by
//! rollouts, data generation, and diagnostics. Training goes through the
//! taped twin in [`crate::rssm::graph`]; a fuzz test pins the two together.

use crate::math::{
    CategoricalLatent, DenseArray, DiagonalGaussian, MathError, Real, RngStream,
};
use crate::nn::{layers::positive_transform_array, GruCell, Linear, Mlp, ParamStore};
use crate::rssm::{Belief, RssmConfig, StochDist, Variant};

#[derive(Clone, Debug)]
pub(crate) struct Layers {
    pub embed_za: Linear,
    pub gru: GruCell,
    pub prior_head: Mlp,
    pub encoder: Mlp,
    pub post_head: Mlp,
    pub dec_obs: Mlp,
    pub dec_rew: Mlp,
    pub dec_phys: Mlp,
}

/// The latent dynamics model: configuration, parameters, and layer wiring.
/// Evaluation is pure; training mutates a single-owner copy of `params`.
#[derive(Clone, Debug)]
pub struct Rssm {
    pub cfg: RssmConfig,
    pub params: ParamStore,
    pub(crate) layers: Layers,
}

impl Rssm {
    pub fn new(cfg: RssmConfig, seed: u64) -> Self {
        let mut rng = RngStream::derive(seed, 0x51);
        let mut ps = ParamStore::new();
        let act = cfg.activation;
        let embed_za = Linear::register(
            &mut ps,
            "embed_za",
            cfg.stoch_event() + cfg.action_dim,
            cfg.hidden,
            &mut rng,
        );
        let gru = GruCell::register(&mut ps, "gru", cfg.hidden, cfg.deter, &mut rng);
        let prior_head = Mlp::register(
            &mut ps,
            "prior",
            cfg.deter,
            cfg.hidden,
            1,
            cfg.head_out(),
            act,
            &mut rng,
        );
        let encoder = Mlp::register(
            &mut ps,
            "enc",
            cfg.obs_dim,
            cfg.hidden,
            cfg.depth,
            cfg.hidden,
            act,
            &mut rng,
        );
        let post_head = Mlp::register(
            &mut ps,
            "post",
            cfg.deter + cfg.hidden,
            cfg.hidden,
            1,
            cfg.head_out(),
            act,
            &mut rng,
        );
        let feat = cfg.deter + cfg.stoch_event();
        let dec_obs = Mlp::register(
            &mut ps,
            "dec_obs",
            feat,
            cfg.hidden,
            cfg.depth,
            cfg.obs_dim,
            act,
            &mut rng,
        );
        let dec_rew = Mlp::register(&mut ps, "dec_rew", feat, cfg.hidden, cfg.depth, 1, act, &mut rng);
        let dec_phys = Mlp::register(
            &mut ps,
            "dec_phys",
            feat,
            cfg.hidden,
            cfg.depth,
            cfg.phys_dim,
            crate::nn::Activation::Elu,
            &mut rng,
        );
        let layers = Layers {
            embed_za,
            gru,
            prior_head,
            encoder,
            post_head,
            dec_obs,
            dec_rew,
            dec_phys,
        };
        Self { cfg, params: ps, layers }
    }

    /// Convert a head output row into the stochastic-state distribution.
    pub(crate) fn head_to_dist(&self, out: &[Real]) -> StochDist {
        match self.cfg.variant {
            Variant::Gaussian => {
                let s = self.cfg.stoch;
                let mean = out[..s].to_vec();
                let raw = DenseArray::vector(out[s..].to_vec());
                let std = positive_transform_array(&raw).into_values();
                StochDist::Gaussian(DiagonalGaussian::new(mean, std).expect("positive std"))
            }
            Variant::Categorical => StochDist::Categorical(CategoricalLatent::new(
                DenseArray::matrix(self.cfg.groups, self.cfg.classes, out.to_vec()),
            )),
        }
    }

    /// Initial belief: zero recurrent state, stochastic state drawn from the
    /// prior head at `h = 0` (or its mode under deterministic init / when no
    /// stream is supplied).
    pub fn init_belief(&self, rng: Option<&mut RngStream>) -> Belief {
        let h = vec![0.0; self.cfg.deter];
        let dist = self.prior_dist(&h);
        let z = match rng {
            Some(r) if !self.cfg.deterministic_init => dist.sample(r),
            _ => dist.mode(),
        };
        Belief { h, z }
    }

    /// Prior head applied to a deterministic state.
    pub fn prior_dist(&self, h: &[Real]) -> StochDist {
        let hm = DenseArray::matrix(1, h.len(), h.to_vec());
        let out = self.layers.prior_head.forward(&self.params, &hm);
        self.head_to_dist(out.values())
    }

    /// Advance the recurrent state with `(z, a)` and produce the prior over
    /// the next stochastic state: `h' = GRU(embed(z, a), h)`.
    pub fn transition_prior(&self, belief: &Belief, action: &[Real]) -> (Vec<Real>, StochDist) {
        assert_eq!(action.len(), self.cfg.action_dim, "action size");
        let mut za = belief.z.clone();
        za.extend_from_slice(action);
        let za = DenseArray::matrix(1, za.len(), za);
        let embedded = self
            .layers
            .embed_za
            .forward(&self.params, &za)
            .map(|v| self.cfg.activation.apply(v));
        let h = DenseArray::matrix(1, belief.h.len(), belief.h.clone());
        let h_next = self.layers.gru.forward(&self.params, &embedded, &h);
        let dist = self.prior_dist(h_next.values());
        (h_next.into_values(), dist)
    }

    /// Posterior over the stochastic state given the advanced deterministic
    /// state and a real observation.
    pub fn posterior(&self, h: &[Real], obs: &[Real]) -> Result<StochDist, MathError> {
        if obs.len() != self.cfg.obs_dim {
            return Err(MathError::DimensionMismatch {
                left: obs.len(),
                right: self.cfg.obs_dim,
                context: "posterior observation",
            });
        }
        let om = DenseArray::matrix(1, obs.len(), obs.to_vec());
        let embed = self.layers.encoder.forward(&self.params, &om);
        let mut joint = h.to_vec();
        joint.extend_from_slice(embed.values());
        let jm = DenseArray::matrix(1, joint.len(), joint);
        let out = self.layers.post_head.forward(&self.params, &jm);
        Ok(self.head_to_dist(out.values()))
    }

    fn decode_with(&self, mlp: &Mlp, belief: &Belief) -> DiagonalGaussian {
        let feat = DenseArray::matrix(1, belief.h.len() + belief.z.len(), belief.feature());
        let mean = mlp.forward(&self.params, &feat);
        DiagonalGaussian::unit_std(mean.into_values())
    }

    /// Observation decoder: Gaussian with learned mean and fixed unit scale.
    pub fn decode_observation(&self, belief: &Belief) -> DiagonalGaussian {
        self.decode_with(&self.layers.dec_obs, belief)
    }

    /// Reward decoder (scalar).
    pub fn decode_reward(&self, belief: &Belief) -> DiagonalGaussian {
        self.decode_with(&self.layers.dec_rew, belief)
    }

    /// Physical-state decoder over the encoded state with excluded
    /// components removed. Decoding sin/cos pairs back to angles is the
    /// environment's `decode_prediction`.
    pub fn decode_physical(&self, belief: &Belief) -> DiagonalGaussian {
        self.decode_with(&self.layers.dec_phys, belief)
    }

    /// Names of prior-head vs posterior-head parameters, for the structural
    /// no-weight-tying check.
    pub fn prior_param_names(&self) -> Vec<String> {
        self.params
            .names()
            .filter(|n| n.starts_with("prior."))
            .map(|s| s.to_string())
            .collect()
    }

    pub fn posterior_param_names(&self) -> Vec<String> {
        self.params
            .names()
            .filter(|n| n.starts_with("post.") || n.starts_with("enc."))
            .map(|s| s.to_string())
            .collect()
    }
}
