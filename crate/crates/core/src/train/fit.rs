//! The training loop: warm-up random episodes, then alternating blocks of
//! model updates and scripted data collection, with both ensembles trained
//! at the same cadence on detached values.

use crate::ensemble::{EnsembleConfig, LatentEnsemble, PhysicalEnsemble};
use crate::env::World;
use crate::math::{Real, RngStream};
use crate::nn::Adam;
use crate::rssm::{Belief, Rssm, RssmConfig};
use crate::train::{
    elbo_loss, policy_action, ElboTerms, Episode, PolicyKind, ReplayBuffer, StepValues,
    TrainConfig, TrainError,
};

#[derive(Clone, Copy, Debug)]
pub struct TrainMetrics {
    pub step: u64,
    pub terms: ElboTerms,
    pub grad_norm: Real,
}

/// One training-log row; column order matches the CSV header
/// `step,elbo,recon_o,recon_r,recon_s,kl,grad_norm`.
#[derive(Clone, Copy, Debug)]
pub struct LogRow {
    pub step: u64,
    pub elbo: Real,
    pub recon_o: Real,
    pub recon_r: Real,
    pub recon_s: Real,
    pub kl: Real,
    pub grad_norm: Real,
}

impl LogRow {
    pub const CSV_HEADER: &'static str = "step,elbo,recon_o,recon_r,recon_s,kl,grad_norm";

    pub fn from_metrics(m: &TrainMetrics) -> Self {
        Self {
            step: m.step,
            elbo: m.terms.total,
            recon_o: m.terms.recon_o,
            recon_r: m.terms.recon_r,
            recon_s: m.terms.recon_s,
            kl: m.terms.kl,
            grad_norm: m.grad_norm,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.step, self.elbo, self.recon_o, self.recon_r, self.recon_s, self.kl, self.grad_norm
        )
    }
}

/// Run one episode under the given policy and append-ready storage:
/// per step `(o_t, a_t, r_t = reward(s_t), s_t)`.
pub fn collect_episode(
    world: &mut World,
    rssm: Option<&Rssm>,
    policy: PolicyKind,
    noise: Real,
    rng: &mut RngStream,
) -> Result<Episode, TrainError> {
    let steps = world.cfg.episode_len;
    let (mut state, mut obs) = world.reset(rng);
    // The prior-greedy policy filters a posterior belief alongside.
    let mut belief: Option<Belief> = match (policy, rssm) {
        (PolicyKind::PriorGreedy, Some(r)) => Some(r.init_belief(Some(rng))),
        _ => None,
    };
    let mut episode = Episode {
        obs: Vec::with_capacity(steps),
        actions: Vec::with_capacity(steps),
        rewards: Vec::with_capacity(steps),
        states: Vec::with_capacity(steps),
    };
    for _ in 0..steps {
        let model = match (&belief, rssm) {
            (Some(b), Some(r)) => Some((r, b)),
            _ => None,
        };
        let action = policy_action(policy, world, &state, model, noise, rng);

        episode.obs.push(obs.clone());
        episode.actions.push(action.clone());
        episode.rewards.push(world.reward(&state));
        episode.states.push(state.clone());

        if let (Some(b), Some(r)) = (&belief, rssm) {
            let (h, _) = r.transition_prior(b, &action);
            let post = r.posterior(&h, &obs)?;
            belief = Some(Belief {
                z: post.sample(rng),
                h,
            });
        }

        let (s, o, _r) = world.step(&action, rng)?;
        state = s;
        obs = o;
    }
    Ok(episode)
}

/// One model update: sample a batch, record the ELBO, clip the global
/// gradient norm, apply Adam. Returns metrics and the detached step values
/// for ensemble training.
pub fn train_step(
    rssm: &mut Rssm,
    opt: &mut Adam,
    buffer: &ReplayBuffer,
    world: &World,
    cfg: &TrainConfig,
    step: u64,
    rng: &mut RngStream,
) -> Result<(TrainMetrics, Vec<StepValues>), TrainError> {
    let batch = buffer.sample_batch(world, cfg.batch, cfg.seq_len, rng)?;
    let computation = elbo_loss(rssm, &batch, rng, false)?;
    if !computation.terms.total.is_finite() {
        return Err(TrainError::Numeric { step });
    }
    let grads = computation.tape.backward(computation.loss)?;
    let grad_arrays = rssm
        .params
        .collect_grads(&computation.tape, &computation.leaves, &grads);
    let grad_norm = opt.update(&mut rssm.params, grad_arrays);
    Ok((
        TrainMetrics {
            step,
            terms: computation.terms,
            grad_norm,
        },
        computation.steps,
    ))
}

pub struct FitResult {
    pub rssm: Rssm,
    pub latent: LatentEnsemble,
    pub physical: PhysicalEnsemble,
    pub log: Vec<LogRow>,
    pub buffer: ReplayBuffer,
    pub env_frames: u64,
}

/// Owns all trainable state during a fit. Kept public so tests can drive
/// partial schedules.
pub struct Trainer {
    pub rssm: Rssm,
    pub latent: LatentEnsemble,
    pub physical: PhysicalEnsemble,
    pub opt: Adam,
    pub buffer: ReplayBuffer,
    pub log: Vec<LogRow>,
    pub step: u64,
    /// Rows per ensemble update, subsampled from the ELBO batch.
    pub ensemble_rows: usize,
}

impl Trainer {
    pub fn new(
        rssm_cfg: RssmConfig,
        latent_cfg: EnsembleConfig,
        physical_cfg: EnsembleConfig,
        world: &World,
        cfg: &TrainConfig,
    ) -> Self {
        let rssm = Rssm::new(rssm_cfg.clone(), cfg.seed);
        let latent = LatentEnsemble::new(
            latent_cfg,
            rssm_cfg.deter,
            rssm_cfg.stoch_event(),
            rssm_cfg.action_dim,
            cfg.seed ^ 0xA11CE,
        );
        let physical = PhysicalEnsemble::new(
            physical_cfg,
            world.encoded_dim(),
            world.action_dim(),
            cfg.seed ^ 0xB0B,
        );
        Self {
            rssm,
            latent,
            physical,
            opt: Adam::new(cfg.lr, cfg.grad_clip),
            buffer: ReplayBuffer::new(),
            log: Vec::new(),
            step: 0,
            ensemble_rows: 256,
        }
    }

    /// One RSSM update plus one update of each ensemble on detached data.
    pub fn combined_step(
        &mut self,
        world: &World,
        cfg: &TrainConfig,
        train_rng: &mut RngStream,
        ens_rng: &mut RngStream,
    ) -> Result<TrainMetrics, TrainError> {
        self.step += 1;
        let (metrics, steps) =
            train_step(&mut self.rssm, &mut self.opt, &self.buffer, world, cfg, self.step, train_rng)?;
        self.log.push(LogRow::from_metrics(&metrics));

        let (inputs, targets) = LatentEnsemble::tuples_from_steps(&steps);
        let n = inputs.rows();
        let (inputs, targets) = if n > self.ensemble_rows {
            let idx: Vec<usize> = (0..self.ensemble_rows).map(|_| ens_rng.index(n)).collect();
            (gather(&inputs, &idx), gather(&targets, &idx))
        } else {
            (inputs, targets)
        };
        self.latent
            .inner
            .train_step(&inputs, &targets, ens_rng)
            .map_err(|_| TrainError::InsufficientData { needed: 1 })?;

        if let Some((pe_in, pe_tgt)) =
            PhysicalEnsemble::transitions_from_buffer(&self.buffer, world, self.ensemble_rows, ens_rng)
        {
            self.physical
                .inner
                .train_step(&pe_in, &pe_tgt, ens_rng)
                .map_err(|_| TrainError::InsufficientData { needed: 1 })?;
        }
        Ok(metrics)
    }
}

fn gather(a: &crate::math::DenseArray, idx: &[usize]) -> crate::math::DenseArray {
    let (_, m) = a.dims2();
    let mut out = Vec::with_capacity(idx.len() * m);
    for &i in idx {
        out.extend_from_slice(a.row(i));
    }
    crate::math::DenseArray::matrix(idx.len(), m, out)
}

/// Full training run: `warmup_episodes` random episodes, then alternating
/// `collect_interval` updates / one collected episode until the
/// environment-step budget (counted in simulated frames) is spent.
pub fn fit(
    world: &mut World,
    rssm_cfg: RssmConfig,
    latent_cfg: EnsembleConfig,
    physical_cfg: EnsembleConfig,
    cfg: &TrainConfig,
) -> Result<FitResult, TrainError> {
    let mut trainer = Trainer::new(rssm_cfg, latent_cfg, physical_cfg, world, cfg);
    let mut collect_rng = RngStream::derive(cfg.seed, 0xC0);
    let mut train_rng = RngStream::derive(cfg.seed, 0xC1);
    let mut ens_rng = RngStream::derive(cfg.seed, 0xC2);

    let frames_per_episode = (world.cfg.episode_len * world.cfg.action_repeat) as u64;
    let mut frames: u64 = 0;
    for _ in 0..cfg.warmup_episodes {
        let ep = collect_episode(world, None, PolicyKind::Random, 0.0, &mut collect_rng)?;
        trainer.buffer.push(ep);
        frames += frames_per_episode;
    }
    while frames < cfg.env_steps {
        for _ in 0..cfg.collect_interval {
            trainer.combined_step(world, cfg, &mut train_rng, &mut ens_rng)?;
        }
        let ep = collect_episode(
            world,
            Some(&trainer.rssm),
            cfg.policy,
            cfg.exploration_noise,
            &mut collect_rng,
        )?;
        trainer.buffer.push(ep);
        frames += frames_per_episode;
    }
    Ok(FitResult {
        rssm: trainer.rssm,
        latent: trainer.latent,
        physical: trainer.physical,
        log: trainer.log,
        buffer: trainer.buffer,
        env_frames: frames,
    })
}
