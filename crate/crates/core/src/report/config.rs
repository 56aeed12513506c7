//! Strict sectioned key=value configuration with documented defaults.

use crate::ensemble::EnsembleConfig;
use crate::env::{EnvConfig, EnvKind};
use crate::math::Real;
use crate::nn::Activation;
use crate::report::CliError;
use crate::rollout::RolloutKind;
use crate::rssm::{RssmConfig, Variant};
use crate::train::{PolicyKind, TrainConfig};
use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Clone, Debug)]
pub struct RolloutSettings {
    pub horizon: usize,
    pub warmup: usize,
    pub count: usize,
    pub noise: Real,
    pub policy: PolicyKind,
}

#[derive(Clone, Debug)]
pub struct DiagSettings {
    pub bins: usize,
    pub knn: usize,
    /// Which rollout kinds feed the vector field: prior, posterior, both.
    pub field_kinds: String,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub master_seed: u64,
    pub workers: usize,
    pub out_dir: PathBuf,
    pub env: EnvConfig,
    pub variant: Variant,
    pub model: ModelSettings,
    pub train: TrainConfig,
    pub latent_ens: EnsembleConfig,
    pub phys_ens: EnsembleConfig,
    pub rollout: RolloutSettings,
    pub diag: DiagSettings,
}

/// Model sizes as configured (dimensions that depend on the environment
/// are resolved in [`RunConfig::rssm_config`]).
#[derive(Clone, Debug)]
pub struct ModelSettings {
    pub stoch: usize,
    pub groups: usize,
    pub classes: usize,
    pub deter: usize,
    pub hidden: usize,
    pub depth: usize,
    pub activation: Activation,
    pub deterministic_init: bool,
}

impl RunConfig {
    pub fn default_for(kind: EnvKind) -> Self {
        let mut env = EnvConfig::new(kind);
        env.seed = 0;
        Self {
            master_seed: 0,
            workers: 1,
            out_dir: PathBuf::from("out"),
            env,
            variant: Variant::Gaussian,
            model: ModelSettings {
                stoch: 30,
                groups: 32,
                classes: 32,
                deter: 200,
                hidden: 300,
                depth: 3,
                activation: Activation::Elu,
                deterministic_init: false,
            },
            train: TrainConfig::default(),
            latent_ens: EnsembleConfig::default(),
            phys_ens: EnsembleConfig {
                depth: 3,
                layer_norm: false,
                ..EnsembleConfig::default()
            },
            rollout: RolloutSettings {
                horizon: 50,
                warmup: 3,
                count: 1000,
                noise: 0.3,
                policy: PolicyKind::Scripted,
            },
            diag: DiagSettings {
                bins: 40,
                knn: 100,
                field_kinds: "both".to_string(),
            },
        }
    }

    /// Model configuration with environment-derived dimensions resolved.
    pub fn rssm_config(&self, world: &crate::env::World) -> RssmConfig {
        let mut cfg = RssmConfig::new(
            self.variant,
            world.obs_dim(),
            world.action_dim(),
            world.decoder_dim(),
        );
        cfg.stoch = self.model.stoch;
        cfg.groups = self.model.groups;
        cfg.classes = self.model.classes;
        cfg.deter = self.model.deter;
        cfg.hidden = self.model.hidden;
        cfg.depth = self.model.depth;
        cfg.activation = self.model.activation;
        cfg.deterministic_init = self.model.deterministic_init;
        cfg
    }

    /// Which rollout kinds feed the vector field.
    pub fn field_kind_list(&self) -> Vec<RolloutKind> {
        match self.diag.field_kinds.as_str() {
            "prior" => vec![RolloutKind::Prior],
            "posterior" => vec![RolloutKind::Posterior],
            _ => vec![RolloutKind::Prior, RolloutKind::Posterior],
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::Config(format!("invalid value {v:?} for key {key}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(CliError::Config(format!(
            "invalid boolean {v:?} for key {key}"
        ))),
    }
}

/// Parse the strict sectioned format. Unknown sections and keys are
/// rejected with the offending name.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    // First pass: collect (section, key) → value, validating syntax.
    let mut values: BTreeMap<(String, String), String> = BTreeMap::new();
    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| CliError::Config(format!("line {}: bad section header", lineno + 1)))?;
            section = name.trim().to_string();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("line {}: expected key = value", lineno + 1))
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if values
            .insert((section.clone(), key.clone()), value)
            .is_some()
        {
            return Err(CliError::Config(format!(
                "duplicate key {key} in section [{section}]"
            )));
        }
    }

    // Environment id first: defaults depend on it.
    let kind = match values.get(&("env".to_string(), "id".to_string())) {
        Some(v) => EnvKind::parse(v).map_err(|e| CliError::Config(e.to_string()))?,
        None => EnvKind::Pendulum,
    };
    let mut cfg = RunConfig::default_for(kind);

    for ((section, key), value) in &values {
        let k = key.as_str();
        let v = value.as_str();
        match section.as_str() {
            "" => match k {
                "master_seed" => cfg.master_seed = parse_num(k, v)?,
                "workers" => cfg.workers = parse_num(k, v)?,
                "out_dir" => cfg.out_dir = PathBuf::from(v),
                _ => return unknown(section, k),
            },
            "env" => match k {
                "id" => {}
                "obs_dim" => cfg.env.obs_dim = parse_num(k, v)?,
                "obs_noise" => cfg.env.obs_noise = parse_num(k, v)?,
                "action_repeat" => cfg.env.action_repeat = parse_num(k, v)?,
                "dt" => cfg.env.dt = parse_num(k, v)?,
                "episode_len" => cfg.env.episode_len = parse_num(k, v)?,
                "gravity" => {
                    cfg.env.pendulum.gravity = parse_num(k, v)?;
                    cfg.env.cartpole.gravity = cfg.env.pendulum.gravity;
                }
                "damping" => cfg.env.pendulum.damping = parse_num(k, v)?,
                "force_scale" => cfg.env.cartpole.force_scale = parse_num(k, v)?,
                _ => return unknown(section, k),
            },
            "model" => match k {
                "variant" => {
                    cfg.variant = Variant::parse(v)
                        .ok_or_else(|| CliError::Config(format!("unknown variant {v:?}")))?
                }
                "stoch" => cfg.model.stoch = parse_num(k, v)?,
                "groups" => cfg.model.groups = parse_num(k, v)?,
                "classes" => cfg.model.classes = parse_num(k, v)?,
                "deter" => cfg.model.deter = parse_num(k, v)?,
                "hidden" => cfg.model.hidden = parse_num(k, v)?,
                "depth" => cfg.model.depth = parse_num(k, v)?,
                "activation" => {
                    cfg.model.activation = Activation::parse(v)
                        .ok_or_else(|| CliError::Config(format!("unknown activation {v:?}")))?
                }
                "deterministic_init" => cfg.model.deterministic_init = parse_bool(k, v)?,
                _ => return unknown(section, k),
            },
            "train" => match k {
                "lr" => cfg.train.lr = parse_num(k, v)?,
                "grad_clip" => cfg.train.grad_clip = parse_num(k, v)?,
                "batch" => cfg.train.batch = parse_num(k, v)?,
                "seq_len" => cfg.train.seq_len = parse_num(k, v)?,
                "warmup_episodes" => cfg.train.warmup_episodes = parse_num(k, v)?,
                "collect_interval" => cfg.train.collect_interval = parse_num(k, v)?,
                "exploration_noise" => cfg.train.exploration_noise = parse_num(k, v)?,
                "env_steps" => cfg.train.env_steps = parse_num(k, v)?,
                "policy" => {
                    cfg.train.policy = PolicyKind::parse(v)
                        .ok_or_else(|| CliError::Config(format!("unknown policy {v:?}")))?
                }
                _ => return unknown(section, k),
            },
            "ensemble" => match k {
                "members" => cfg.latent_ens.members = parse_num(k, v)?,
                "depth" => cfg.latent_ens.depth = parse_num(k, v)?,
                "width" => cfg.latent_ens.width = parse_num(k, v)?,
                "layer_norm" => cfg.latent_ens.layer_norm = parse_bool(k, v)?,
                "bootstrap" => {
                    cfg.latent_ens.bootstrap = parse_bool(k, v)?;
                    cfg.phys_ens.bootstrap = cfg.latent_ens.bootstrap;
                }
                "lr" => {
                    cfg.latent_ens.lr = parse_num(k, v)?;
                    cfg.phys_ens.lr = cfg.latent_ens.lr;
                }
                "pe_members" => cfg.phys_ens.members = parse_num(k, v)?,
                "pe_depth" => cfg.phys_ens.depth = parse_num(k, v)?,
                "pe_width" => cfg.phys_ens.width = parse_num(k, v)?,
                _ => return unknown(section, k),
            },
            "rollout" => match k {
                "horizon" => cfg.rollout.horizon = parse_num(k, v)?,
                "warmup" => cfg.rollout.warmup = parse_num(k, v)?,
                "count" => cfg.rollout.count = parse_num(k, v)?,
                "noise" => cfg.rollout.noise = parse_num(k, v)?,
                "policy" => {
                    cfg.rollout.policy = PolicyKind::parse(v)
                        .ok_or_else(|| CliError::Config(format!("unknown policy {v:?}")))?
                }
                _ => return unknown(section, k),
            },
            "diagnostics" => match k {
                "bins" => cfg.diag.bins = parse_num(k, v)?,
                "knn" => cfg.diag.knn = parse_num(k, v)?,
                "field_kinds" => {
                    if !["prior", "posterior", "both"].contains(&v) {
                        return Err(CliError::Config(format!(
                            "field_kinds must be prior|posterior|both, got {v:?}"
                        )));
                    }
                    cfg.diag.field_kinds = v.to_string();
                }
                _ => return unknown(section, k),
            },
            other => {
                return Err(CliError::Config(format!("unknown section [{other}]")));
            }
        }
    }
    cfg.env.seed = cfg.master_seed;
    cfg.train.seed = cfg.master_seed;
    Ok(cfg)
}

fn unknown(section: &str, key: &str) -> Result<RunConfig, CliError> {
    Err(CliError::Config(if section.is_empty() {
        format!("unknown key {key}")
    } else {
        format!("unknown key {key} in section [{section}]")
    }))
}

/// Canonical snapshot of a resolved configuration: every key in fixed
/// order, byte-identical across runs.
pub fn resolved_snapshot(cfg: &RunConfig) -> String {
    let mut s = String::new();
    use std::fmt::Write;
    let w = &mut s;
    let _ = writeln!(w, "master_seed = {}", cfg.master_seed);
    let _ = writeln!(w, "workers = {}", cfg.workers);
    let _ = writeln!(w, "out_dir = {}", cfg.out_dir.display());
    let _ = writeln!(w);
    let _ = writeln!(w, "[env]");
    let _ = writeln!(w, "id = {}", cfg.env.kind.name());
    let _ = writeln!(w, "obs_dim = {}", cfg.env.obs_dim);
    let _ = writeln!(w, "obs_noise = {}", cfg.env.obs_noise);
    let _ = writeln!(w, "action_repeat = {}", cfg.env.action_repeat);
    let _ = writeln!(w, "dt = {}", cfg.env.dt);
    let _ = writeln!(w, "episode_len = {}", cfg.env.episode_len);
    let _ = writeln!(w, "gravity = {}", cfg.env.pendulum.gravity);
    let _ = writeln!(w, "damping = {}", cfg.env.pendulum.damping);
    let _ = writeln!(w, "force_scale = {}", cfg.env.cartpole.force_scale);
    let _ = writeln!(w);
    let _ = writeln!(w, "[model]");
    let _ = writeln!(w, "variant = {}", cfg.variant.name());
    let _ = writeln!(w, "stoch = {}", cfg.model.stoch);
    let _ = writeln!(w, "groups = {}", cfg.model.groups);
    let _ = writeln!(w, "classes = {}", cfg.model.classes);
    let _ = writeln!(w, "deter = {}", cfg.model.deter);
    let _ = writeln!(w, "hidden = {}", cfg.model.hidden);
    let _ = writeln!(w, "depth = {}", cfg.model.depth);
    let _ = writeln!(w, "activation = {}", cfg.model.activation.name());
    let _ = writeln!(w, "deterministic_init = {}", cfg.model.deterministic_init);
    let _ = writeln!(w);
    let _ = writeln!(w, "[train]");
    let _ = writeln!(w, "lr = {}", cfg.train.lr);
    let _ = writeln!(w, "grad_clip = {}", cfg.train.grad_clip);
    let _ = writeln!(w, "batch = {}", cfg.train.batch);
    let _ = writeln!(w, "seq_len = {}", cfg.train.seq_len);
    let _ = writeln!(w, "warmup_episodes = {}", cfg.train.warmup_episodes);
    let _ = writeln!(w, "collect_interval = {}", cfg.train.collect_interval);
    let _ = writeln!(w, "exploration_noise = {}", cfg.train.exploration_noise);
    let _ = writeln!(w, "env_steps = {}", cfg.train.env_steps);
    let _ = writeln!(w, "policy = {}", cfg.train.policy.name());
    let _ = writeln!(w);
    let _ = writeln!(w, "[ensemble]");
    let _ = writeln!(w, "members = {}", cfg.latent_ens.members);
    let _ = writeln!(w, "depth = {}", cfg.latent_ens.depth);
    let _ = writeln!(w, "width = {}", cfg.latent_ens.width);
    let _ = writeln!(w, "layer_norm = {}", cfg.latent_ens.layer_norm);
    let _ = writeln!(w, "bootstrap = {}", cfg.latent_ens.bootstrap);
    let _ = writeln!(w, "lr = {}", cfg.latent_ens.lr);
    let _ = writeln!(w, "pe_members = {}", cfg.phys_ens.members);
    let _ = writeln!(w, "pe_depth = {}", cfg.phys_ens.depth);
    let _ = writeln!(w, "pe_width = {}", cfg.phys_ens.width);
    let _ = writeln!(w);
    let _ = writeln!(w, "[rollout]");
    let _ = writeln!(w, "horizon = {}", cfg.rollout.horizon);
    let _ = writeln!(w, "warmup = {}", cfg.rollout.warmup);
    let _ = writeln!(w, "count = {}", cfg.rollout.count);
    let _ = writeln!(w, "noise = {}", cfg.rollout.noise);
    let _ = writeln!(w, "policy = {}", cfg.rollout.policy.name());
    let _ = writeln!(w);
    let _ = writeln!(w, "[diagnostics]");
    let _ = writeln!(w, "bins = {}", cfg.diag.bins);
    let _ = writeln!(w, "knn = {}", cfg.diag.knn);
    let _ = writeln!(w, "field_kinds = {}", cfg.diag.field_kinds);
    s
}
