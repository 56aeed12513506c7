//! The `train`, `diagnose`, and `gradcheck` commands.

use crate::diag::{
    aggregate_traces, attractor_distance, build_vector_field, fit_embedding, physical_discrepancy,
    reference_set, reward_discrepancy, select_id_state,
};
use crate::ensemble::{LatentEnsemble, PhysicalEnsemble};
use crate::env::{PhysicalState, World};
use crate::math::{DenseArray, Real};
use crate::nn::{load_checkpoint, save_checkpoint, Checkpoint, ParamStore};
use crate::report::{gradcheck, resolved_snapshot, vector_field_svg, CliError, RunConfig};
use crate::rollout::{batch_rollouts, LatentTrajectory, RolloutKind, RolloutSpec, StartResolver};
use crate::rssm::Rssm;
use crate::train::{fit, FitResult, LogRow};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub struct TrainArtifacts {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub resolved: PathBuf,
    pub env_frames: u64,
}

/// Read and parse a configuration file; a missing file is a config error
/// naming the offending path.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    super::parse_config(&text)
}

/// Train a model per the configuration and write the checkpoint, the
/// training log, and a resolved-config snapshot.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainArtifacts, CliError> {
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::io("creating output dir", e))?;
    let mut world = World::new(cfg.env.clone());
    let rssm_cfg = cfg.rssm_config(&world);
    let result = fit(
        &mut world,
        rssm_cfg,
        cfg.latent_ens.clone(),
        cfg.phys_ens.clone(),
        &cfg.train,
    )?;

    let log_path = cfg.out_dir.join("train_log.csv");
    let mut csv = String::from(LogRow::CSV_HEADER);
    csv.push('\n');
    for row in &result.log {
        csv.push_str(&row.csv_row());
        csv.push('\n');
    }
    std::fs::write(&log_path, csv).map_err(|e| CliError::io("writing train log", e))?;

    let resolved_path = cfg.out_dir.join("resolved.cfg");
    std::fs::write(&resolved_path, resolved_snapshot(cfg))
        .map_err(|e| CliError::io("writing resolved config", e))?;

    let ckpt_path = cfg.out_dir.join("checkpoint.ckpt");
    let ckpt = pack_checkpoint(cfg, &result);
    save_checkpoint(&ckpt_path, &ckpt)?;

    Ok(TrainArtifacts {
        checkpoint: ckpt_path,
        log: log_path,
        resolved: resolved_path,
        env_frames: result.env_frames,
    })
}

/// Bundle model, ensembles, and the replay-buffer physical states into one
/// named-array container with the resolved config as metadata.
pub fn pack_checkpoint(cfg: &RunConfig, result: &FitResult) -> Checkpoint {
    let mut params = ParamStore::new();
    for (name, arr) in result.rssm.params.iter() {
        params.insert(format!("rssm/{name}"), arr.clone());
    }
    for (i, member) in result.latent.inner.members_params().enumerate() {
        for (name, arr) in member.iter() {
            params.insert(format!("ens/{i}/{name}"), arr.clone());
        }
    }
    for (i, member) in result.physical.inner.members_params().enumerate() {
        for (name, arr) in member.iter() {
            params.insert(format!("pe/{i}/{name}"), arr.clone());
        }
    }
    for (j, episode) in result.buffer.episodes().iter().enumerate() {
        let dim = episode.states[0].dim();
        let mut flat = Vec::with_capacity(episode.len() * dim);
        for s in &episode.states {
            flat.extend_from_slice(s.values());
        }
        params.insert(
            format!("replay/ep{j}"),
            DenseArray::matrix(episode.len(), dim, flat),
        );
    }
    Checkpoint {
        meta: resolved_snapshot(cfg),
        params,
    }
}

pub struct LoadedRun {
    pub cfg: RunConfig,
    pub world: World,
    pub rssm: Rssm,
    pub latent: LatentEnsemble,
    pub physical: PhysicalEnsemble,
    pub replay_states: Vec<PhysicalState>,
}

/// Rebuild a trained run from a checkpoint file.
pub fn unpack_checkpoint(path: &Path) -> Result<LoadedRun, CliError> {
    let ckpt = load_checkpoint(path)?;
    let cfg = super::parse_config(&ckpt.meta)?;
    let world = World::new(cfg.env.clone());
    let rssm_cfg = cfg.rssm_config(&world);
    let mut rssm = Rssm::new(rssm_cfg.clone(), cfg.master_seed);
    rssm.params = restore_store(&rssm.params, &ckpt, "rssm")?;

    let mut latent = LatentEnsemble::new(
        cfg.latent_ens.clone(),
        rssm_cfg.deter,
        rssm_cfg.stoch_event(),
        rssm_cfg.action_dim,
        cfg.master_seed ^ 0xA11CE,
    );
    for i in 0..latent.inner.member_count() {
        let fresh = latent.inner.member_params_mut(i);
        *fresh = restore_store(fresh, &ckpt, &format!("ens/{i}"))?;
    }
    let mut physical = PhysicalEnsemble::new(
        cfg.phys_ens.clone(),
        world.encoded_dim(),
        world.action_dim(),
        cfg.master_seed ^ 0xB0B,
    );
    for i in 0..physical.inner.member_count() {
        let fresh = physical.inner.member_params_mut(i);
        *fresh = restore_store(fresh, &ckpt, &format!("pe/{i}"))?;
    }

    let mut replay_states = Vec::new();
    let dim = world.state_dim();
    for j in 0.. {
        let key = format!("replay/ep{j}");
        if !ckpt.params.contains(&key) {
            break;
        }
        let arr = ckpt.params.get(&key);
        for r in 0..arr.rows() {
            replay_states.push(PhysicalState(arr.row(r).to_vec()));
        }
        assert_eq!(arr.cols(), dim);
    }
    Ok(LoadedRun {
        cfg,
        world,
        rssm,
        latent,
        physical,
        replay_states,
    })
}

fn restore_store(
    template: &ParamStore,
    ckpt: &Checkpoint,
    prefix: &str,
) -> Result<ParamStore, CliError> {
    let mut out = ParamStore::new();
    for (name, fresh) in template.iter() {
        let key = format!("{prefix}/{name}");
        if !ckpt.params.contains(&key) {
            return Err(CliError::Config(format!(
                "checkpoint is missing parameter {key}"
            )));
        }
        let loaded = ckpt.params.get(&key);
        if loaded.shape() != fresh.shape() {
            return Err(CliError::Config(format!(
                "checkpoint parameter {key} has shape {:?}, expected {:?}",
                loaded.shape(),
                fresh.shape()
            )));
        }
        out.insert(name, loaded.clone());
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiagnoseMode {
    Discrepancy,
    Reward,
    AttractorMap,
    Uncertainty,
}

impl DiagnoseMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "discrepancy" => Some(DiagnoseMode::Discrepancy),
            "reward" => Some(DiagnoseMode::Reward),
            "attractor-map" => Some(DiagnoseMode::AttractorMap),
            "uncertainty" => Some(DiagnoseMode::Uncertainty),
            _ => None,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            DiagnoseMode::Discrepancy => "discrepancy",
            DiagnoseMode::Reward => "reward",
            DiagnoseMode::AttractorMap => "attractor-map",
            DiagnoseMode::Uncertainty => "uncertainty",
        }
    }
}

pub struct DiagnoseArgs {
    pub checkpoint: PathBuf,
    pub mode: DiagnoseMode,
    /// `id`, `ood:<name>`, or `random`.
    pub start: String,
    pub count: Option<usize>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

enum ResolvedStart {
    Fixed(PhysicalState),
    Random,
}

fn resolve_start(run: &LoadedRun, start: &str) -> Result<(ResolvedStart, String), CliError> {
    if start == "random" {
        return Ok((ResolvedStart::Random, "random".to_string()));
    }
    if start == "id" {
        let refs: Vec<&PhysicalState> = run.replay_states.iter().collect();
        let (_, s) = select_id_state(&refs, run.cfg.diag.knn)?;
        return Ok((ResolvedStart::Fixed(s.clone()), "id".to_string()));
    }
    if let Some(name) = start.strip_prefix("ood:") {
        let entry = run.world.ood_start(name).map_err(|e| CliError::Config(e.to_string()))?;
        return Ok((
            ResolvedStart::Fixed(entry.state.clone()),
            format!("ood-{name}"),
        ));
    }
    Err(CliError::Config(format!(
        "unknown start {start:?}; expected id, ood:<name>, or random"
    )))
}

fn fmt_real(v: Real) -> String {
    format!("{v:.6}")
}

/// Trajectory dump: one row per (rollout, step).
fn trajectory_csv(trajs: &[LatentTrajectory]) -> String {
    let phys_dim = trajs
        .first()
        .and_then(|t| t.steps.first())
        .map(|s| s.phys_pred.len())
        .unwrap_or(0);
    let mut out = String::from("rollout,t,warmup,uncertainty,reward_pred");
    for i in 0..phys_dim {
        let _ = write!(out, ",phys_pred_{i}");
    }
    out.push('\n');
    for (r, traj) in trajs.iter().enumerate() {
        for (t, step) in traj.steps.iter().enumerate() {
            let unc = step.uncertainty.map(fmt_real).unwrap_or_default();
            let _ = write!(
                out,
                "{r},{t},{},{unc},{}",
                step.warmup as u8,
                fmt_real(step.reward_pred)
            );
            for v in &step.phys_pred {
                let _ = write!(out, ",{}", fmt_real(*v));
            }
            out.push('\n');
        }
    }
    out
}

fn aggregate_csv(runs: &[Vec<Real>], t_offset: usize) -> Result<String, CliError> {
    let (mean, std) = aggregate_traces(runs)?;
    let mut out = String::from("t,mean,std\n");
    for (t, (m, s)) in mean.iter().zip(&std).enumerate() {
        let _ = writeln!(out, "{},{},{}", t + t_offset, fmt_real(*m), fmt_real(*s));
    }
    Ok(out)
}

/// Run rollout batches per the requested mode and emit CSV/SVG artifacts.
/// Filenames encode `(env, variant, mode, start)`. Returns emitted paths.
pub fn cmd_diagnose(args: &DiagnoseArgs) -> Result<Vec<PathBuf>, CliError> {
    let run = unpack_checkpoint(&args.checkpoint)?;
    let out_dir = args.out.clone().unwrap_or_else(|| run.cfg.out_dir.clone());
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::io("creating output dir", e))?;
    let count = args.count.unwrap_or(run.cfg.rollout.count);
    let workers = args.workers.unwrap_or(run.cfg.workers).max(1);
    let seed = args.seed.unwrap_or(run.cfg.master_seed);
    let (start, start_label) = resolve_start(&run, &args.start)?;

    let spec_for = |kind: RolloutKind| -> RolloutSpec {
        let mut s = RolloutSpec::new(kind);
        s.horizon = run.cfg.rollout.horizon;
        s.warmup = run.cfg.rollout.warmup;
        s.policy = run.cfg.rollout.policy;
        s.noise = run.cfg.rollout.noise;
        s.seed = seed;
        s
    };
    let run_batch = |kind: RolloutKind| -> Result<Vec<LatentTrajectory>, CliError> {
        let spec = spec_for(kind);
        let resolver = match &start {
            ResolvedStart::Fixed(s) => StartResolver::Fixed(s),
            ResolvedStart::Random => StartResolver::Reset,
        };
        Ok(batch_rollouts(
            &run.rssm,
            Some(&run.latent),
            &run.world,
            &spec,
            count,
            workers,
            &resolver,
        )?)
    };
    let file_stem = |kind: &str| -> String {
        format!(
            "{}-{}-{}-{}-{}",
            run.world.kind().name(),
            run.cfg.variant.name(),
            args.mode.name(),
            start_label,
            kind
        )
    };
    let mut emitted = Vec::new();
    let mut emit = |name: String, body: String| -> Result<(), CliError> {
        let path = out_dir.join(name);
        std::fs::write(&path, body).map_err(|e| CliError::io("writing artifact", e))?;
        emitted.push(path);
        Ok(())
    };

    match args.mode {
        DiagnoseMode::Discrepancy => {
            for kind in [
                RolloutKind::Prior,
                RolloutKind::Posterior,
                RolloutKind::PosteriorInformed,
            ] {
                let trajs = run_batch(kind)?;
                let traces: Vec<Vec<Real>> = trajs
                    .iter()
                    .map(|t| physical_discrepancy(t, &run.world, &t.start))
                    .collect::<Result<_, _>>()?;
                emit(
                    format!("{}.csv", file_stem(kind.name())),
                    aggregate_csv(&traces, 0)?,
                )?;
                emit(
                    format!("{}-rollouts.csv", file_stem(kind.name())),
                    trajectory_csv(&trajs),
                )?;
            }
        }
        DiagnoseMode::Reward => {
            for kind in [RolloutKind::Prior, RolloutKind::Posterior] {
                let trajs = run_batch(kind)?;
                let traces: Vec<Vec<Real>> = trajs
                    .iter()
                    .map(|t| reward_discrepancy(t, &run.world, &t.start))
                    .collect::<Result<_, _>>()?;
                emit(
                    format!("{}.csv", file_stem(kind.name())),
                    aggregate_csv(&traces, 0)?,
                )?;
                emit(
                    format!("{}-rollouts.csv", file_stem(kind.name())),
                    trajectory_csv(&trajs),
                )?;
            }
        }
        DiagnoseMode::Uncertainty => {
            let trajs = run_batch(RolloutKind::Prior)?;
            let warmup = run.cfg.rollout.warmup;
            let traces: Vec<Vec<Real>> = trajs
                .iter()
                .map(|t| {
                    t.steps
                        .iter()
                        .skip(warmup)
                        .map(|s| s.uncertainty.unwrap_or(0.0))
                        .collect()
                })
                .collect();
            emit(
                format!("{}.csv", file_stem("prior")),
                aggregate_csv(&traces, warmup)?,
            )?;
            emit(
                format!("{}-rollouts.csv", file_stem("prior")),
                trajectory_csv(&trajs),
            )?;
        }
        DiagnoseMode::AttractorMap => {
            // Fields pool rollouts from buffer-random starts.
            let pool: Vec<PhysicalState> = run.replay_states.clone();
            if pool.is_empty() {
                return Err(CliError::Config(
                    "checkpoint carries no replay states for buffer-random starts".into(),
                ));
            }
            let mut field_trajs = Vec::new();
            for kind in run.cfg.field_kind_list() {
                let spec = spec_for(kind);
                field_trajs.extend(batch_rollouts(
                    &run.rssm,
                    Some(&run.latent),
                    &run.world,
                    &spec,
                    count,
                    workers,
                    &StartResolver::Pool(&pool),
                )?);
            }
            let emb = fit_embedding(&field_trajs)?;
            let field = build_vector_field(&emb, &field_trajs, run.cfg.diag.bins)?;

            // Exemplary posterior trajectories from the ID state and each
            // OOD catalog entry, overlaid on the field.
            let refs: Vec<&PhysicalState> = run.replay_states.iter().collect();
            let (_, id_state) = select_id_state(&refs, run.cfg.diag.knn)?;
            let mut overlays = Vec::new();
            let posterior_spec = spec_for(RolloutKind::Posterior);
            let id_traj = batch_rollouts(
                &run.rssm,
                None,
                &run.world,
                &posterior_spec,
                1,
                1,
                &StartResolver::Fixed(id_state),
            )?;
            overlays.push((
                "id".to_string(),
                embed_traj(&emb, &id_traj[0]),
            ));
            for entry in run.world.ood_catalog() {
                let traj = batch_rollouts(
                    &run.rssm,
                    None,
                    &run.world,
                    &posterior_spec,
                    1,
                    1,
                    &StartResolver::Fixed(&entry.state),
                )?;
                overlays.push((format!("ood-{}", entry.name), embed_traj(&emb, &traj[0])));
            }
            emit(
                format!("{}.svg", file_stem("field")),
                vector_field_svg(&field, &overlays),
            )?;

            // Attractor-distance traces for the requested start against a
            // posterior reference set.
            let reference = reference_set(&field_trajs, &emb);
            let trajs = run_batch(RolloutKind::Prior)?;
            let traces: Vec<Vec<Real>> = trajs
                .iter()
                .map(|t| attractor_distance(t, &reference, &emb))
                .collect::<Result<_, _>>()?;
            emit(
                format!("{}.csv", file_stem("attractor")),
                aggregate_csv(&traces, 0)?,
            )?;
        }
    }
    Ok(emitted)
}

fn embed_traj(emb: &crate::diag::EmbeddingModel, traj: &LatentTrajectory) -> Vec<[Real; 2]> {
    traj.steps
        .iter()
        .map(|s| {
            let mut f = s.belief.h.clone();
            f.extend_from_slice(&s.z_feature);
            emb.project(&f)
        })
        .collect()
}

/// Run the finite-difference suite over every registered differentiable
/// loss. `inject_bug` perturbs the named loss's analytic gradient, proving
/// the harness catches broken backward passes.
pub fn cmd_gradcheck(inject_bug: Option<&str>) -> Result<String, CliError> {
    let cases = gradcheck::run_all(inject_bug);
    let mut out = String::from("loss,params,rel_err,tolerance,status\n");
    let mut failures = Vec::new();
    for c in &cases {
        let status = if c.rel_err < c.tolerance { "pass" } else { "FAIL" };
        if status == "FAIL" {
            failures.push(c.name.to_string());
        }
        let _ = writeln!(
            out,
            "{},{},{:.3e},{:.1e},{status}",
            c.name, c.params, c.rel_err, c.tolerance
        );
    }
    if failures.is_empty() {
        Ok(out)
    } else {
        Err(CliError::Gradcheck(format!(
            "{} (report:\n{out})",
            failures.join(", ")
        )))
    }
}
