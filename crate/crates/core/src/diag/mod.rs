//! The measurement suite: ID start selection, physical and reward
//! discrepancy against the replay oracle, PCA embeddings of latent
//! features, binned vector fields, attractor distances, and trace
//! aggregation.

mod embed;
mod field;

pub use embed::{fit_embedding, fit_embedding_features, jacobi_eigen, EmbeddingModel};
pub use field::{build_vector_field, VectorField};

use crate::env::{circular_distance, EnvError, PhysicalState, World};
use crate::math::Real;
use crate::rollout::LatentTrajectory;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiagError {
    #[error("buffer holds {have} states, need more than {need}")]
    BufferTooSmall { have: usize, need: usize },
    #[error("need at least {need} trajectories, got {have}")]
    TooFewTrajectories { have: usize, need: usize },
    #[error("trace lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty reference set")]
    EmptyReference,
    #[error("no transitions to bin")]
    NoTransitions,
    #[error("no runs to aggregate")]
    NoRuns,
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Default neighbor count for ID start selection.
pub const DEFAULT_KNN: usize = 100;

/// The stored state minimizing mean Euclidean distance to its `k` nearest
/// neighbors (the densest point); ties break to the lowest index. Exact
/// brute force over all stored states.
pub fn select_id_state<'a>(
    states: &[&'a PhysicalState],
    k: usize,
) -> Result<(usize, &'a PhysicalState), DiagError> {
    let n = states.len();
    if n <= k {
        return Err(DiagError::BufferTooSmall { have: n, need: k });
    }
    let mut best_idx = 0;
    let mut best_score = Real::INFINITY;
    let mut dists = vec![0.0; n];
    for i in 0..n {
        for (j, d) in dists.iter_mut().enumerate() {
            *d = euclidean(states[i].values(), states[j].values());
        }
        dists.swap(i, n - 1); // drop self-distance
        let partial = &mut dists[..n - 1];
        partial.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap());
        let score = partial[..k].iter().sum::<Real>() / k as Real;
        if score < best_score {
            best_score = score;
            best_idx = i;
        }
    }
    Ok((best_idx, states[best_idx]))
}

fn euclidean(a: &[Real], b: &[Real]) -> Real {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<Real>()
        .sqrt()
}

/// Mean absolute error over decoded position components, angles compared
/// on the circle. Pure core of [`physical_discrepancy`], fed with
/// `(component index, predicted value)` pairs and masks.
pub fn component_discrepancy(
    pred: &[(usize, Real)],
    truth: &[Real],
    position_mask: &[bool],
    angle_mask: &[bool],
) -> Real {
    let mut total = 0.0;
    let mut count = 0usize;
    for &(idx, value) in pred {
        if !position_mask[idx] {
            continue;
        }
        let diff = if angle_mask[idx] {
            circular_distance(value, truth[idx])
        } else {
            (value - truth[idx]).abs()
        };
        total += diff;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        total / count as Real
    }
}

/// Ground-truth states for a trajectory: `s0` followed by the replay of
/// its first `T−1` actions, aligned index-for-index with the steps.
pub fn ground_truth_states(
    traj: &LatentTrajectory,
    world: &World,
    s0: &PhysicalState,
) -> Result<Vec<PhysicalState>, DiagError> {
    let actions = traj.actions();
    let mut truth = Vec::with_capacity(traj.len());
    truth.push(s0.clone());
    if traj.len() > 1 {
        let (states, _) = world.replay(s0, &actions[..actions.len() - 1])?;
        truth.extend(states);
    }
    Ok(truth)
}

/// Per-step mean ℓ1 distance between decoded physical predictions and the
/// replay oracle, over position components, angles on the circle.
pub fn physical_discrepancy(
    traj: &LatentTrajectory,
    world: &World,
    s0: &PhysicalState,
) -> Result<Vec<Real>, DiagError> {
    let truth = ground_truth_states(traj, world, s0)?;
    Ok(traj
        .steps
        .iter()
        .zip(&truth)
        .map(|(step, t)| {
            let decoded = world.decode_prediction(&step.phys_pred);
            component_discrepancy(
                &decoded,
                t.values(),
                world.position_mask(),
                world.angle_mask(),
            )
        })
        .collect())
}

/// Per-step signed reward discrepancy `r_pred − r_sim`; positive values
/// mean the model overestimates.
pub fn reward_discrepancy(
    traj: &LatentTrajectory,
    world: &World,
    s0: &PhysicalState,
) -> Result<Vec<Real>, DiagError> {
    let truth = ground_truth_states(traj, world, s0)?;
    Ok(traj
        .steps
        .iter()
        .zip(&truth)
        .map(|(step, t)| step.reward_pred - world.reward(t))
        .collect())
}

/// Normalized feature vectors of every step of the given trajectories;
/// the reference set for [`attractor_distance`].
pub fn reference_set(trajs: &[LatentTrajectory], emb: &EmbeddingModel) -> Vec<Vec<Real>> {
    trajs
        .iter()
        .flat_map(|t| t.steps.iter())
        .map(|s| emb.normalize(&feature_of(s)))
        .collect()
}

pub(crate) fn feature_of(step: &crate::rollout::TrajStep) -> Vec<Real> {
    let mut f = step.belief.h.clone();
    f.extend_from_slice(&step.z_feature);
    f
}

/// Per-step Euclidean distance of the normalized feature to its nearest
/// reference point.
pub fn attractor_distance(
    traj: &LatentTrajectory,
    reference: &[Vec<Real>],
    emb: &EmbeddingModel,
) -> Result<Vec<Real>, DiagError> {
    if reference.is_empty() {
        return Err(DiagError::EmptyReference);
    }
    Ok(traj
        .steps
        .iter()
        .map(|s| {
            let f = emb.normalize(&feature_of(s));
            reference
                .iter()
                .map(|r| euclidean(&f, r))
                .fold(Real::INFINITY, Real::min)
        })
        .collect())
}

/// Per-step mean and (population) standard deviation across runs.
pub fn aggregate_traces(runs: &[Vec<Real>]) -> Result<(Vec<Real>, Vec<Real>), DiagError> {
    let first = runs.first().ok_or(DiagError::NoRuns)?;
    let len = first.len();
    for r in runs {
        if r.len() != len {
            return Err(DiagError::LengthMismatch {
                left: len,
                right: r.len(),
            });
        }
    }
    let n = runs.len() as Real;
    let mut mean = vec![0.0; len];
    let mut std = vec![0.0; len];
    for t in 0..len {
        let m = runs.iter().map(|r| r[t]).sum::<Real>() / n;
        let v = runs.iter().map(|r| (r[t] - m) * (r[t] - m)).sum::<Real>() / n;
        mean[t] = m;
        std[t] = v.sqrt();
    }
    Ok((mean, std))
}
