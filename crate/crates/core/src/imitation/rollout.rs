//! On-policy episode collection.

use super::config::IladConfig;
use crate::error::{invalid_arg, Result};
use crate::nets::{gaussian_log_prob, ObsBatch, PolicyParams};
use crate::rng::{self, tag};
use crate::shapes::Category;
use crate::sim::{self, Action, ObjectAsset, Observation, SimConfig};
use rand::Rng;
use rayon::prelude::*;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub category: Category,
    pub object_id: u32,
    pub observations: Vec<Observation>,
    /// Unclipped actions in joint units.
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Log densities under the collecting policy.
    pub log_probs: Vec<f64>,
    pub success: bool,
    /// Object-to-target distance at the end of the episode.
    pub final_distance: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn total_return(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub trajectories: Vec<Trajectory>,
    pub epoch: usize,
}

impl RolloutBatch {
    pub fn n_pairs(&self) -> usize {
        self.trajectories.iter().map(|t| t.len()).sum()
    }

    pub fn obs_batch(&self) -> ObsBatch {
        ObsBatch::new(self.trajectories.iter().flat_map(|t| &t.observations))
    }

    pub fn actions(&self) -> Vec<Action> {
        self.trajectories.iter().flat_map(|t| t.actions.iter().copied()).collect()
    }

    pub fn log_probs(&self) -> Vec<f64> {
        self.trajectories.iter().flat_map(|t| t.log_probs.iter().copied()).collect()
    }

    pub fn mean_return(&self) -> f64 {
        let n = self.trajectories.len().max(1) as f64;
        self.trajectories.iter().map(|t| t.total_return()).sum::<f64>() / n
    }

    pub fn success_rate(&self) -> f64 {
        let n = self.trajectories.len().max(1) as f64;
        self.trajectories.iter().filter(|t| t.success).count() as f64 / n
    }
}

/// How actions are chosen inside [`run_episode`].
pub enum ActionMode<'a> {
    /// Gaussian exploration from the given stream.
    Stochastic(&'a mut rng::Rng),
    /// The policy mean.
    Mean,
}

/// Runs one episode to termination from the reset drawn with `seed`.
pub fn run_episode(
    params: &PolicyParams,
    embedding: &[f64],
    object: &Arc<ObjectAsset>,
    sim_cfg: &SimConfig,
    seed: u64,
    mut mode: ActionMode<'_>,
) -> Result<Trajectory> {
    let (mut state, mut obs) = sim::reset(Arc::clone(object), sim_cfg, seed);
    let mut tr = Trajectory {
        category: object.polygon.category,
        object_id: object.polygon.instance_id,
        observations: Vec::new(),
        actions: Vec::new(),
        rewards: Vec::new(),
        dones: Vec::new(),
        log_probs: Vec::new(),
        success: false,
        final_distance: f64::NAN,
    };
    loop {
        let mu = params.mean_with_embedding(embedding, &obs)?;
        let u = match &mut mode {
            ActionMode::Stochastic(rng) => params.sample_normalized(&mu, rng),
            ActionMode::Mean => mu.clone(),
        };
        let action = params.to_action(&u);
        let lp = gaussian_log_prob(&params.to_normalized(&action), &mu, &params.log_std);
        let (r, done, events) = sim::advance(&mut state, &action, sim_cfg)?;
        tr.observations.push(obs);
        tr.actions.push(action);
        tr.rewards.push(r);
        tr.dones.push(done);
        tr.log_probs.push(lp);
        if done {
            tr.success = events.success;
            tr.final_distance = state.object_xy().dist(state.target);
            return Ok(tr);
        }
        obs = state.observation();
    }
}

/// Embeddings for each object under the current encoder.
pub fn object_embeddings(params: &PolicyParams, objects: &[Arc<ObjectAsset>]) -> Result<Vec<Vec<f64>>> {
    objects.iter().map(|o| params.embed(&o.cloud)).collect()
}

/// Collects `cfg.n_traj_per_epoch` stochastic episodes for epoch `k`, each on
/// an object drawn uniformly from `objects`.
pub fn collect_rollouts(
    params: &PolicyParams,
    objects: &[Arc<ObjectAsset>],
    cfg: &IladConfig,
    k: usize,
) -> Result<RolloutBatch> {
    if objects.is_empty() {
        return Err(invalid_arg("no training objects"));
    }
    let embeddings = object_embeddings(params, objects)?;
    let mut pick = rng::stream(cfg.seed, &[tag::ROLLOUT, k as u64]);
    let jobs: Vec<(usize, u64)> = (0..cfg.n_traj_per_epoch)
        .map(|i| {
            let obj = pick.random_range(0..objects.len());
            (obj, rng::mix(cfg.seed, &[tag::ROLLOUT, k as u64, i as u64]))
        })
        .collect();
    let trajectories = jobs
        .par_iter()
        .map(|&(obj, seed)| {
            let mut noise = rng::stream(seed, &[tag::ACTION]);
            run_episode(
                params,
                &embeddings[obj],
                &objects[obj],
                &cfg.sim,
                seed,
                ActionMode::Stochastic(&mut noise),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RolloutBatch { trajectories, epoch: k })
}
