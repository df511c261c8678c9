//! Deterministic success evaluation on held-out objects.

use crate::error::{invalid_arg, Result};
use crate::imitation::{run_episode, ActionMode};
use crate::nets::{PolicyParams, Subset};
use crate::rng::{self, tag};
use crate::shapes::Category;
use crate::sim::{ObjectAsset, SimConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub success: bool,
    pub steps: usize,
    pub final_distance: f64,
    pub total_return: f64,
}

/// Anything that can play one evaluation episode.
pub trait Controller: Sync {
    fn episode(&self, object: &Arc<ObjectAsset>, sim_cfg: &SimConfig, seed: u64) -> Result<EpisodeOutcome>;

    /// Identifies the controller in the report's configuration hash.
    fn fingerprint(&self) -> String;
}

impl Controller for PolicyParams {
    fn episode(&self, object: &Arc<ObjectAsset>, sim_cfg: &SimConfig, seed: u64) -> Result<EpisodeOutcome> {
        let emb = self.embed(&object.cloud)?;
        let tr = run_episode(self, &emb, object, sim_cfg, seed, ActionMode::Mean)?;
        Ok(EpisodeOutcome {
            success: tr.success,
            steps: tr.len(),
            final_distance: tr.final_distance,
            total_return: tr.total_return(),
        })
    }

    fn fingerprint(&self) -> String {
        self.checksum(Subset::All)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub category: Category,
    pub object_id: u32,
    pub trial: usize,
    pub success: bool,
    pub steps: usize,
    pub final_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectResult {
    pub category: Category,
    pub object_id: u32,
    pub successes: usize,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub successes: usize,
    pub trials: usize,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_object: Vec<ObjectResult>,
    pub per_seed: Vec<SeedResult>,
    pub successes: usize,
    pub trials: usize,
    pub success_rate: f64,
    /// Across-seed mean and population standard deviation of the rate.
    pub seed_mean: f64,
    pub seed_std: f64,
    pub seeds: Vec<u64>,
    pub config_hash: String,
    pub episodes: Vec<EpisodeRecord>,
}

/// Splits `total` trials over `n` objects, remainder to the first ones.
pub fn distribute_trials(total: usize, n: usize) -> Vec<usize> {
    (0..n).map(|i| total / n + usize::from(i < total % n)).collect()
}

/// Mean and population standard deviation.
pub fn mean_std(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (0.0, 0.0);
    }
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// Evaluates `trials_per_object` episodes per object and seed.
pub fn evaluate_success<C: Controller + ?Sized>(
    controller: &C,
    objects: &[Arc<ObjectAsset>],
    trials_per_object: usize,
    seeds: &[u64],
    sim_cfg: &SimConfig,
) -> Result<EvalReport> {
    evaluate_with_counts(controller, objects, &vec![trials_per_object; objects.len()], seeds, sim_cfg)
}

/// Like [`evaluate_success`] with an explicit trial count per object.
pub fn evaluate_with_counts<C: Controller + ?Sized>(
    controller: &C,
    objects: &[Arc<ObjectAsset>],
    counts: &[usize],
    seeds: &[u64],
    sim_cfg: &SimConfig,
) -> Result<EvalReport> {
    if objects.is_empty() {
        return Err(invalid_arg("no objects to evaluate on"));
    }
    if counts.len() != objects.len() || counts.iter().sum::<usize>() == 0 || seeds.is_empty() {
        return Err(invalid_arg("need at least one trial and one seed"));
    }
    let jobs: Vec<(u64, usize, usize)> = seeds
        .iter()
        .flat_map(|&s| {
            objects
                .iter()
                .enumerate()
                .flat_map(move |(o, _)| (0..counts[o]).map(move |t| (s, o, t)))
        })
        .collect();
    let episodes = jobs
        .par_iter()
        .map(|&(s, o, t)| {
            let obj = &objects[o];
            let key = [tag::EVAL, obj.polygon.category as u64, obj.polygon.instance_id as u64, t as u64];
            let out = controller.episode(obj, sim_cfg, rng::mix(s, &key))?;
            Ok(EpisodeRecord {
                seed: s,
                category: obj.polygon.category,
                object_id: obj.polygon.instance_id,
                trial: t,
                success: out.success,
                steps: out.steps,
                final_distance: out.final_distance,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let per_object = objects
        .iter()
        .enumerate()
        .map(|(o, obj)| {
            let mine = episodes.iter().filter(|e| {
                e.category == obj.polygon.category && e.object_id == obj.polygon.instance_id
            });
            ObjectResult {
                category: obj.polygon.category,
                object_id: obj.polygon.instance_id,
                successes: mine.clone().filter(|e| e.success).count(),
                trials: counts[o] * seeds.len(),
            }
        })
        .collect();
    let per_seed: Vec<SeedResult> = seeds
        .iter()
        .map(|&s| {
            let mine: Vec<_> = episodes.iter().filter(|e| e.seed == s).collect();
            let k = mine.iter().filter(|e| e.success).count();
            SeedResult {
                seed: s,
                successes: k,
                trials: mine.len(),
                success_rate: k as f64 / mine.len() as f64,
            }
        })
        .collect();
    let successes = episodes.iter().filter(|e| e.success).count();
    let trials = episodes.len();
    let rates: Vec<f64> = per_seed.iter().map(|s| s.success_rate).collect();
    let (seed_mean, seed_std) = mean_std(&rates);

    let mut h = Sha256::new();
    h.update(serde_json::to_vec(sim_cfg)?);
    h.update(serde_json::to_vec(counts)?);
    h.update(serde_json::to_vec(seeds)?);
    h.update(controller.fingerprint());
    for o in objects {
        h.update(format!("{}:{};", o.polygon.category, o.polygon.instance_id));
    }
    Ok(EvalReport {
        per_object,
        per_seed,
        successes,
        trials,
        success_rate: successes as f64 / trials as f64,
        seed_mean,
        seed_std,
        seeds: seeds.to_vec(),
        config_hash: hex::encode(h.finalize()),
        episodes,
    })
}
