//! Behavior cloning: squared error between the policy mean and the action,
//! in normalized action coordinates.

use super::config::IladConfig;
use super::DemoData;
use crate::error::{invalid_arg, Result};
use crate::nets::{Adam, ObsBatch, PolicyParams, Subset};
use crate::planner::DemoSet;
use crate::rng::{self, tag};
use crate::sim::{Action, DOF};
use rand::seq::SliceRandom;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcTarget {
    ThetaPcOnly,
    All,
}

impl BcTarget {
    fn subset(self) -> Subset {
        match self {
            BcTarget::ThetaPcOnly => Subset::ThetaPc,
            BcTarget::All => Subset::All,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BcData {
    pub batch: ObsBatch,
    pub actions: Vec<Action>,
}

impl From<&DemoData> for BcData {
    fn from(d: &DemoData) -> Self {
        BcData {
            batch: d.batch.clone(),
            actions: d.actions.clone(),
        }
    }
}

/// Loss and the mean-gradient seed `d loss / d mean` over `rows`.
fn residuals(params: &PolicyParams, mean: &[f64], actions: &[Action], rows: &[usize]) -> (f64, Vec<f64>) {
    let m = rows.len() as f64;
    let mut loss = 0.0;
    let mut d = vec![0.0; rows.len() * DOF];
    for (j, &i) in rows.iter().enumerate() {
        let u = params.to_normalized(&actions[i]);
        for k in 0..DOF {
            let e = mean[j * DOF + k] - u[k];
            loss += e * e;
            d[j * DOF + k] = 2.0 * e / m;
        }
    }
    (loss / m, d)
}

/// `mean ||mu(s) - a||^2` over the data set.
pub fn bc_loss(params: &PolicyParams, data: &BcData) -> Result<f64> {
    let cache = params.forward_batch(&data.batch)?;
    let rows: Vec<usize> = (0..data.batch.len()).collect();
    Ok(residuals(params, cache.mean(), &data.actions, &rows).0)
}

/// Minibatch Adam on the chosen block for `cfg.bc_epochs_per_update` passes.
/// Returns the loss of every minibatch before its update.
pub fn bc_update(params: &mut PolicyParams, data: &BcData, cfg: &IladConfig, target: BcTarget, k: usize) -> Result<Vec<f64>> {
    let n = data.batch.len();
    if n == 0 || data.actions.len() != n {
        return Err(invalid_arg("behavior cloning needs matching non-empty data"));
    }
    if target == BcTarget::ThetaPcOnly && params.encoder.is_none() {
        return Err(invalid_arg("policy has no encoder to fine-tune"));
    }
    let subset = target.subset();
    let mut flat = params.get(subset);
    let mut opt = Adam::new(flat.len(), cfg.bc_lr);
    let mut rng = rng::stream(cfg.seed, &[tag::BC, k as u64]);
    let mut order: Vec<usize> = (0..n).collect();
    let mut curve = Vec::new();
    for _ in 0..cfg.bc_epochs_per_update {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.bc_minibatch) {
            let mb = data.batch.select(chunk);
            let cache = params.forward_batch(&mb)?;
            let (loss, d_mean) = residuals(params, cache.mean(), &data.actions, chunk);
            curve.push(loss);
            let g = params.backward_batch(&cache, &mb, &d_mean, &[0.0; DOF], subset);
            opt.step(&mut flat, &g.data);
            params.set(subset, &flat)?;
        }
    }
    Ok(curve)
}

/// Pre-trains encoder and decision network on the demonstrations.
pub fn bc_pretrain(params: &mut PolicyParams, demos: &DemoSet, cfg: &IladConfig) -> Result<Vec<f64>> {
    if demos.is_empty() || demos.n_pairs() == 0 {
        return Err(invalid_arg("behavior cloning pre-training needs demonstrations"));
    }
    let data = BcData::from(&DemoData::from_set(demos));
    bc_update(params, &data, cfg, BcTarget::All, usize::MAX)
}
