//! Returns, generalized advantage estimation, and value/Q regression.

use super::config::IladConfig;
use super::rollout::RolloutBatch;
use crate::error::{invalid_arg, Result};
use crate::nets::{q_input, Adam, Mlp, ValueParams};
use crate::rng::{self, tag};
use rand::seq::SliceRandom;

/// Discounted reward-to-go for one episode.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Recursive GAE over one episode; the value after the last step is 0.
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let next = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * next - values[t];
        acc = delta + gamma * lambda * acc;
        adv[t] = acc;
    }
    adv
}

/// GAE for every pair of the batch, flattened in trajectory order, given
/// per-pair value predictions in the same order. Not normalized.
pub fn gae_from_values(batch: &RolloutBatch, values: &[f64], gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    if values.len() != batch.n_pairs() {
        return Err(invalid_arg("one value per pair required"));
    }
    let mut out = Vec::with_capacity(values.len());
    let mut off = 0;
    for t in &batch.trajectories {
        out.extend(gae(&t.rewards, &values[off..off + t.len()], gamma, lambda));
        off += t.len();
    }
    Ok(out)
}

/// GAE using `values.v_net` on the given per-pair features.
pub fn gae_advantages(
    batch: &RolloutBatch,
    values: &ValueParams,
    features: &[f64],
    gamma: f64,
    lambda: f64,
) -> Result<Vec<f64>> {
    let v = values.v(features, batch.n_pairs())?;
    gae_from_values(batch, &v, gamma, lambda)
}

/// Shifts and scales to zero mean and unit variance (no-op on constant input).
pub fn normalize(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    for v in x.iter_mut() {
        *v -= mean;
        if sd > 1e-12 {
            *v /= sd;
        }
    }
}

/// Discounted returns for every pair, flattened in trajectory order.
pub fn batch_returns(batch: &RolloutBatch, gamma: f64) -> Vec<f64> {
    batch
        .trajectories
        .iter()
        .flat_map(|t| discounted_returns(&t.rewards, gamma))
        .collect()
}

/// Value and Q regressors with their persistent optimizers.
#[derive(Debug, Clone)]
pub struct ValueLearner {
    pub params: ValueParams,
    v_opt: Adam,
    q_opt: Adam,
}

impl ValueLearner {
    pub fn new(params: ValueParams, lr: f64) -> Self {
        ValueLearner {
            v_opt: Adam::new(params.v_net.params.len(), lr),
            q_opt: Adam::new(params.q_net.params.len(), lr),
            params,
        }
    }
}

/// Regression data: state features, normalized actions and return targets.
#[derive(Debug, Clone, Default)]
pub struct ValueData {
    pub features: Vec<f64>,
    pub actions: Vec<f64>,
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueFit {
    pub v_loss: f64,
    pub q_loss: f64,
    /// Minibatch losses in update order.
    pub v_curve: Vec<f64>,
    pub q_curve: Vec<f64>,
}

pub fn mse(net: &Mlp, x: &[f64], y: &[f64]) -> Result<f64> {
    let c = net.forward(x, y.len())?;
    Ok(c.output().iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len().max(1) as f64)
}

/// Minibatch Adam regression of a scalar-output net; returns the loss of
/// every minibatch before its update.
pub fn fit_regressor(
    net: &mut Mlp,
    opt: &mut Adam,
    x: &[f64],
    y: &[f64],
    epochs: usize,
    minibatch: usize,
    rng: &mut rng::Rng,
) -> Result<Vec<f64>> {
    let d = net.input_dim();
    let n = y.len();
    if x.len() != n * d {
        return Err(invalid_arg("regression inputs and targets disagree"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut curve = Vec::new();
    let mut xb = Vec::new();
    let mut grad = vec![0.0; net.params.len()];
    for _ in 0..epochs {
        order.shuffle(rng);
        for chunk in order.chunks(minibatch) {
            xb.clear();
            for &i in chunk {
                xb.extend_from_slice(&x[i * d..(i + 1) * d]);
            }
            let cache = net.forward(&xb, chunk.len())?;
            let m = chunk.len() as f64;
            let mut loss = 0.0;
            let dy: Vec<f64> = cache
                .output()
                .iter()
                .zip(chunk)
                .map(|(p, &i)| {
                    let e = p - y[i];
                    loss += e * e;
                    2.0 * e / m
                })
                .collect();
            curve.push(loss / m);
            grad.fill(0.0);
            net.backward(&cache, &dy, &mut grad, false);
            opt.step(&mut net.params, &grad);
        }
    }
    Ok(curve)
}

/// Regresses V on `(features) -> target` and Q on `(features, action) ->
/// target`; reports the final full-data mean squared errors.
pub fn fit_value_functions(learner: &mut ValueLearner, data: &ValueData, cfg: &IladConfig, k: usize) -> Result<ValueFit> {
    let n = data.targets.len();
    if n == 0 {
        return Err(invalid_arg("empty regression batch"));
    }
    let fd = learner.params.feature_dim();
    let xq = q_input(&data.features, &data.actions, n, fd)?;
    let mut rng = rng::stream(cfg.seed, &[tag::VALUE_FIT, k as u64]);
    let p = &mut learner.params;
    let v_curve = fit_regressor(
        &mut p.v_net,
        &mut learner.v_opt,
        &data.features,
        &data.targets,
        cfg.value_epochs,
        cfg.value_minibatch,
        &mut rng,
    )?;
    let q_curve = fit_regressor(
        &mut p.q_net,
        &mut learner.q_opt,
        &xq,
        &data.targets,
        cfg.value_epochs,
        cfg.value_minibatch,
        &mut rng,
    )?;
    Ok(ValueFit {
        v_loss: mse(&p.v_net, &data.features, &data.targets)?,
        q_loss: mse(&p.q_net, &xq, &data.targets)?,
        v_curve,
        q_curve,
    })
}

/// `Q(s, a) - V(s)` row by row.
pub fn demo_advantage(values: &ValueParams, features: &[f64], actions: &[f64], rows: usize) -> Result<Vec<f64>> {
    let q = values.q(features, actions, rows)?;
    let v = values.v(features, rows)?;
    Ok(q.iter().zip(&v).map(|(q, v)| q - v).collect())
}
