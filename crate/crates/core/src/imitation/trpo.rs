//! Natural-gradient trust-region step on the decision parameters.

use super::config::IladConfig;
use super::gradient::GradientTerms;
use crate::error::{Error, Result};
use crate::nets::{log_prob_batch, ObsBatch, PolicyCache, PolicyParams, Subset};
use crate::sim::DOF;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrpoInfo {
    pub accepted: bool,
    /// Mean KL(old || new) over the rollout states of the accepted step.
    pub kl: f64,
    pub improvement: f64,
    pub expected_improvement: f64,
    pub step_fraction: f64,
    pub backtracks: usize,
}

impl TrpoInfo {
    fn rejected(backtracks: usize) -> Self {
        TrpoInfo {
            accepted: false,
            kl: 0.0,
            improvement: 0.0,
            expected_improvement: 0.0,
            step_fraction: 0.0,
            backtracks,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` for symmetric positive definite `A` given as a product.
pub fn conjugate_gradient<F>(mut avp: F, b: &[f64], iters: usize, tol: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut p = b.to_vec();
    let mut rr = dot(&r, &r);
    for _ in 0..iters {
        if rr <= tol {
            break;
        }
        let ap = avp(&p);
        let alpha = rr / dot(&p, &ap);
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    x
}

/// Damped Fisher-vector product of the mean Gaussian KL over the cached
/// states, for a tangent laid out as `[theta_p, log_std]`.
pub fn fisher_vector_product(params: &PolicyParams, cache: &PolicyCache, v: &[f64], damping: f64) -> Vec<f64> {
    let np = params.decision.params.len();
    let rows = cache.dec.rows;
    let inv_var: Vec<f64> = params.log_std.iter().map(|l| (-2.0 * l).exp()).collect();
    let mut jv = params.decision_jvp(cache, &v[..np]);
    for (i, x) in jv.iter_mut().enumerate() {
        *x *= inv_var[i % DOF] / rows as f64;
    }
    let mut out = params.decision_vjp(cache, &jv);
    out.extend(v[np..].iter().map(|x| 2.0 * x));
    for (o, x) in out.iter_mut().zip(v) {
        *o += damping * x;
    }
    out
}

/// Mean over rows of KL(old || new) between diagonal Gaussians given as
/// normalized means and log standard deviations.
pub fn mean_kl(old_mu: &[f64], old_ls: &[f64], new_mu: &[f64], new_ls: &[f64]) -> f64 {
    let rows = old_mu.len() / DOF;
    let mut s = 0.0;
    for r in 0..rows {
        for i in 0..DOF {
            let (m0, m1) = (old_mu[r * DOF + i], new_mu[r * DOF + i]);
            let (v0, v1) = ((2.0 * old_ls[i]).exp(), (2.0 * new_ls[i]).exp());
            s += new_ls[i] - old_ls[i] + (v0 + (m0 - m1).powi(2)) / (2.0 * v1) - 0.5;
        }
    }
    s / rows.max(1) as f64
}

/// Importance-weighted surrogate `sum_i c_i pi(a_i|s_i) / pi_old(a_i|s_i)`.
pub fn surrogate(params: &PolicyParams, grad: &GradientTerms) -> Result<f64> {
    let mut s = 0.0;
    for t in &grad.rows {
        let (lps, _) = log_prob_batch(params, &t.batch, &t.actions, None, None)?;
        for ((c, lp), old) in t.coef.iter().zip(&lps).zip(&t.old_log_probs) {
            s += c * (lp - old).exp();
        }
    }
    Ok(s)
}

/// One trust-region step along the natural gradient of `grad.total`.
/// The Fisher matrix is estimated on `fvp_states`; KL is measured on the
/// states of the first (policy-gradient) term. On line-search failure the
/// parameters are left untouched.
pub fn trpo_step(
    params: &mut PolicyParams,
    grad: &GradientTerms,
    fvp_states: &ObsBatch,
    cfg: &IladConfig,
) -> Result<TrpoInfo> {
    let g = &grad.total.data;
    if !grad.total.is_finite() {
        return Err(Error::AbortEpoch("non-finite policy gradient".into()));
    }
    if g.iter().all(|v| *v == 0.0) {
        return Ok(TrpoInfo::rejected(0));
    }
    let cache = params.forward_batch(fvp_states)?;
    let x = conjugate_gradient(
        |v| fisher_vector_product(params, &cache, v, cfg.cg_damping),
        g,
        cfg.cg_iters,
        1e-10,
    );
    let shs = dot(&x, &fisher_vector_product(params, &cache, &x, cfg.cg_damping));
    if !(shs.is_finite() && shs > 0.0) {
        return Err(Error::AbortEpoch("degenerate natural-gradient direction".into()));
    }
    let beta = (2.0 * cfg.kl_limit / shs).sqrt();
    let expected = beta * dot(g, &x);
    let old = params.get(Subset::ThetaP);
    let kl_states = &grad.rows[0].batch;
    let old_mu = params.forward_batch(kl_states)?.mean().to_vec();
    let old_ls = params.log_std.clone();
    let base = surrogate(params, grad)?;
    let mut trial = params.clone();
    let mut frac = 1.0;
    for attempt in 0..cfg.line_search_steps {
        let cand: Vec<f64> = old.iter().zip(&x).map(|(o, d)| o + frac * beta * d).collect();
        trial.set(Subset::ThetaP, &cand)?;
        if trial.is_finite() {
            let new_mu = trial.forward_batch(kl_states)?.mean().to_vec();
            let kl = mean_kl(&old_mu, &old_ls, &new_mu, &trial.log_std);
            let improvement = surrogate(&trial, grad)? - base;
            if kl <= cfg.kl_accept_factor * cfg.kl_limit && improvement > 0.0 {
                params.set(Subset::ThetaP, &cand)?;
                return Ok(TrpoInfo {
                    accepted: true,
                    kl,
                    improvement,
                    expected_improvement: expected * frac,
                    step_fraction: frac,
                    backtracks: attempt,
                });
            }
        }
        frac *= 0.5;
    }
    log::debug!("line search failed after {} tries; no step taken", cfg.line_search_steps);
    Ok(TrpoInfo::rejected(cfg.line_search_steps))
}
