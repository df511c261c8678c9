//! Augmented policy gradients over the decision parameters.
//!
//! Each term is a coefficient-weighted sum of score functions
//! `sum_i c_i grad log pi(a_i|s_i)`; sums are means within each data set.

use super::advantage::demo_advantage;
use super::config::IladConfig;
use super::weights::{normalized_weights, traj_neg_log_likelihood};
use super::DemoData;
use crate::error::{invalid_arg, Result};
use crate::nets::{log_prob_batch, GradientVector, ObsBatch, PolicyParams, Subset, ValueParams};
use crate::sim::Action;

/// Rows of one gradient term, with the log densities under the parameters
/// the gradient was taken at.
#[derive(Debug, Clone)]
pub struct TermRows {
    pub batch: ObsBatch,
    pub actions: Vec<Action>,
    pub coef: Vec<f64>,
    pub old_log_probs: Vec<f64>,
}

/// Rollout pairs with their (normalized) advantages.
#[derive(Debug, Clone)]
pub struct PgData {
    pub batch: ObsBatch,
    pub actions: Vec<Action>,
    pub advantages: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GradientTerms {
    pub total: GradientVector,
    pub pg: GradientVector,
    pub demo: Option<GradientVector>,
    pub adv: Option<GradientVector>,
    /// Rows of every term included in `total`, in summation order.
    pub rows: Vec<TermRows>,
    pub weights: Option<Vec<f64>>,
    pub l_values: Option<Vec<f64>>,
}

impl GradientTerms {
    pub fn demo_norm(&self) -> f64 {
        self.demo.as_ref().map_or(0.0, |g| g.norm())
    }

    pub fn adv_norm(&self) -> f64 {
        self.adv.as_ref().map_or(0.0, |g| g.norm())
    }
}

fn term(params: &PolicyParams, batch: &ObsBatch, actions: &[Action], coef: Vec<f64>) -> Result<(GradientVector, TermRows)> {
    let (lps, g) = log_prob_batch(params, batch, actions, Some(&coef), Some(Subset::ThetaP))?;
    let rows = TermRows {
        batch: batch.clone(),
        actions: actions.to_vec(),
        coef,
        old_log_probs: lps,
    };
    Ok((g.expect("gradient requested"), rows))
}

/// Plain policy-gradient term `mean_i A_i grad log pi`.
pub fn pg_term(params: &PolicyParams, pg: &PgData) -> Result<(GradientVector, TermRows)> {
    if pg.batch.is_empty() || pg.advantages.len() != pg.batch.len() {
        return Err(invalid_arg("policy-gradient batch is empty or misaligned"));
    }
    let n = pg.batch.len() as f64;
    let coef = pg.advantages.iter().map(|a| a / n).collect();
    term(params, &pg.batch, &pg.actions, coef)
}

/// Per-pair demonstration coefficients `scale / |D_E| * w(pair)`.
fn demo_coefs(demos: &DemoData, scale: f64, traj_weights: &[f64]) -> Vec<f64> {
    let c = scale / demos.len() as f64;
    let mut out = vec![0.0; demos.len()];
    for (r, w) in demos.ranges.iter().zip(traj_weights) {
        out[r.clone()].iter_mut().for_each(|v| *v = c * w);
    }
    out
}

fn assemble(
    params: &PolicyParams,
    pg: &PgData,
    demos: Option<&DemoData>,
    demo_coef: f64,
    traj_weights: Option<&[f64]>,
    adv: Option<(f64, &[f64])>,
) -> Result<GradientTerms> {
    let (pg_grad, pg_rows) = pg_term(params, pg)?;
    let mut total = pg_grad.clone();
    let mut rows = vec![pg_rows];
    let mut demo = None;
    let mut adv_grad = None;
    if let Some(d) = demos.filter(|d| !d.is_empty()) {
        if demo_coef != 0.0 {
            let ones;
            let w = match traj_weights {
                Some(w) => w,
                None => {
                    ones = vec![1.0; d.ranges.len()];
                    &ones
                }
            };
            let (g, r) = term(params, &d.batch, &d.actions, demo_coefs(d, demo_coef, w))?;
            total.add_scaled(&g, 1.0);
            rows.push(r);
            demo = Some(g);
        }
        if let Some((c, a_phi)) = adv.filter(|(c, _)| *c != 0.0) {
            let coef = a_phi.iter().map(|a| c / d.len() as f64 * a).collect();
            let (g, r) = term(params, &d.batch, &d.actions, coef)?;
            total.add_scaled(&g, 1.0);
            rows.push(r);
            adv_grad = Some(g);
        }
    }
    Ok(GradientTerms {
        total,
        pg: pg_grad,
        demo,
        adv: adv_grad,
        rows,
        weights: None,
        l_values: None,
    })
}

/// Policy gradient plus the decaying demonstration term `lambda0 lambda1^k`.
pub fn dapg_gradient(
    params: &PolicyParams,
    pg: &PgData,
    demos: Option<&DemoData>,
    cfg: &IladConfig,
    k: usize,
) -> Result<GradientTerms> {
    assemble(params, pg, demos, cfg.demo_coef(k), None, None)
}

/// Policy gradient plus the likelihood-ranked demonstration term and the
/// learned-advantage demonstration term.
pub fn ilad_gradient(
    params: &PolicyParams,
    pg: &PgData,
    demos: &DemoData,
    values: &ValueParams,
    cfg: &IladConfig,
    k: usize,
) -> Result<GradientTerms> {
    if demos.is_empty() {
        return Err(invalid_arg("empty demonstration set"));
    }
    let l = traj_neg_log_likelihood(params, demos)?;
    let w = if cfg.uniform_demo_weights {
        vec![1.0; l.len()]
    } else {
        normalized_weights(&l)?
    };
    let adv_coef = cfg.adv_coef(k);
    let a_phi = if adv_coef != 0.0 {
        let cache = params.forward_batch(&demos.batch)?;
        let acts: Vec<f64> = demos.actions.iter().flat_map(|a| params.to_normalized(a)).collect();
        demo_advantage(values, cache.features(), &acts, demos.len())?
            .into_iter()
            .map(|a| a.clamp(-cfg.adv_clip, cfg.adv_clip))
            .collect()
    } else {
        Vec::new()
    };
    let mut g = assemble(params, pg, Some(demos), cfg.demo_coef(k), Some(&w), Some((adv_coef, &a_phi)))?;
    g.weights = Some(w);
    g.l_values = Some(l);
    Ok(g)
}
