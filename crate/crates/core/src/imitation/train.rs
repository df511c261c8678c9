//! The epoch driver: optional pre-training, then per epoch rollouts,
//! periodic encoder fine-tuning, value fitting, gradient assembly and a
//! trust-region step.

use super::advantage::{batch_returns, fit_value_functions, gae_advantages, normalize, ValueData, ValueLearner};
use super::bc::{bc_loss, bc_pretrain, bc_update, BcData, BcTarget};
use super::config::IladConfig;
use super::gradient::{dapg_gradient, ilad_gradient, GradientTerms, PgData};
use super::rollout::collect_rollouts;
use super::trpo::{trpo_step, TrpoInfo};
use super::DemoData;
use crate::error::{invalid_arg, Error, Result};
use crate::nets::{save_checkpoint, PolicyArch, PolicyParams, Subset, ValueParams};
use crate::planner::DemoSet;
use crate::rng::{self, tag};
use crate::sim::ObjectAsset;
use rand::seq::index;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "rl")]
    Rl,
    #[serde(rename = "rl-pc")]
    RlPc,
    #[serde(rename = "dapg-pc")]
    DapgPc,
    #[serde(rename = "ilad")]
    Ilad,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Rl, Mode::RlPc, Mode::DapgPc, Mode::Ilad];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Rl => "rl",
            Mode::RlPc => "rl-pc",
            Mode::DapgPc => "dapg-pc",
            Mode::Ilad => "ilad",
        }
    }

    pub fn needs_demos(self) -> bool {
        matches!(self, Mode::DapgPc | Mode::Ilad)
    }

    pub fn uses_encoder(self) -> bool {
        self != Mode::Rl
    }

    pub fn joint_learning(self, cfg: &IladConfig) -> bool {
        match self {
            Mode::RlPc => true,
            Mode::Ilad => cfg.joint_learning,
            Mode::Rl | Mode::DapgPc => false,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase().replace('_', "-"))
            .ok_or_else(|| invalid_arg(format!("unknown mode {s:?}")))
    }
}

/// One row of the metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_return: f64,
    pub success_rate_train: f64,
    pub kl: Option<f64>,
    pub bc_loss: Option<f64>,
    pub w_min: Option<f64>,
    pub w_mean: Option<f64>,
    pub w_max: Option<f64>,
    pub demo_term_norm: f64,
    pub adv_term_norm: f64,
}

/// In-memory diagnostics of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochTrace {
    pub epoch: usize,
    pub gradient: Vec<f64>,
    pub trpo: Option<TrpoInfo>,
    pub bc_ran: bool,
    pub pc_changed_by_bc: bool,
    pub decision_changed_by_bc: bool,
    pub log_std_changed_by_bc: bool,
    pub pc_changed_by_step: bool,
    pub v_loss: f64,
    pub q_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: PolicyParams,
    pub values: ValueParams,
    pub metrics: Vec<EpochMetrics>,
    pub traces: Vec<EpochTrace>,
    pub pretrain_curve: Vec<f64>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    mode: Mode,
    config: &'a IladConfig,
    lambda0_prime_resolved: f64,
    seed: u64,
    gradient_sums: &'static str,
    objects: Vec<(String, u32)>,
    n_demonstrations: usize,
    n_demo_pairs: usize,
    version: &'static str,
}

fn policy_arch(mode: Mode, cfg: &IladConfig) -> PolicyArch {
    PolicyArch {
        use_encoder: mode.uses_encoder(),
        ..cfg.arch.clone()
    }
}

fn stats(w: &[f64]) -> (f64, f64, f64) {
    let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, w.iter().sum::<f64>() / w.len() as f64, hi)
}

/// Trains a policy in `mode`. With `out_dir`, writes `manifest.json`,
/// `metrics.csv`, periodic checkpoints and the final `policy.ckpt`.
pub fn train(
    objects: &[Arc<ObjectAsset>],
    demos: Option<&DemoSet>,
    cfg: &IladConfig,
    mode: Mode,
    out_dir: Option<&Path>,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if objects.is_empty() {
        return Err(invalid_arg("no training objects"));
    }
    let demos = demos.filter(|d| d.n_pairs() > 0);
    if mode.needs_demos() && demos.is_none() {
        return Err(invalid_arg(format!("mode {mode} needs a non-empty demonstration set")));
    }
    let demo_data = match mode {
        Mode::DapgPc | Mode::Ilad => demos.map(DemoData::from_set),
        Mode::Rl | Mode::RlPc => None,
    };
    let mut params = PolicyParams::new(policy_arch(mode, cfg), cfg.seed)?;
    let mut values = ValueLearner::new(ValueParams::new(params.input_dim(), &cfg.value_widths, cfg.seed)?, cfg.value_lr);

    let mut metrics_out = None;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let manifest = Manifest {
            mode,
            config: cfg,
            lambda0_prime_resolved: cfg.lambda0_prime(),
            seed: cfg.seed,
            gradient_sums: "mean within each data set",
            objects: objects
                .iter()
                .map(|o| (o.polygon.category.to_string(), o.polygon.instance_id))
                .collect(),
            n_demonstrations: demos.map_or(0, |d| d.len()),
            n_demo_pairs: demos.map_or(0, |d| d.n_pairs()),
            version: env!("CARGO_PKG_VERSION"),
        };
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        metrics_out = Some(csv::Writer::from_path(dir.join("metrics.csv"))?);
    }

    let pretrain_curve = match (mode.needs_demos(), demos) {
        (true, Some(d)) => bc_pretrain(&mut params, d, cfg)?,
        _ => Vec::new(),
    };

    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut traces = Vec::with_capacity(cfg.epochs);
    for k in 0..cfg.epochs {
        let batch = collect_rollouts(&params, objects, cfg, k)?;
        let obs = batch.obs_batch();
        let actions = batch.actions();

        let pc0 = params.checksum(Subset::ThetaPc);
        let dec0 = params.decision_checksum();
        let ls0 = params.log_std_checksum();
        let mut bc = None;
        let bc_ran = mode.joint_learning(cfg) && k % cfg.t == 0;
        if bc_ran {
            let data = BcData {
                batch: obs.clone(),
                actions: actions.clone(),
            };
            bc_update(&mut params, &data, cfg, BcTarget::ThetaPcOnly, k)?;
            bc = Some(bc_loss(&params, &data)?);
        }
        let pc1 = params.checksum(Subset::ThetaPc);
        let decision_changed_by_bc = params.decision_checksum() != dec0;
        let log_std_changed_by_bc = params.log_std_checksum() != ls0;

        let cache = params.forward_batch(&obs)?;
        let features = cache.features().to_vec();
        let mut adv = gae_advantages(&batch, &values.params, &features, cfg.gamma, cfg.gae_lambda)?;
        if cfg.normalize_advantages {
            normalize(&mut adv);
        }
        let vdata = ValueData {
            actions: actions.iter().flat_map(|a| params.to_normalized(a)).collect(),
            targets: batch_returns(&batch, cfg.gamma),
            features,
        };
        let fit = fit_value_functions(&mut values, &vdata, cfg, k)?;

        let pg = PgData {
            batch: obs,
            actions,
            advantages: adv,
        };
        let grad: GradientTerms = match mode {
            Mode::Rl | Mode::RlPc | Mode::DapgPc => dapg_gradient(&params, &pg, demo_data.as_ref(), cfg, k)?,
            Mode::Ilad => ilad_gradient(
                &params,
                &pg,
                demo_data.as_ref().expect("checked above"),
                &values.params,
                cfg,
                k,
            )?,
        };

        let n = pg.batch.len();
        let fvp_batch = if cfg.fvp_states > 0 && cfg.fvp_states < n {
            let mut r = rng::stream(cfg.seed, &[tag::FVP, k as u64]);
            let mut rows = index::sample(&mut r, n, cfg.fvp_states).into_vec();
            rows.sort_unstable();
            pg.batch.select(&rows)
        } else {
            pg.batch.clone()
        };
        let trpo = match trpo_step(&mut params, &grad, &fvp_batch, cfg) {
            Ok(info) => Some(info),
            Err(Error::AbortEpoch(msg)) => {
                log::warn!("epoch {k} aborted: {msg}");
                None
            }
            Err(e) => return Err(e),
        };
        let pc2 = params.checksum(Subset::ThetaPc);

        let w = grad.weights.as_deref().map(stats);
        let m = EpochMetrics {
            epoch: k,
            mean_return: batch.mean_return(),
            success_rate_train: batch.success_rate(),
            kl: trpo.as_ref().filter(|t| t.accepted).map(|t| t.kl),
            bc_loss: bc,
            w_min: w.map(|s| s.0),
            w_mean: w.map(|s| s.1),
            w_max: w.map(|s| s.2),
            demo_term_norm: grad.demo_norm(),
            adv_term_norm: grad.adv_norm(),
        };
        log::info!(
            "{mode} epoch {k}: return {:.3} success {:.2} kl {:?}",
            m.mean_return,
            m.success_rate_train,
            m.kl
        );
        if let Some(w) = metrics_out.as_mut() {
            w.serialize(&m)?;
            w.flush()?;
        }
        metrics.push(m);
        traces.push(EpochTrace {
            epoch: k,
            gradient: grad.total.data,
            trpo,
            bc_ran,
            pc_changed_by_bc: pc1 != pc0,
            decision_changed_by_bc,
            log_std_changed_by_bc,
            pc_changed_by_step: pc2 != pc1,
            v_loss: fit.v_loss,
            q_loss: fit.q_loss,
        });
        if let Some(dir) = out_dir {
            if cfg.checkpoint_every > 0 && (k + 1) % cfg.checkpoint_every == 0 {
                save_checkpoint(&dir.join(format!("checkpoint_{:05}.ckpt", k + 1)), &params, cfg.seed, Some(k + 1))?;
            }
        }
    }
    if let Some(dir) = out_dir {
        save_checkpoint(&dir.join("policy.ckpt"), &params, cfg.seed, Some(cfg.epochs))?;
    }
    Ok(TrainOutput {
        params,
        values: values.params,
        metrics,
        traces,
        pretrain_curve,
    })
}
