//! Learner hyper-parameters. The JSON form uses these field names.

use crate::error::{invalid_arg, Result};
use crate::nets::PolicyArch;
use crate::sim::SimConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IladConfig {
    pub lambda0: f64,
    pub lambda1: f64,
    /// Defaults to `0.1 * lambda0` when absent.
    pub lambda0_prime: Option<f64>,
    #[serde(rename = "T")]
    pub t: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub kl_limit: f64,
    pub cg_iters: usize,
    pub n_traj_per_epoch: usize,
    pub epochs: usize,
    pub bc_lr: f64,
    pub bc_minibatch: usize,
    pub bc_epochs_per_update: usize,
    pub seed: u64,

    pub cg_damping: f64,
    pub line_search_steps: usize,
    /// Accepted steps must satisfy `kl <= kl_accept_factor * kl_limit`.
    pub kl_accept_factor: f64,
    /// States used for Fisher-vector products; 0 uses every state.
    pub fvp_states: usize,
    pub value_widths: Vec<usize>,
    pub value_lr: f64,
    pub value_epochs: usize,
    pub value_minibatch: usize,
    pub adv_clip: f64,
    pub normalize_advantages: bool,
    /// Encoder fine-tuning by behavior cloning every `T` epochs.
    pub joint_learning: bool,
    /// Forces every demonstration weight to 1.
    pub uniform_demo_weights: bool,
    /// Checkpoint interval in epochs; 0 writes only the final policy.
    pub checkpoint_every: usize,
    pub arch: PolicyArch,
    pub sim: SimConfig,
}

impl Default for IladConfig {
    fn default() -> Self {
        IladConfig {
            lambda0: 0.1,
            lambda1: 0.99,
            lambda0_prime: None,
            t: 50,
            gamma: 0.995,
            gae_lambda: 0.97,
            kl_limit: 0.01,
            cg_iters: 10,
            n_traj_per_epoch: 200,
            epochs: 300,
            bc_lr: 1e-3,
            bc_minibatch: 256,
            bc_epochs_per_update: 20,
            seed: 0,
            cg_damping: 0.1,
            line_search_steps: 10,
            kl_accept_factor: 1.5,
            fvp_states: 4000,
            value_widths: vec![64, 64],
            value_lr: 1e-3,
            value_epochs: 10,
            value_minibatch: 256,
            adv_clip: 10.0,
            normalize_advantages: true,
            joint_learning: true,
            uniform_demo_weights: false,
            checkpoint_every: 0,
            arch: PolicyArch::default(),
            sim: SimConfig::default(),
        }
    }
}

impl IladConfig {
    pub fn lambda0_prime(&self) -> f64 {
        self.lambda0_prime.unwrap_or(0.1 * self.lambda0)
    }

    /// Demonstration likelihood coefficient at epoch `k`.
    pub fn demo_coef(&self, k: usize) -> f64 {
        self.lambda0 * self.lambda1.powi(k as i32)
    }

    /// Demonstration advantage coefficient at epoch `k`.
    pub fn adv_coef(&self, k: usize) -> f64 {
        self.lambda0_prime() * (1.0 - self.lambda1.powi(k as i32))
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.lambda1 > 0.0 && self.lambda1 < 1.0, "lambda1 must lie in (0, 1)"),
            (self.lambda0 >= 0.0 && self.lambda0_prime() >= 0.0, "lambda0 and lambda0_prime must be non-negative"),
            (self.t >= 1, "T must be at least 1"),
            ((0.0..=1.0).contains(&self.gamma), "gamma must lie in [0, 1]"),
            ((0.0..=1.0).contains(&self.gae_lambda), "gae_lambda must lie in [0, 1]"),
            (self.kl_limit > 0.0, "kl_limit must be positive"),
            (self.cg_iters >= 1, "cg_iters must be at least 1"),
            (self.n_traj_per_epoch >= 1, "n_traj_per_epoch must be at least 1"),
            (self.bc_lr > 0.0 && self.bc_minibatch >= 1, "invalid behavior cloning settings"),
            (self.value_minibatch >= 1 && self.value_lr > 0.0, "invalid value fitting settings"),
            (self.adv_clip > 0.0, "adv_clip must be positive"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(invalid_arg(msg));
            }
        }
        Ok(())
    }
}
