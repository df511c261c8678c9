//! The learner: rollouts, advantages, value/Q fitting, demonstration
//! weighting, augmented policy gradients, the trust-region step, behavior
//! cloning and the epoch driver.

pub mod advantage;
pub mod bc;
pub mod config;
pub mod gradient;
pub mod rollout;
pub mod train;
pub mod trpo;
pub mod weights;

pub use advantage::{
    batch_returns, demo_advantage, discounted_returns, fit_value_functions, gae, gae_advantages, gae_from_values,
    normalize, ValueData, ValueFit, ValueLearner,
};
pub use bc::{bc_loss, bc_pretrain, bc_update, BcData, BcTarget};
pub use config::IladConfig;
pub use gradient::{dapg_gradient, ilad_gradient, pg_term, GradientTerms, PgData, TermRows};
pub use rollout::{collect_rollouts, object_embeddings, run_episode, ActionMode, RolloutBatch, Trajectory};
pub use train::{train, EpochMetrics, EpochTrace, Mode, TrainOutput};
pub use trpo::{conjugate_gradient, fisher_vector_product, mean_kl, surrogate, trpo_step, TrpoInfo};
pub use weights::{mean_neg_log_likelihood, normalized_weights, traj_neg_log_likelihood};

use crate::nets::ObsBatch;
use crate::planner::DemoSet;
use crate::sim::Action;
use std::ops::Range;

/// Demonstration pairs packed for batched evaluation, with each
/// trajectory's row range.
#[derive(Debug, Clone, Default)]
pub struct DemoData {
    pub batch: ObsBatch,
    pub actions: Vec<Action>,
    pub ranges: Vec<Range<usize>>,
}

impl DemoData {
    /// Empty demonstrations are skipped.
    pub fn from_set(set: &DemoSet) -> Self {
        let kept: Vec<_> = set.demonstrations.iter().filter(|d| !d.is_empty()).collect();
        let batch = ObsBatch::new(kept.iter().flat_map(|d| d.pairs.iter().map(|(o, _)| o)));
        let actions = kept.iter().flat_map(|d| d.pairs.iter().map(|(_, a)| *a)).collect();
        let mut ranges = Vec::with_capacity(kept.len());
        let mut off = 0;
        for d in &kept {
            ranges.push(off..off + d.len());
            off += d.len();
        }
        DemoData { batch, actions, ranges }
    }

    /// Number of pairs.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}
