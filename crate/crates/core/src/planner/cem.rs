//! Cross-entropy method over flat action sequences, and the MPC loop that
//! turns it into reach-and-grasp demonstrations.

use super::{planning_cost, Demonstration, ReachGoal};
use crate::error::{Error, Result};
use crate::geom::Pose2;
use crate::rng::{self, tag};
use crate::sim::{self, Action, EnvState, SimConfig, DOF};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub const SIGMA_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CemConfig {
    pub n_samples: usize,
    pub n_elites: usize,
    pub horizon: usize,
    pub max_mpc_steps: usize,
    pub cem_iters: usize,
    pub init_sigma: f64,
    pub delta: f64,
    pub lambda_obj: f64,
}

impl Default for CemConfig {
    fn default() -> Self {
        CemConfig {
            n_samples: 200,
            n_elites: 10,
            horizon: 5,
            max_mpc_steps: 150,
            cem_iters: 5,
            init_sigma: 0.03,
            delta: 0.06,
            lambda_obj: 10.0,
        }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_samples > 0
            && self.n_elites > 0
            && self.n_elites <= self.n_samples
            && self.horizon > 0
            && self.max_mpc_steps > 0
            && self.cem_iters > 0
            && self.init_sigma > 0.0
            && self.delta > 0.0
            && self.lambda_obj > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid CEM config {self:?}")))
        }
    }
}

/// Search distribution plus best-so-far bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct CemState {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub best: Vec<f64>,
    pub best_cost: f64,
}

impl CemState {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Self {
        let best = mu.clone();
        CemState {
            mu,
            sigma,
            best,
            best_cost: f64::INFINITY,
        }
    }
}

/// One refinement: sample, score, refit to the elites.
pub fn cem_iterate<F>(
    state: &mut CemState,
    n_samples: usize,
    n_elites: usize,
    bounds: Option<(f64, f64)>,
    rng: &mut rng::Rng,
    cost: F,
) where
    F: Fn(&[f64]) -> f64,
{
    let dim = state.mu.len();
    let mut samples = vec![0.0; n_samples * dim];
    for s in samples.chunks_mut(dim) {
        for (i, x) in s.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            let mut v = state.mu[i] + state.sigma[i] * z;
            if let Some((lo, hi)) = bounds {
                v = v.clamp(lo, hi);
            }
            *x = v;
        }
    }
    let costs: Vec<f64> = samples.chunks(dim).map(&cost).collect();
    let mut order: Vec<usize> = (0..n_samples).collect();
    order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]));
    let elites = &order[..n_elites.min(n_samples)];
    let m = elites.len() as f64;
    for i in 0..dim {
        let mean = elites.iter().map(|&e| samples[e * dim + i]).sum::<f64>() / m;
        let var = elites
            .iter()
            .map(|&e| (samples[e * dim + i] - mean).powi(2))
            .sum::<f64>()
            / m;
        state.mu[i] = mean;
        state.sigma[i] = var.sqrt().max(SIGMA_FLOOR);
    }
    let top = order[0];
    if costs[top] < state.best_cost {
        state.best_cost = costs[top];
        state.best.copy_from_slice(&samples[top * dim..(top + 1) * dim]);
    }
}

/// Rolls a flat action sequence out on a private copy of `snapshot` and
/// scores the end state.
pub fn rollout_cost(
    snapshot: &EnvState,
    start_pose: &Pose2,
    goal: &ReachGoal,
    seq: &[f64],
    cfg: &CemConfig,
    sim_cfg: &SimConfig,
) -> f64 {
    let mut s = snapshot.clone();
    for a in seq.chunks(DOF) {
        let act = Action {
            dq: a.try_into().expect("chunk of DOF"),
        };
        if sim::advance(&mut s, &act, sim_cfg).is_err() {
            break;
        }
    }
    planning_cost(start_pose, &s, goal, cfg.lambda_obj)
}

/// Planning copy of the simulator settings: episodes never time out inside
/// the planner.
pub(crate) fn planning_sim(sim_cfg: &SimConfig) -> SimConfig {
    SimConfig {
        horizon: usize::MAX,
        ..sim_cfg.clone()
    }
}

/// Receding-horizon execution of CEM plans until the objective over the
/// executed trajectory drops below `delta`.
pub fn mpc_execute(
    env: &EnvState,
    goal: &ReachGoal,
    cfg: &CemConfig,
    sim_cfg: &SimConfig,
    seed: u64,
) -> Result<Demonstration> {
    cfg.validate()?;
    let psim = planning_sim(sim_cfg);
    let mut rng = rng::stream(seed, &[tag::CEM]);
    let start_pose = env.pose;
    let mut state = EnvState {
        done: false,
        ..env.clone()
    };
    let dim = DOF * cfg.horizon;
    let clip = sim_cfg.action_clip;
    let mut mu = vec![0.0; dim];
    let mut pairs = Vec::new();
    let mut cost = planning_cost(&start_pose, &state, goal, cfg.lambda_obj);
    while cost >= cfg.delta && pairs.len() < cfg.max_mpc_steps {
        let mut cem = CemState::new(mu.clone(), vec![cfg.init_sigma; dim]);
        for _ in 0..cfg.cem_iters {
            cem_iterate(&mut cem, cfg.n_samples, cfg.n_elites, Some((-clip, clip)), &mut rng, |seq| {
                rollout_cost(&state, &start_pose, goal, seq, cfg, &psim)
            });
        }
        let act = Action {
            dq: cem.best[..DOF].try_into().expect("DOF slice"),
        };
        pairs.push((state.observation(), act));
        sim::advance(&mut state, &act, &psim)?;
        cost = planning_cost(&start_pose, &state, goal, cfg.lambda_obj);
        // Warm start: shift the best plan by one step.
        mu.copy_from_slice(&cem.best);
        mu.rotate_left(DOF);
        mu[dim - DOF..].fill(0.0);
    }
    if cost >= cfg.delta {
        return Err(Error::PlanningFailed(format!(
            "objective {cost:.4} >= delta {} after {} MPC steps",
            cfg.delta,
            pairs.len()
        )));
    }
    Ok(Demonstration {
        category: env.object.polygon.category,
        object_id: env.object.polygon.instance_id,
        pairs,
        final_cost: cost,
        displacement: super::pose_displacement(&start_pose, &state.pose, env.object.polygon.bounding_radius()),
        grasp: goal.record(),
    })
}
