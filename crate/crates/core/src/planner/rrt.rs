//! Goal-biased RRT in joint space; the baseline demonstration planner.
//! It ignores the object entirely and only reaches the target joints.

use super::{joint_distance, joint_step, planning_cost, Demonstration, ReachGoal};
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::sim::{self, Action, EnvState, Joints, SimConfig, DOF};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RrtConfig {
    pub nodes: usize,
    pub eps: f64,
    pub beta: f64,
}

impl Default for RrtConfig {
    fn default() -> Self {
        RrtConfig {
            nodes: 10_000,
            eps: 0.01,
            beta: 0.5,
        }
    }
}

struct Node {
    q: Joints,
    parent: usize,
}

fn random_config(rng: &mut rng::Rng, half: f64) -> Joints {
    let mut q = [0.0; DOF];
    q[0] = rng.random_range(-half..half);
    q[1] = rng.random_range(-half..half);
    q[2] = rng.random_range(-PI..PI);
    for v in &mut q[3..] {
        *v = rng.random_range(-FRAC_PI_2..FRAC_PI_2);
    }
    q
}

/// Searches a joint path from the current hand to within `goal_tol` of the
/// goal joints and returns the path replayed through the environment.
#[allow(clippy::too_many_arguments)]
pub fn rrt_plan(
    env: &EnvState,
    goal: &ReachGoal,
    rrt: &RrtConfig,
    goal_tol: f64,
    lambda_obj: f64,
    sim_cfg: &SimConfig,
    seed: u64,
) -> Result<Demonstration> {
    let jh = match goal {
        ReachGoal::Grasp(g) => g.jh,
        ReachGoal::PalmToCentroid => {
            return Err(Error::InvalidArgument("RRT needs a joint-space goal".into()));
        }
    };
    let mut rng = rng::stream(seed, &[tag::RRT]);
    let mut tree = vec![Node {
        q: env.hand.q,
        parent: 0,
    }];
    let mut reached = (joint_distance(&env.hand.q, &jh) <= goal_tol).then_some(0);
    while reached.is_none() && tree.len() < rrt.nodes {
        let sample = if rng.random::<f64>() < rrt.beta {
            jh
        } else {
            random_config(&mut rng, sim_cfg.workspace_half)
        };
        let (nearest, d) = tree
            .iter()
            .enumerate()
            .map(|(i, n)| (i, joint_distance(&n.q, &sample)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("tree is never empty");
        if d == 0.0 {
            continue;
        }
        let q = joint_step(&tree[nearest].q, &sample, rrt.eps.min(d));
        tree.push(Node { q, parent: nearest });
        if joint_distance(&q, &jh) <= goal_tol {
            reached = Some(tree.len() - 1);
        }
    }
    let Some(mut idx) = reached else {
        return Err(Error::PlanningFailed(format!(
            "RRT exhausted {} nodes without reaching the goal",
            rrt.nodes
        )));
    };
    let mut path = vec![tree[idx].q];
    while idx != 0 {
        idx = tree[idx].parent;
        path.push(tree[idx].q);
    }
    path.reverse();

    let psim = super::cem::planning_sim(sim_cfg);
    let start_pose = env.pose;
    let mut state = EnvState {
        done: false,
        ..env.clone()
    };
    let mut pairs = Vec::with_capacity(path.len().saturating_sub(1));
    for w in path.windows(2) {
        let mut dq = [0.0; DOF];
        for i in 0..DOF {
            dq[i] = w[1][i] - w[0][i];
        }
        dq[2] = crate::geom::wrap_angle(dq[2]);
        let act = Action { dq };
        pairs.push((state.observation(), act));
        sim::advance(&mut state, &act, &psim)?;
    }
    let final_cost = planning_cost(&start_pose, &state, goal, lambda_obj);
    Ok(Demonstration {
        category: env.object.polygon.category,
        object_id: env.object.polygon.instance_id,
        pairs,
        final_cost,
        displacement: super::pose_displacement(&start_pose, &state.pose, env.object.polygon.bounding_radius()),
        grasp: goal.record(),
    })
}
