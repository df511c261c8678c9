//! Scripted planner-oracle: plan an antipodal grasp, reach it with CEM/MPC,
//! close until the grasp engages, then carry the palm straight to the target.

use super::eval::{Controller, EpisodeOutcome};
use crate::error::Result;
use crate::planner::{mpc_execute, synthesize_grasps_with, CemConfig, GraspOptions, GraspTarget, ReachGoal};
use crate::sim::{self, Action, EnvState, ObjectAsset, SimConfig, DOF};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleController {
    pub cem: CemConfig,
    pub grasp_candidates: usize,
    /// Steps spent closing the fingers when the reach ends without a grasp.
    pub close_steps: usize,
    /// Grasp plans tried from the current object pose before giving up.
    pub attempts: usize,
}

impl Default for OracleController {
    fn default() -> Self {
        OracleController {
            cem: CemConfig {
                delta: 0.01,
                ..CemConfig::default()
            },
            grasp_candidates: 3,
            close_steps: 20,
            attempts: 3,
        }
    }
}

fn finish(state: &EnvState, steps: usize, ret: f64, success: bool) -> EpisodeOutcome {
    EpisodeOutcome {
        success,
        steps,
        final_distance: state.object_xy().dist(state.target),
        total_return: ret,
    }
}

/// Finger command that drives each fingertip past its contact point along
/// the inward contact normal.
fn closing_action(state: &EnvState, grasp: &GraspTarget, clip: f64) -> Action {
    let mut dq = [0.0; DOF];
    for (d, (g, q)) in dq.iter_mut().zip(grasp.jh.iter().zip(&state.hand.q)) {
        *d = (g - q).clamp(-clip, clip);
    }
    let squeeze = 0.02;
    let mut target = grasp.clone();
    for (i, c) in grasp.contacts.iter().enumerate() {
        target.contacts[i].point = c.point - c.normal * squeeze;
    }
    let links = (sim::LINK1, sim::LINK2);
    let hand = state.hand;
    for (f, elbow) in [(0usize, crate::planner::Elbow::Up), (1, crate::planner::Elbow::Down)] {
        if let Ok((a, b)) = crate::planner::inverse_kinematics_branch(target.contacts[f].point, hand.mount(f), links, elbow) {
            let j = 3 + 2 * f;
            dq[j] = (a - hand.q[j]).clamp(-clip, clip);
            dq[j + 1] = (b - hand.q[j + 1]).clamp(-clip, clip);
        }
    }
    Action { dq }
}

impl Controller for OracleController {
    fn episode(&self, object: &Arc<ObjectAsset>, sim_cfg: &SimConfig, seed: u64) -> Result<EpisodeOutcome> {
        let (mut state, _) = sim::reset(Arc::clone(object), sim_cfg, seed);
        let mut steps = 0;
        let mut ret = 0.0;
        let mut step = |state: &mut EnvState, a: &Action| -> Result<bool> {
            let (r, done, ev) = sim::advance(state, a, sim_cfg)?;
            steps += 1;
            ret += r;
            Ok(done && (ev.success || state.done))
        };
        for attempt in 0..self.attempts as u64 {
            if state.grasped || state.done {
                break;
            }
            let opts = GraspOptions {
                preferred_rotation: state.hand.q[2],
                ..GraspOptions::default()
            };
            let s = crate::rng::mix(seed, &[attempt]);
            let Ok(grasps) = synthesize_grasps_with(&state.world_polygon(), self.grasp_candidates, s, &opts) else {
                break;
            };
            let Some(plan) = grasps
                .iter()
                .find_map(|g| mpc_execute(&state, &ReachGoal::Grasp(g.clone()), &self.cem, sim_cfg, s).ok())
            else {
                break;
            };
            for (_, a) in &plan.pairs {
                if step(&mut state, a)? {
                    break;
                }
            }
            for _ in 0..self.close_steps {
                if state.grasped || state.done {
                    break;
                }
                let a = closing_action(&state, &plan.grasp, sim_cfg.action_clip);
                if step(&mut state, &a)? {
                    break;
                }
            }
        }
        while state.grasped && !state.done {
            let d = state.target - state.object_xy();
            let mut dq = [0.0; DOF];
            dq[0] = d.x.clamp(-sim_cfg.action_clip, sim_cfg.action_clip);
            dq[1] = d.y.clamp(-sim_cfg.action_clip, sim_cfg.action_clip);
            step(&mut state, &Action { dq })?;
        }
        let ok = sim::is_success(&state, sim_cfg);
        Ok(finish(&state, steps, ret, ok))
    }

    fn fingerprint(&self) -> String {
        format!("oracle:{:?}:{}:{}:{}", self.cem, self.grasp_candidates, self.close_steps, self.attempts)
    }
}
