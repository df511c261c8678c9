//! Affordance demonstration generation: grasp synthesis, CEM/MPC reach
//! planning, the RRT baseline, and batch demo-set production.

pub mod cem;
pub mod grasp;
pub mod ik;
pub mod rrt;

pub use cem::{cem_iterate, mpc_execute, CemConfig, CemState};
pub use grasp::{synthesize_grasps, synthesize_grasps_with, GraspContact, GraspOptions, GraspTarget};
pub use ik::{inverse_kinematics, inverse_kinematics_branch, Elbow};
pub use rrt::{rrt_plan, RrtConfig};

use crate::error::{Error, Result};
use crate::geom::{wrap_angle, Pose2};
use crate::rng::{self, tag};
use crate::shapes::{Category, PointCloud};
use crate::sim::{self, Action, EnvState, Joints, ObjectAsset, Observation, SimConfig, DOF};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

/// What the reaching term of the planning objective pulls toward.
#[derive(Debug, Clone, PartialEq)]
pub enum ReachGoal {
    /// Full hand configuration `jh` of a synthesized grasp.
    Grasp(GraspTarget),
    /// Palm position to the object centroid; no grasp pose is used.
    PalmToCentroid,
}

impl ReachGoal {
    pub fn record(&self) -> GraspTarget {
        match self {
            ReachGoal::Grasp(g) => g.clone(),
            ReachGoal::PalmToCentroid => GraspTarget::palm_only(),
        }
    }
}

/// Joint difference with the palm rotation wrapped.
pub fn joint_delta(a: &Joints, b: &Joints) -> Joints {
    let mut d = [0.0; DOF];
    for i in 0..DOF {
        d[i] = a[i] - b[i];
    }
    d[2] = wrap_angle(d[2]);
    d
}

pub fn joint_distance(a: &Joints, b: &Joints) -> f64 {
    joint_delta(a, b).iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Moves `eps` from `from` toward `to` along the straight joint-space line.
pub fn joint_step(from: &Joints, to: &Joints, eps: f64) -> Joints {
    let d = joint_delta(to, from);
    let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut q = *from;
    if n > 0.0 {
        for i in 0..DOF {
            q[i] += eps * d[i] / n;
        }
    }
    q[2] = wrap_angle(q[2]);
    q
}

/// Planar pose distance; the angle is scaled by the object's bounding
/// radius so that all three terms are lengths.
pub fn pose_displacement(p1: &Pose2, pk: &Pose2, radius: f64) -> f64 {
    let dth = radius * wrap_angle(pk.theta - p1.theta);
    ((pk.x - p1.x).powi(2) + (pk.y - p1.y).powi(2) + dth * dth).sqrt()
}

/// Reaching error plus `lambda` times squared object displacement since `start_pose`.
pub fn planning_cost(start_pose: &Pose2, last: &EnvState, goal: &ReachGoal, lambda: f64) -> f64 {
    let reach = match goal {
        ReachGoal::Grasp(g) => joint_delta(&last.hand.q, &g.jh).iter().map(|v| v * v).sum::<f64>(),
        ReachGoal::PalmToCentroid => last.hand.palm().translation().dist(last.object_xy()).powi(2),
    };
    let d = pose_displacement(start_pose, &last.pose, last.object.polygon.bounding_radius());
    reach + lambda * d * d
}

/// Objective over an executed trajectory: first state supplies the initial
/// object pose, last state the final hand and object configuration.
pub fn planning_objective(traj_states: &[EnvState], goal: &ReachGoal, lambda: f64) -> Result<f64> {
    let (Some(first), Some(last)) = (traj_states.first(), traj_states.last()) else {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    };
    Ok(planning_cost(&first.pose, last, goal, lambda))
}

/// A partial (reach-and-grasp) demonstration.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub category: Category,
    pub object_id: u32,
    pub pairs: Vec<(Observation, Action)>,
    pub final_cost: f64,
    pub displacement: f64,
    pub grasp: GraspTarget,
}

impl Demonstration {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Expert state-action data plus the per-trajectory negative log-likelihood
/// cache refreshed once per training epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DemoSet {
    pub demonstrations: Vec<Demonstration>,
    pub l_values: Vec<f64>,
}

impl DemoSet {
    pub fn new(demonstrations: Vec<Demonstration>) -> Self {
        DemoSet {
            demonstrations,
            l_values: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.demonstrations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.demonstrations.len()
    }

    pub fn n_pairs(&self) -> usize {
        self.demonstrations.iter().map(|d| d.len()).sum()
    }

    /// Keeps the first `n` demonstrations of each object (round-robin order is
    /// preserved), used to build small/large demo-count variants.
    pub fn truncated_per_object(&self, n: usize) -> DemoSet {
        let mut seen: HashMap<(Category, u32), usize> = HashMap::new();
        let demos = self
            .demonstrations
            .iter()
            .filter(|d| {
                let c = seen.entry((d.category, d.object_id)).or_insert(0);
                *c += 1;
                *c <= n
            })
            .cloned()
            .collect();
        DemoSet::new(demos)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PairRecord {
    obs: Observation,
    act: Joints,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DemoRecord {
    object_id: u32,
    category: Category,
    grasp: GraspTarget,
    final_cost: f64,
    displacement: f64,
    pairs: Vec<PairRecord>,
}

/// Writes one JSON record per demonstration.
pub fn write_demo_file(path: &Path, demos: &DemoSet) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for d in &demos.demonstrations {
        let rec = DemoRecord {
            object_id: d.object_id,
            category: d.category,
            grasp: d.grasp.clone(),
            final_cost: d.final_cost,
            displacement: d.displacement,
            pairs: d
                .pairs
                .iter()
                .map(|(o, a)| PairRecord { obs: o.clone(), act: a.dq })
                .collect(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_demo_file(path: &Path) -> Result<DemoSet> {
    let r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut clouds: HashMap<(Category, u32), Arc<PointCloud>> = HashMap::new();
    let mut demos = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DemoRecord = serde_json::from_str(&line)?;
        let pairs = rec
            .pairs
            .into_iter()
            .map(|p| {
                let cloud = clouds
                    .entry((rec.category, rec.object_id))
                    .or_insert_with(|| Arc::clone(&p.obs.cloud));
                let obs = Observation {
                    cloud: Arc::clone(cloud),
                    ..p.obs
                };
                (obs, Action { dq: p.act })
            })
            .collect();
        demos.push(Demonstration {
            category: rec.category,
            object_id: rec.object_id,
            pairs,
            final_cost: rec.final_cost,
            displacement: rec.displacement,
            grasp: rec.grasp,
        });
    }
    Ok(DemoSet::new(demos))
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlannerKind {
    Cem,
    Rrt(RrtConfig),
}

/// Per-object row of the generation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRow {
    pub object_id: u32,
    pub attempts: usize,
    pub accepted: usize,
    pub mean_cost: f64,
    pub mean_displacement: f64,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationReport {
    pub rows: Vec<GenerationRow>,
}

impl GenerationReport {
    pub fn attempts(&self) -> usize {
        self.rows.iter().map(|r| r.attempts).sum()
    }

    pub fn accepted(&self) -> usize {
        self.rows.iter().map(|r| r.accepted).sum()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Options for [`generate_demo_set`].
#[derive(Debug, Clone, PartialEq)]
pub struct DemoGenConfig {
    pub cem: CemConfig,
    pub planner: PlannerKind,
    pub use_grasp_pose: bool,
    /// Attempts per object are capped at `retry_factor * per_object`.
    pub retry_factor: usize,
    pub grasps_per_attempt: usize,
}

impl Default for DemoGenConfig {
    fn default() -> Self {
        DemoGenConfig {
            cem: CemConfig::default(),
            planner: PlannerKind::Cem,
            use_grasp_pose: true,
            retry_factor: 5,
            grasps_per_attempt: 3,
        }
    }
}

fn plan_one(
    asset: &Arc<ObjectAsset>,
    attempt: usize,
    cfg: &DemoGenConfig,
    sim_cfg: &SimConfig,
    seed: u64,
) -> Result<Demonstration> {
    let key = [tag::DEMOS, asset.polygon.category as u64, asset.polygon.instance_id as u64, attempt as u64];
    let episode_seed = rng::mix(seed, &key);
    let (env, _) = sim::reset(Arc::clone(asset), sim_cfg, episode_seed);
    let goal = if cfg.use_grasp_pose || matches!(cfg.planner, PlannerKind::Rrt(_)) {
        let opts = GraspOptions {
            preferred_rotation: env.hand.q[2],
            ..GraspOptions::default()
        };
        let grasps = synthesize_grasps_with(&env.world_polygon(), cfg.grasps_per_attempt, episode_seed, &opts)?;
        ReachGoal::Grasp(grasps[attempt % grasps.len()].clone())
    } else {
        ReachGoal::PalmToCentroid
    };
    match &cfg.planner {
        PlannerKind::Cem => mpc_execute(&env, &goal, &cfg.cem, sim_cfg, episode_seed),
        PlannerKind::Rrt(r) => rrt_plan(&env, &goal, r, cfg.cem.delta, cfg.cem.lambda_obj, sim_cfg, episode_seed),
    }
}

/// Plans demonstrations for every object until `per_object` are accepted or
/// the retry budget runs out. Objects are processed in parallel; output order
/// is the object order.
pub fn generate_demo_set(
    objects: &[Arc<ObjectAsset>],
    per_object: usize,
    cfg: &DemoGenConfig,
    sim_cfg: &SimConfig,
    seed: u64,
) -> Result<(DemoSet, GenerationReport)> {
    if per_object < 1 {
        return Err(Error::InvalidArgument("per_object must be at least 1".into()));
    }
    cfg.cem.validate()?;
    let results: Vec<(Vec<Demonstration>, GenerationRow)> = objects
        .par_iter()
        .map(|asset| {
            let mut accepted = Vec::new();
            let mut attempts = 0;
            while accepted.len() < per_object && attempts < cfg.retry_factor * per_object {
                match plan_one(asset, attempts, cfg, sim_cfg, seed) {
                    Ok(d) => accepted.push(d),
                    Err(e) => log::debug!(
                        "{} #{} attempt {attempts}: {e}",
                        asset.polygon.category,
                        asset.polygon.instance_id
                    ),
                }
                attempts += 1;
            }
            if accepted.len() < per_object {
                log::warn!(
                    "{} #{}: {} of {per_object} demonstrations after {attempts} attempts",
                    asset.polygon.category,
                    asset.polygon.instance_id,
                    accepted.len()
                );
            }
            let n = accepted.len().max(1) as f64;
            let row = GenerationRow {
                object_id: asset.polygon.instance_id,
                attempts,
                accepted: accepted.len(),
                mean_cost: accepted.iter().map(|d| d.final_cost).sum::<f64>() / n,
                mean_displacement: accepted.iter().map(|d| d.displacement).sum::<f64>() / n,
                category: asset.polygon.category,
            };
            (accepted, row)
        })
        .collect();
    let mut demos = Vec::new();
    let mut rows = Vec::new();
    for (d, r) in results {
        demos.extend(d);
        rows.push(r);
    }
    if demos.is_empty() {
        return Err(Error::GenerationFailed("no demonstration accepted".into()));
    }
    Ok((DemoSet::new(demos), GenerationReport { rows }))
}
