//! Quasi-static planar relocate environment for a 7-DoF two-finger gripper.
//!
//! Fingertips are the only colliders. An un-grasped object is translated out
//! of fingertip penetration (bounded per step); once two opposed contacts
//! engage, the object is locked to the palm frame until both fingertips lose
//! contact.

use crate::error::{invalid_arg, Error, Result};
use crate::geom::{self, wrap_angle, BoundaryQuery, Pose2, Vec2};
use crate::rng::{self, tag};
use crate::shapes::{self, PointCloud, Polygon};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;
use std::sync::Arc;

pub const DOF: usize = 7;
pub const LINK1: f64 = 0.12;
pub const LINK2: f64 = 0.10;
pub const PALM_HALF_WIDTH: f64 = 0.08;
/// Length of the flat (non-cloud) observation: pose (3) + q (7) + target (2).
pub const FLAT_OBS_DIM: usize = 12;

pub type Joints = [f64; DOF];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub horizon: usize,
    pub action_clip: f64,
    pub contact_tol: f64,
    pub opposition_threshold: f64,
    pub max_push: f64,
    pub workspace_half: f64,
    pub n_points: usize,
    pub start_center: [f64; 2],
    pub goal_center: [f64; 2],
    pub region_half: f64,
    pub success_radius: f64,
    pub home: Joints,
    pub reach_coef: f64,
    pub grasp_bonus: f64,
    pub carry_coef: f64,
    pub success_bonus: f64,
    pub action_cost: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            horizon: 200,
            action_clip: 0.05,
            contact_tol: 0.015,
            opposition_threshold: -0.5,
            max_push: 0.02,
            workspace_half: 1.5,
            n_points: shapes::DEFAULT_CLOUD_POINTS,
            // x-gap between the two regions is 0.5, so every start/goal pair is >= 0.5 apart.
            start_center: [-0.4, 0.0],
            goal_center: [0.7, 0.0],
            region_half: 0.3,
            success_radius: 0.1,
            home: [-0.4, -0.95, 0.0, 0.35, 0.0, -0.35, 0.0],
            reach_coef: 0.1,
            grasp_bonus: 1.0,
            carry_coef: 0.5,
            success_bonus: 10.0,
            action_cost: 0.001,
        }
    }
}

/// An object instance with its cached observation cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectAsset {
    pub polygon: Polygon,
    pub cloud: Arc<PointCloud>,
}

impl ObjectAsset {
    pub fn new(polygon: Polygon, n_points: usize) -> Result<Self> {
        let cloud = shapes::sample_point_cloud(&polygon, n_points, shapes::cloud_seed(&polygon))?;
        Ok(ObjectAsset {
            polygon,
            cloud: Arc::new(cloud),
        })
    }

    pub fn key(&self) -> (shapes::Category, u32) {
        (self.polygon.category, self.polygon.instance_id)
    }
}

pub fn assets(objects: &[Polygon], n_points: usize) -> Result<Vec<Arc<ObjectAsset>>> {
    objects
        .iter()
        .map(|p| ObjectAsset::new(p.clone(), n_points).map(Arc::new))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandState {
    pub q: Joints,
}

impl HandState {
    pub fn palm(&self) -> Pose2 {
        Pose2::new(self.q[0], self.q[1], self.q[2])
    }

    /// Mount pose of finger `i` (0 = left, 1 = right) in world coordinates.
    pub fn mount(&self, i: usize) -> Pose2 {
        let side = if i == 0 { -1.0 } else { 1.0 };
        self.palm().compose(&Pose2::new(side * PALM_HALF_WIDTH, 0.0, FRAC_PI_2))
    }
}

/// Tip of a two-link planar chain expressed in its mount frame.
pub fn chain_tip(j1: f64, j2: f64, links: (f64, f64)) -> Vec2 {
    Vec2::new(
        links.0 * j1.cos() + links.1 * (j1 + j2).cos(),
        links.0 * j1.sin() + links.1 * (j1 + j2).sin(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub tip1: Vec2,
    pub tip2: Vec2,
    pub palm: Pose2,
}

pub fn forward_kinematics(hand: &HandState) -> Kinematics {
    let q = &hand.q;
    let tip = |i: usize, j1: f64, j2: f64| hand.mount(i).apply(chain_tip(j1, j2, (LINK1, LINK2)));
    Kinematics {
        tip1: tip(0, q[3], q[4]),
        tip2: tip(1, q[5], q[6]),
        palm: hand.palm(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub dq: Joints,
}

impl Action {
    pub const ZERO: Action = Action { dq: [0.0; DOF] };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub cloud: Arc<PointCloud>,
    pub pose: Pose2,
    pub q: Joints,
    pub target: Vec2,
}

impl Observation {
    pub fn flat(&self) -> [f64; FLAT_OBS_DIM] {
        let mut f = [0.0; FLAT_OBS_DIM];
        f[0] = self.pose.x;
        f[1] = self.pose.y;
        f[2] = self.pose.theta;
        f[3..10].copy_from_slice(&self.q);
        f[10] = self.target.x;
        f[11] = self.target.y;
        f
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub hand: HandState,
    pub pose: Pose2,
    pub grasped: bool,
    pub target: Vec2,
    pub object: Arc<ObjectAsset>,
    pub step_count: usize,
    /// Object pose in the palm frame; meaningful while grasped.
    pub grasp_offset: Pose2,
    pub grasp_rewarded: bool,
    pub done: bool,
}

impl EnvState {
    pub fn observation(&self) -> Observation {
        Observation {
            cloud: Arc::clone(&self.object.cloud),
            pose: self.pose,
            q: self.hand.q,
            target: self.target,
        }
    }

    pub fn object_xy(&self) -> Vec2 {
        self.pose.translation()
    }

    /// The object polygon placed at its current pose.
    pub fn world_polygon(&self) -> Polygon {
        self.object.polygon.transformed(&self.pose)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub tip: Vec2,
    pub query: BoundaryQuery,
    pub touching: bool,
}

/// Fingertip proximity against the object at its current pose. Penetration
/// counts as contact; normals are outward and expressed in world frame.
pub fn contacts(state: &EnvState, cfg: &SimConfig) -> [Contact; 2] {
    let k = forward_kinematics(&state.hand);
    let verts = &state.object.polygon.vertices;
    let one = |tip: Vec2| {
        let local = state.pose.apply_inverse(tip);
        let mut q = geom::query_boundary(verts, local);
        q.nearest = state.pose.apply(q.nearest);
        q.normal = q.normal.rotate(state.pose.theta);
        Contact {
            tip,
            query: q,
            touching: q.signed_distance <= cfg.contact_tol,
        }
    };
    [one(k.tip1), one(k.tip2)]
}

/// Both fingertips touching with opposed outward normals.
pub fn grasp_check(contacts: &[Contact], opposition_threshold: f64) -> bool {
    contacts.len() == 2
        && contacts.iter().all(|c| c.touching)
        && contacts[0].query.normal.dot(contacts[1].query.normal) < opposition_threshold
}

pub fn is_success(state: &EnvState, cfg: &SimConfig) -> bool {
    state.object_xy().dist(state.target) <= cfg.success_radius
}

/// One-off events of a transition, needed by the reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepEvents {
    pub grasp_engaged: bool,
    pub released: bool,
    pub success: bool,
}

/// Shaped relocate reward evaluated on the successor state.
pub fn reward(state: &EnvState, action: &Action, events: &StepEvents, first_grasp: bool, cfg: &SimConfig) -> f64 {
    let dq = clip_action(action, cfg.action_clip);
    let mut r = -cfg.action_cost * dq.iter().map(|d| d * d).sum::<f64>();
    if state.grasped {
        r -= cfg.carry_coef * state.object_xy().dist(state.target);
    } else {
        r -= cfg.reach_coef * state.hand.palm().translation().dist(state.object_xy());
    }
    if events.grasp_engaged && first_grasp {
        r += cfg.grasp_bonus;
    }
    if events.success {
        r += cfg.success_bonus;
    }
    r
}

pub fn clip_action(action: &Action, clip: f64) -> Joints {
    action.dq.map(|d| d.clamp(-clip, clip))
}

fn clamp_xy(v: Vec2, half: f64) -> Vec2 {
    Vec2::new(v.x.clamp(-half, half), v.y.clamp(-half, half))
}

fn in_workspace(v: Vec2, half: f64) -> bool {
    v.x.abs() <= half && v.y.abs() <= half
}

fn integrate(q: &Joints, dq: &Joints, cfg: &SimConfig) -> Joints {
    let mut n = [0.0; DOF];
    for i in 0..DOF {
        n[i] = q[i] + dq[i];
    }
    n[0] = n[0].clamp(-cfg.workspace_half, cfg.workspace_half);
    n[1] = n[1].clamp(-cfg.workspace_half, cfg.workspace_half);
    n[2] = wrap_angle(n[2]);
    for v in &mut n[3..] {
        *v = v.clamp(-FRAC_PI_2, FRAC_PI_2);
    }
    n
}

/// Samples the episode start: object pose in the start region, target in
/// the goal region, hand at home.
pub fn reset(object: Arc<ObjectAsset>, cfg: &SimConfig, seed: u64) -> (EnvState, Observation) {
    let mut rng = rng::stream(seed, &[tag::RESET]);
    let mut draw = |c: [f64; 2]| {
        Vec2::new(
            c[0] + cfg.region_half * (2.0 * rng.random::<f64>() - 1.0),
            c[1] + cfg.region_half * (2.0 * rng.random::<f64>() - 1.0),
        )
    };
    let start = draw(cfg.start_center);
    let target = draw(cfg.goal_center);
    let theta = wrap_angle(PI - 2.0 * PI * rng.random::<f64>());
    let state = EnvState {
        hand: HandState { q: cfg.home },
        pose: Pose2::new(start.x, start.y, theta),
        grasped: false,
        target,
        object,
        step_count: 0,
        grasp_offset: Pose2::IDENTITY,
        grasp_rewarded: false,
        done: false,
    };
    let obs = state.observation();
    (state, obs)
}

/// Advances `state` in place; returns reward, done flag and events.
pub fn advance(state: &mut EnvState, action: &Action, cfg: &SimConfig) -> Result<(f64, bool, StepEvents)> {
    if state.done {
        return Err(Error::InvalidState("episode already finished".into()));
    }
    if !action.dq.iter().all(|d| d.is_finite()) {
        return Err(invalid_arg("non-finite action"));
    }
    let dq = clip_action(action, cfg.action_clip);
    let mut events = StepEvents::default();
    let mut q = integrate(&state.hand.q, &dq, cfg);

    if state.grasped {
        let palm = Pose2::new(q[0], q[1], q[2]);
        if !in_workspace(palm.compose(&state.grasp_offset).translation(), cfg.workspace_half) {
            q[..3].copy_from_slice(&state.hand.q[..3]);
        }
        state.hand.q = q;
        state.pose = state.hand.palm().compose(&state.grasp_offset);
        let c = contacts(state, cfg);
        if !c[0].touching && !c[1].touching {
            state.grasped = false;
            events.released = true;
        }
    } else {
        state.hand.q = q;
        let c = contacts(state, cfg);
        let mut push = Vec2::ZERO;
        for ct in &c {
            if ct.query.signed_distance < 0.0 {
                push = push + ct.query.normal * ct.query.signed_distance;
            }
        }
        let norm = push.norm();
        if norm > cfg.max_push {
            push = push * (cfg.max_push / norm);
        }
        if norm > 0.0 {
            let xy = clamp_xy(state.object_xy() + push, cfg.workspace_half);
            state.pose.x = xy.x;
            state.pose.y = xy.y;
        }
        let c = if norm > 0.0 { contacts(state, cfg) } else { c };
        if grasp_check(&c, cfg.opposition_threshold) {
            state.grasped = true;
            state.grasp_offset = state.hand.palm().inverse().compose(&state.pose);
            events.grasp_engaged = true;
        }
    }

    state.step_count += 1;
    events.success = is_success(state, cfg);
    let first_grasp = !state.grasp_rewarded;
    let r = reward(state, action, &events, first_grasp, cfg);
    if events.grasp_engaged {
        state.grasp_rewarded = true;
    }
    state.done = events.success || state.step_count >= cfg.horizon;
    Ok((r, state.done, events))
}

#[derive(Debug, Clone)]
pub struct Transition {
    pub state: EnvState,
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    pub events: StepEvents,
}

pub fn step(state: &EnvState, action: &Action, cfg: &SimConfig) -> Result<Transition> {
    let mut next = state.clone();
    let (reward, done, events) = advance(&mut next, action, cfg)?;
    let obs = next.observation();
    Ok(Transition {
        state: next,
        obs,
        reward,
        done,
        events,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub q: Joints,
    pub pose: Pose2,
    pub grasped: bool,
    pub reward: f64,
    pub done: bool,
}

/// JSON-lines episode trace, one record per step.
pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        TraceWriter { out }
    }

    pub fn record(&mut self, state: &EnvState, reward: f64, done: bool) -> Result<()> {
        let rec = TraceRecord {
            q: state.hand.q,
            pose: state.pose,
            grasped: state.grasped,
            reward,
            done,
        };
        serde_json::to_writer(&mut self.out, &rec)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }
}
