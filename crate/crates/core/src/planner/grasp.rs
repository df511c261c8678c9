//! Analytic antipodal grasp synthesis.
//!
//! Boundary point pairs are sampled uniformly in arc length. A pair survives
//! when its outward normals oppose, its separation fits the gripper, and the
//! chord between the points runs roughly along both normals. Each survivor is
//! turned into a full hand configuration by centering the palm on the pair
//! and solving fingertip IK.

use super::ik::{inverse_kinematics_branch, Elbow};
use crate::error::{invalid_arg, Error, Result};
use crate::geom::{self, wrap_angle, Vec2};
use crate::rng::{self, tag};
use crate::shapes::Polygon;
use crate::sim::{forward_kinematics, HandState, Joints, LINK1, LINK2, PALM_HALF_WIDTH};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const GRASP_SAMPLES: usize = 2000;
pub const MIN_WIDTH: f64 = 0.05;
pub const MAX_WIDTH: f64 = 0.35;
pub const MAX_NORMAL_DOT: f64 = -0.5;
/// Minimum cosine between each contact normal and the chord.
pub const CHORD_ALIGNMENT: f64 = 0.7;
pub const MIN_PALM_SEPARATION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspContact {
    pub point: Vec2,
    pub normal: Vec2,
}

/// Target hand configuration for a reach-and-grasp demonstration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspTarget {
    pub jh: Joints,
    pub contacts: [GraspContact; 2],
    pub width: f64,
    /// Sentinel for demonstrations planned without a grasp pose.
    #[serde(default)]
    pub palm_only: bool,
}

impl GraspTarget {
    pub fn palm_only() -> Self {
        let c = GraspContact {
            point: Vec2::ZERO,
            normal: Vec2::ZERO,
        };
        GraspTarget {
            jh: [0.0; 7],
            contacts: [c, c],
            width: 0.0,
            palm_only: true,
        }
    }

    pub fn normal_dot(&self) -> f64 {
        self.contacts[0].normal.dot(self.contacts[1].normal)
    }

    /// Largest fingertip-to-contact distance under forward kinematics of `jh`.
    pub fn fk_error(&self) -> f64 {
        let k = forward_kinematics(&HandState { q: self.jh });
        k.tip1
            .dist(self.contacts[0].point)
            .max(k.tip2.dist(self.contacts[1].point))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspOptions {
    /// Palm orientation the hand approaches from; of the two mirror
    /// configurations per pair, the one closer to this is kept.
    pub preferred_rotation: f64,
    /// Mount-to-tip distance used to place the palm behind the pair.
    pub finger_reach: f64,
}

impl Default for GraspOptions {
    fn default() -> Self {
        GraspOptions {
            preferred_rotation: 0.0,
            finger_reach: 0.19,
        }
    }
}

struct Candidate {
    target: GraspTarget,
    palm: Vec2,
    dot: f64,
    center_offset: f64,
}

/// Synthesizes up to `k` diverse antipodal grasps on a polygon given in
/// world coordinates, best first.
pub fn synthesize_grasps(poly: &Polygon, k: usize, seed: u64) -> Result<Vec<GraspTarget>> {
    synthesize_grasps_with(poly, k, seed, &GraspOptions::default())
}

pub fn synthesize_grasps_with(poly: &Polygon, k: usize, seed: u64, opts: &GraspOptions) -> Result<Vec<GraspTarget>> {
    if k < 1 {
        return Err(invalid_arg("k must be at least 1"));
    }
    let verts = &poly.vertices;
    let total = poly.perimeter();
    let centroid = poly.area_centroid();
    let mut rng = rng::stream(seed, &[tag::GRASP]);
    let mut candidates = Vec::new();
    for _ in 0..GRASP_SAMPLES {
        let (p1, e1) = poly.point_at_arclength(rng.random::<f64>() * total);
        let (p2, e2) = poly.point_at_arclength(rng.random::<f64>() * total);
        if e1 == e2 {
            continue;
        }
        let n1 = geom::edge_outward_normal(verts, e1);
        let n2 = geom::edge_outward_normal(verts, e2);
        let dot = n1.dot(n2);
        let width = p1.dist(p2);
        if dot >= MAX_NORMAL_DOT || !(MIN_WIDTH..=MAX_WIDTH).contains(&width) {
            continue;
        }
        let chord = (p2 - p1) * (1.0 / width);
        if -n1.dot(chord) < CHORD_ALIGNMENT || n2.dot(chord) < CHORD_ALIGNMENT {
            continue;
        }
        let c1 = GraspContact { point: p1, normal: n1 };
        let c2 = GraspContact { point: p2, normal: n2 };
        if let Some(mut cand) = solve_hand(c1, c2, width, opts) {
            cand.dot = dot;
            cand.center_offset = ((p1 + p2) * 0.5).dist(centroid);
            candidates.push(cand);
        }
    }
    if candidates.is_empty() {
        return Err(Error::NoGraspFound { samples: GRASP_SAMPLES });
    }
    candidates.sort_by(|a, b| {
        a.dot
            .total_cmp(&b.dot)
            .then(a.center_offset.total_cmp(&b.center_offset))
    });
    let mut chosen: Vec<Candidate> = Vec::new();
    for c in candidates {
        if chosen.iter().all(|o| o.palm.dist(c.palm) >= MIN_PALM_SEPARATION) {
            chosen.push(c);
            if chosen.len() == k {
                break;
            }
        }
    }
    Ok(chosen.into_iter().map(|c| c.target).collect())
}

/// Places the palm behind the contact pair and solves both fingers.
fn solve_hand(c1: GraspContact, c2: GraspContact, width: f64, opts: &GraspOptions) -> Option<Candidate> {
    let half = width / 2.0;
    let lateral = half - PALM_HALF_WIDTH;
    let reach2 = opts.finger_reach * opts.finger_reach - lateral * lateral;
    if reach2 <= 0.0 {
        return None;
    }
    let standoff = reach2.sqrt();
    let mid = (c1.point + c2.point) * 0.5;
    let axis = (c2.point - c1.point) * (1.0 / width);
    // Two mirror palm orientations; keep the one nearer the preferred rotation.
    let rot_a = axis.y.atan2(axis.x);
    let rot_b = wrap_angle(rot_a + std::f64::consts::PI);
    let (rot, left, right) = if wrap_angle(rot_a - opts.preferred_rotation).abs()
        <= wrap_angle(rot_b - opts.preferred_rotation).abs()
    {
        (rot_a, c1, c2)
    } else {
        (rot_b, c2, c1)
    };
    let y_axis = Vec2::from_angle(rot).perp();
    let palm = mid - y_axis * standoff;
    let mut hand = HandState {
        q: [palm.x, palm.y, rot, 0.0, 0.0, 0.0, 0.0],
    };
    let links = (LINK1, LINK2);
    let (a1, a2) = inverse_kinematics_branch(left.point, hand.mount(0), links, Elbow::Up).ok()?;
    let (b1, b2) = inverse_kinematics_branch(right.point, hand.mount(1), links, Elbow::Down).ok()?;
    if [a1, a2, b1, b2].iter().any(|j| j.abs() > std::f64::consts::FRAC_PI_2) {
        return None;
    }
    hand.q[3..].copy_from_slice(&[a1, a2, b1, b2]);
    let target = GraspTarget {
        jh: hand.q,
        contacts: [left, right],
        width,
        palm_only: false,
    };
    if target.fk_error() > 0.01 {
        return None;
    }
    Some(Candidate {
        target,
        palm,
        dot: 0.0,
        center_offset: 0.0,
    })
}
