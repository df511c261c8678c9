use crate::error::{Error, Result};
use crate::geom::{Pose2, Vec2};

/// Which of the two closed-form solutions to return.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elbow {
    /// Second joint angle non-negative.
    Down,
    /// Second joint angle non-positive.
    Up,
}

/// Closed-form two-link planar IK, elbow-down branch.
pub fn inverse_kinematics(tip_target: Vec2, mount: Pose2, links: (f64, f64)) -> Result<(f64, f64)> {
    inverse_kinematics_branch(tip_target, mount, links, Elbow::Down)
}

pub fn inverse_kinematics_branch(
    tip_target: Vec2,
    mount: Pose2,
    links: (f64, f64),
    elbow: Elbow,
) -> Result<(f64, f64)> {
    let (l1, l2) = links;
    let p = mount.apply_inverse(tip_target);
    let d = p.norm();
    let (lo, hi) = ((l1 - l2).abs(), l1 + l2);
    if d > hi || d < lo || !d.is_finite() {
        return Err(Error::Unreachable {
            distance: d,
            min: lo,
            max: hi,
        });
    }
    let c2 = ((d * d - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let mut j2 = c2.acos();
    if elbow == Elbow::Up {
        j2 = -j2;
    }
    let j1 = p.y.atan2(p.x) - (l2 * j2.sin()).atan2(l1 + l2 * j2.cos());
    Ok((crate::geom::wrap_angle(j1), j2))
}
