//! Procedural object families and boundary point clouds.
//!
//! Each family is a small parametric profile. Parameter ranges below are the
//! fixed constants of the generator; they are wide enough that instances of
//! one family differ visibly in their point clouds.

use crate::error::{invalid_arg, Error, Result};
use crate::geom::{self, Pose2, Vec2};
use crate::rng::{self, tag};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

pub const DEFAULT_CLOUD_POINTS: usize = 64;
pub const MIN_DIAGONAL: f64 = 0.15;
pub const MAX_DIAGONAL: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Bottle,
    Mug,
    Can,
    Remote,
    Camera,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Bottle,
        Category::Remote,
        Category::Mug,
        Category::Can,
        Category::Camera,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Bottle => "bottle",
            Category::Mug => "mug",
            Category::Can => "can",
            Category::Remote => "remote",
            Category::Camera => "camera",
        }
    }

    fn index(self) -> u64 {
        match self {
            Category::Bottle => 0,
            Category::Mug => 1,
            Category::Can => 2,
            Category::Remote => 3,
            Category::Camera => 4,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bottle" => Ok(Category::Bottle),
            "mug" => Ok(Category::Mug),
            "can" => Ok(Category::Can),
            "remote" => Ok(Category::Remote),
            "camera" => Ok(Category::Camera),
            other => Err(invalid_arg(format!("unknown category {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Object boundary, counter-clockwise, in the object's body frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub category: Category,
    pub instance_id: u32,
    pub split: Split,
    pub vertices: Vec<Vec2>,
}

impl Polygon {
    pub fn new(category: Category, instance_id: u32, vertices: Vec<Vec2>) -> Self {
        Polygon {
            category,
            instance_id,
            split: Split::Train,
            vertices,
        }
    }

    pub fn area(&self) -> f64 {
        0.5 * geom::signed_area2(&self.vertices)
    }

    pub fn perimeter(&self) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| self.vertices[i].dist(self.vertices[(i + 1) % n]))
            .sum()
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bbox();
        lo.dist(hi)
    }

    pub fn bbox(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = Vec2::new(lo.x.min(v.x), lo.y.min(v.y));
            hi = Vec2::new(hi.x.max(v.x), hi.y.max(v.y));
        }
        (lo, hi)
    }

    /// Largest vertex distance from the body-frame origin.
    pub fn bounding_radius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn area_centroid(&self) -> Vec2 {
        let pts = &self.vertices;
        let n = pts.len();
        let a2 = geom::signed_area2(pts);
        let (mut cx, mut cy) = (0.0, 0.0);
        for i in 0..n {
            let (p, q) = (pts[i], pts[(i + 1) % n]);
            let c = p.cross(q);
            cx += (p.x + q.x) * c;
            cy += (p.y + q.y) * c;
        }
        Vec2::new(cx / (3.0 * a2), cy / (3.0 * a2))
    }

    /// Transform mapping body coordinates into the canonical frame
    /// (area centroid at origin, major principal axis along x).
    pub fn canonical_transform(&self) -> Result<Pose2> {
        if self.vertices.len() < 3 || self.area().abs() < 1e-9 {
            return Err(Error::InvalidGeometry(format!(
                "polygon area {:.3e} is degenerate",
                self.area()
            )));
        }
        let c = self.area_centroid();
        let pts: Vec<Vec2> = self.vertices.iter().map(|&v| v - c).collect();
        // Second moments of area about the centroid.
        let n = pts.len();
        let (mut ixx, mut iyy, mut ixy) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let (p, q) = (pts[i], pts[(i + 1) % n]);
            let cr = p.cross(q);
            ixx += (p.y * p.y + p.y * q.y + q.y * q.y) * cr;
            iyy += (p.x * p.x + p.x * q.x + q.x * q.x) * cr;
            ixy += (p.x * q.y + 2.0 * p.x * p.y + 2.0 * q.x * q.y + q.x * p.y) * cr;
        }
        // Moments of the x and y coordinates (not of inertia about the axes).
        let (mxx, myy, mxy) = (iyy / 12.0, ixx / 12.0, ixy / 24.0);
        let scale = (mxx + myy).abs();
        let angle = if (mxx - myy).abs() < 1e-9 * scale && mxy.abs() < 1e-9 * scale {
            0.0
        } else {
            0.5 * (2.0 * mxy).atan2(mxx - myy)
        };
        // canonical = R(-angle) * (p - c)
        let t = (-c).rotate(-angle);
        Ok(Pose2::new(t.x, t.y, -angle))
    }

    pub fn canonicalized(&self) -> Result<Polygon> {
        let t = self.canonical_transform()?;
        Ok(self.transformed(&t))
    }

    pub fn transformed(&self, pose: &Pose2) -> Polygon {
        Polygon {
            vertices: self.vertices.iter().map(|&v| pose.apply(v)).collect(),
            ..self.clone()
        }
    }

    /// Checks every polygon invariant.
    pub fn validate(&self) -> Result<()> {
        if self.vertices.len() < 6 {
            return Err(Error::InvalidGeometry(format!(
                "{} vertices, need at least 6",
                self.vertices.len()
            )));
        }
        if !self.vertices.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidGeometry("non-finite vertex".into()));
        }
        if self.area() <= 0.0 {
            return Err(Error::InvalidGeometry("polygon is not counter-clockwise".into()));
        }
        if !geom::is_simple(&self.vertices) {
            return Err(Error::InvalidGeometry("polygon self-intersects".into()));
        }
        let d = self.bbox_diagonal();
        if !(MIN_DIAGONAL..=MAX_DIAGONAL).contains(&d) {
            return Err(Error::InvalidGeometry(format!(
                "bounding-box diagonal {d:.4} outside [{MIN_DIAGONAL}, {MAX_DIAGONAL}]"
            )));
        }
        Ok(())
    }

    /// Point at arc length `s` (wrapping) along the boundary, with the edge index.
    pub fn point_at_arclength(&self, s: f64) -> (Vec2, usize) {
        let n = self.vertices.len();
        let total = self.perimeter();
        let mut s = s.rem_euclid(total);
        for i in 0..n {
            let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
            let len = a.dist(b);
            if s < len || i == n - 1 {
                let t = if len > 0.0 { (s / len).min(1.0) } else { 0.0 };
                return (a + (b - a) * t, i);
            }
            s -= len;
        }
        unreachable!("polygon has at least one edge")
    }

    pub fn distance_to_boundary(&self, p: Vec2) -> f64 {
        geom::query_boundary(&self.vertices, p).signed_distance.abs()
    }
}

/// Boundary samples of an object in its canonical frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vec2>,
    pub n: usize,
}

impl PointCloud {
    pub fn centroid(&self) -> Vec2 {
        let s = self.points.iter().fold(Vec2::ZERO, |a, &p| a + p);
        s * (1.0 / self.points.len() as f64)
    }

    /// Interleaved `[x0, y0, x1, y1, …]`.
    pub fn flat(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| [p.x, p.y]).collect()
    }
}

fn uniform(rng: &mut rng::Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn bottle(rng: &mut rng::Rng) -> Vec<Vec2> {
    let bw = uniform(rng, 0.08, 0.12);
    let taper = uniform(rng, 0.8, 1.0);
    let bh = uniform(rng, 0.14, 0.22);
    let sh = uniform(rng, 0.03, 0.05);
    let nw = uniform(rng, 0.03, 0.05);
    let nh = uniform(rng, 0.03, 0.06);
    let tw = bw * taper;
    vec![
        Vec2::new(-bw / 2.0, 0.0),
        Vec2::new(bw / 2.0, 0.0),
        Vec2::new(tw / 2.0, bh),
        Vec2::new(nw / 2.0, bh + sh),
        Vec2::new(nw / 2.0, bh + sh + nh),
        Vec2::new(-nw / 2.0, bh + sh + nh),
        Vec2::new(-nw / 2.0, bh + sh),
        Vec2::new(-tw / 2.0, bh),
    ]
}

fn mug(rng: &mut rng::Rng) -> Vec<Vec2> {
    let w = uniform(rng, 0.09, 0.13);
    let h = uniform(rng, 0.10, 0.14);
    let a = h * uniform(rng, 0.15, 0.3);
    let b = h * uniform(rng, 0.7, 0.85);
    let d = uniform(rng, 0.03, 0.05);
    let t = uniform(rng, 0.012, 0.02);
    let notch = d - uniform(rng, 0.01, 0.015);
    let r = w / 2.0;
    vec![
        Vec2::new(-r, 0.0),
        Vec2::new(r, 0.0),
        Vec2::new(r, a),
        Vec2::new(r + d, a),
        Vec2::new(r + d, a + t),
        Vec2::new(r + d - notch, a + t),
        Vec2::new(r + d - notch, b - t),
        Vec2::new(r + d, b - t),
        Vec2::new(r + d, b),
        Vec2::new(r, b),
        Vec2::new(r, h),
        Vec2::new(-r, h),
    ]
}

fn can(rng: &mut rng::Rng) -> Vec<Vec2> {
    let rx = uniform(rng, 0.055, 0.075);
    let ry = rx * uniform(rng, 1.1, 1.5);
    // Superellipse exponent: 2 is an ellipse, larger values approach a rounded rectangle.
    let p = uniform(rng, 2.0, 4.0);
    let m = 20;
    (0..m)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / m as f64;
            let (s, c) = t.sin_cos();
            let e = 2.0 / p;
            Vec2::new(rx * c.signum() * c.abs().powf(e), ry * s.signum() * s.abs().powf(e))
        })
        .collect()
}

fn remote(rng: &mut rng::Rng) -> Vec<Vec2> {
    let w = uniform(rng, 0.056, 0.075);
    let l = uniform(rng, 0.22, 0.36);
    let c = uniform(rng, 0.005, 0.012);
    let (x, y) = (w / 2.0, l / 2.0);
    vec![
        Vec2::new(-x + c, -y),
        Vec2::new(x - c, -y),
        Vec2::new(x, -y + c),
        Vec2::new(x, y - c),
        Vec2::new(x - c, y),
        Vec2::new(-x + c, y),
        Vec2::new(-x, y - c),
        Vec2::new(-x, -y + c),
    ]
}

fn camera(rng: &mut rng::Rng) -> Vec<Vec2> {
    let w = uniform(rng, 0.14, 0.2);
    let h = uniform(rng, 0.08, 0.11);
    let lw = uniform(rng, 0.04, 0.07);
    let ox = uniform(rng, -0.03, 0.03);
    let lh = uniform(rng, 0.02, 0.04);
    let (x, y) = (w / 2.0, h / 2.0);
    vec![
        Vec2::new(-x, -y),
        Vec2::new(x, -y),
        Vec2::new(x, y),
        Vec2::new(ox + lw / 2.0, y),
        Vec2::new(ox + lw / 2.0, y + lh),
        Vec2::new(ox - lw / 2.0, y + lh),
        Vec2::new(ox - lw / 2.0, y),
        Vec2::new(-x, y),
    ]
}

/// Generates `count` instances of one family, canonicalized and validated.
pub fn generate_category_instances(category: Category, count: usize, seed: u64) -> Result<Vec<Polygon>> {
    if count < 1 {
        return Err(invalid_arg("count must be at least 1"));
    }
    let mut rng = rng::stream(seed, &[tag::SHAPES, category.index()]);
    (0..count)
        .map(|i| {
            let raw = match category {
                Category::Bottle => bottle(&mut rng),
                Category::Mug => mug(&mut rng),
                Category::Can => can(&mut rng),
                Category::Remote => remote(&mut rng),
                Category::Camera => camera(&mut rng),
            };
            let poly = Polygon::new(category, i as u32, raw).canonicalized()?;
            poly.validate()?;
            Ok(poly)
        })
        .collect()
}

/// Arc-length-stratified boundary sampling, returned in the canonical frame.
pub fn sample_point_cloud(poly: &Polygon, n: usize, seed: u64) -> Result<PointCloud> {
    // Four strata is the smallest meaningful stratification (one per square edge).
    if n < 4 {
        return Err(invalid_arg(format!("point cloud size {n} is below 4")));
    }
    let canonical = poly.canonicalized()?;
    let mut rng = rng::stream(seed, &[tag::CLOUD]);
    let total = canonical.perimeter();
    let stride = total / n as f64;
    let points = (0..n)
        .map(|i| {
            let s = (i as f64 + rng.random::<f64>()) * stride;
            canonical.point_at_arclength(s.min(total * (1.0 - 1e-15))).0
        })
        .collect();
    Ok(PointCloud { points, n })
}

/// Seed used for an object's observation cloud; fixed per instance so the
/// cloud an agent sees for an object never changes between episodes.
pub fn cloud_seed(poly: &Polygon) -> u64 {
    rng::mix(0xC10D, &[poly.category.index(), poly.instance_id as u64])
}

/// Shuffles and partitions instances; `floor(count * test_fraction)` go to test.
pub fn train_test_split(
    instances: &[Polygon],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<Polygon>, Vec<Polygon>)> {
    if instances.is_empty() {
        return Err(invalid_arg("empty instance list"));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(invalid_arg(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let n_test = (instances.len() as f64 * test_fraction + 1e-9).floor() as usize;
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut rng = rng::stream(seed, &[tag::SPLIT]);
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let mut test_idx: Vec<usize> = order[..n_test].to_vec();
    let mut train_idx: Vec<usize> = order[n_test..].to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    let stamp = |idx: &[usize], split: Split| {
        idx.iter()
            .map(|&i| Polygon {
                split,
                ..instances[i].clone()
            })
            .collect::<Vec<_>>()
    };
    Ok((stamp(&train_idx, Split::Train), stamp(&test_idx, Split::Test)))
}

pub fn write_object_set(path: &Path, objects: &[Polygon]) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(f, objects)?;
    Ok(())
}

pub fn read_object_set(path: &Path) -> Result<Vec<Polygon>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let objects: Vec<Polygon> = serde_json::from_reader(f)?;
    for o in &objects {
        o.validate()?;
    }
    Ok(objects)
}
