//! Central finite-difference verification of analytic gradients.

use super::encoder::Encoder;
use super::mlp::Mlp;
use super::policy::{log_prob_batch, ObsBatch, PolicyParams, Subset};
use crate::error::{invalid_arg, Result};
use crate::rng::{self, tag};
use crate::shapes::PointCloud;
use crate::sim::Action;
use rand::seq::index;
use rand::Rng;

/// Nets above this many parameters are checked on a random subsample.
pub const FULL_CHECK_LIMIT: usize = 2000;
pub const SUBSAMPLE: usize = 300;
/// Denominator floor in the relative error, so gradients that are zero up to
/// rounding do not register as failures.
pub const REL_FLOOR: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(REL_FLOOR)
}

/// Parameter indices to probe: all of them, or a seeded subsample.
pub fn probe_indices(n: usize, seed: u64) -> Vec<usize> {
    if n <= FULL_CHECK_LIMIT {
        return (0..n).collect();
    }
    let mut rng = rng::stream(seed, &[tag::INIT, 99]);
    let mut v = index::sample(&mut rng, n, SUBSAMPLE).into_vec();
    v.sort_unstable();
    v
}

/// Max relative error between `analytic` and central differences of `f`
/// at the probed indices.
pub fn max_relative_error<F>(params: &[f64], analytic: &[f64], eps: f64, indices: &[usize], mut f: F) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(invalid_arg(format!("epsilon {eps} outside [1e-7, 1e-3]")));
    }
    let mut p = params.to_vec();
    let mut worst = 0.0f64;
    for &i in indices {
        let orig = p[i];
        p[i] = orig + eps;
        let hi = f(&p);
        p[i] = orig - eps;
        let lo = f(&p);
        p[i] = orig;
        worst = worst.max(relative_error(analytic[i], (hi - lo) / (2.0 * eps)));
    }
    Ok(worst)
}

/// What to differentiate. Mlp and encoder outputs are reduced to a scalar
/// through fixed random weights; the policy uses the summed log density.
pub enum CheckTarget<'a> {
    Mlp { net: &'a Mlp, x: &'a [f64], rows: usize },
    Encoder { enc: &'a Encoder, cloud: &'a PointCloud },
    Policy { params: &'a PolicyParams, batch: &'a ObsBatch, actions: &'a [Action] },
}

fn probe_weights(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, &[tag::INIT, 98]);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn finite_difference_check(target: CheckTarget<'_>, eps: f64, seed: u64) -> Result<f64> {
    match target {
        CheckTarget::Mlp { net, x, rows } => {
            let c = probe_weights(rows * net.output_dim(), seed);
            let cache = net.forward(x, rows)?;
            let mut g = vec![0.0; net.params.len()];
            net.backward(&cache, &c, &mut g, false);
            let idx = probe_indices(g.len(), seed);
            let mut probe = net.clone();
            max_relative_error(&net.params, &g, eps, &idx, |p| {
                probe.params.copy_from_slice(p);
                dot(probe.forward(x, rows).expect("shape checked").output(), &c)
            })
        }
        CheckTarget::Encoder { enc, cloud } => {
            let c = probe_weights(enc.embedding_dim(), seed);
            let (_, cache) = enc.forward(cloud)?;
            let mut g = vec![0.0; enc.n_params()];
            enc.backward(&cache, &c, &mut g);
            let idx = probe_indices(g.len(), seed);
            let mut probe = enc.clone();
            max_relative_error(&enc.flat(), &g, eps, &idx, |p| {
                probe.set_flat(p);
                dot(&probe.forward(cloud).expect("non-empty cloud").0, &c)
            })
        }
        CheckTarget::Policy { params, batch, actions } => {
            let (_, g) = log_prob_batch(params, batch, actions, None, Some(Subset::All))?;
            let g = g.expect("gradient requested");
            let idx = probe_indices(g.data.len(), seed);
            let mut probe = params.clone();
            max_relative_error(&params.get(Subset::All), &g.data, eps, &idx, |p| {
                probe.set(Subset::All, p).expect("same layout");
                log_prob_batch(&probe, batch, actions, None, None)
                    .expect("valid batch")
                    .0
                    .iter()
                    .sum()
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn exact_gradient_of_quadratic_passes() {
        let p = [0.3, -1.2, 2.0];
        let g: Vec<f64> = p.iter().map(|v| 2.0 * v).collect();
        let e = max_relative_error(&p, &g, 1e-5, &[0, 1, 2], |q| q.iter().map(|v| v * v).sum()).unwrap();
        assert!(e < 1e-9);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let p = [1.0];
        let e = max_relative_error(&p, &[3.0], 1e-5, &[0], |q| q[0] * q[0]).unwrap();
        assert!(e > 0.1);
    }

    #[test]
    fn epsilon_range_is_enforced() {
        assert!(max_relative_error(&[1.0], &[0.0], 1e-2, &[0], |q| q[0]).is_err());
    }

    #[test]
    fn small_mlp_passes() {
        let mut rng = rng::Rng::seed_from_u64(0);
        let net = Mlp::new(&[4, 6, 3], false, &mut rng).unwrap();
        let x = [0.1, 0.2, -0.3, 0.4, 0.9, -0.7, 0.2, 0.0];
        let e = finite_difference_check(CheckTarget::Mlp { net: &net, x: &x, rows: 2 }, 1e-5, 1).unwrap();
        assert!(e < 1e-4, "{e}");
    }

    fn cloud(seed: u64, enc: &Encoder) -> PointCloud {
        // Redraw until no pooled feature sits within reach of a tie.
        for k in 0..10_000 {
            let mut rng = rng::stream(seed, &[k]);
            let points = (0..16)
                .map(|_| crate::geom::Vec2::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)))
                .collect();
            let c = PointCloud { points, n: 16 };
            if enc.pool_margin(&c).unwrap() > 1e-4 {
                return c;
            }
        }
        panic!("no tie-free cloud found")
    }

    #[test]
    fn default_encoder_passes() {
        let p = PolicyParams::new(super::super::PolicyArch::default(), 3).unwrap();
        let enc = p.encoder.as_ref().unwrap();
        let c = cloud(3, enc);
        let e = finite_difference_check(CheckTarget::Encoder { enc, cloud: &c }, 1e-5, 3).unwrap();
        assert!(e < 1e-4, "{e}");
    }

    #[test]
    fn default_policy_log_prob_passes() {
        use crate::geom::{Pose2, Vec2};
        let p = PolicyParams::new(super::super::PolicyArch::default(), 4).unwrap();
        let c = std::sync::Arc::new(cloud(4, p.encoder.as_ref().unwrap()));
        let obs: Vec<_> = (0..3)
            .map(|i| crate::sim::Observation {
                cloud: c.clone(),
                pose: Pose2::new(-0.3 + 0.1 * i as f64, 0.1, 0.2),
                q: [-0.4, -0.9, 0.1 * i as f64, 0.3, 0.2, -0.3, -0.1],
                target: Vec2::new(0.6, -0.2),
            })
            .collect();
        let batch = ObsBatch::new(&obs);
        let actions: Vec<Action> = (0..3).map(|i| Action { dq: [0.01 * i as f64; 7] }).collect();
        let target = CheckTarget::Policy {
            params: &p,
            batch: &batch,
            actions: &actions,
        };
        let e = finite_difference_check(target, 1e-5, 4).unwrap();
        assert!(e < 1e-4, "{e}");
    }
}
