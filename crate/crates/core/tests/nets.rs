mod common;

use common::*;
use ilad::geom::{Pose2, Vec2};
use ilad::imitation::{conjugate_gradient, fisher_vector_product, mean_kl};
use ilad::nets::{load_checkpoint, save_checkpoint, Mlp, ObsBatch, PolicyArch, PolicyParams, Subset};
use ilad::rng;
use ilad::shapes::PointCloud;
use ilad::sim::{Observation, DOF};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use std::sync::Arc;

#[test]
fn analytic_gradients_match_central_differences() {
    for seed in 0..4 {
        for (name, e) in gradient_errors(seed) {
            assert!(e < FD_TOL, "{name} seed {seed}: {e}");
        }
    }
}

#[test]
fn mlp_forward_matches_dense_algebra() {
    let mut r = rng::Rng::seed_from_u64(11);
    let net = Mlp::new(&[6, 9, 4], false, &mut r).unwrap();
    let x: Vec<f64> = (0..18).map(|_| r.random_range(-1.0..1.0)).collect();
    let out = net.forward(&x, 3).unwrap();
    let w1 = DMatrix::from_row_slice(6, 9, &net.params[..54]);
    let b1 = DMatrix::from_fn(3, 9, |_, j| net.params[54 + j]);
    let w2 = DMatrix::from_row_slice(9, 4, &net.params[63..99]);
    let b2 = DMatrix::from_fn(3, 4, |_, j| net.params[99 + j]);
    let xm = DMatrix::from_row_slice(3, 6, &x);
    let h = (xm * w1 + b1).map(f64::tanh);
    let y = h * w2 + b2;
    for i in 0..3 {
        for j in 0..4 {
            assert!((y[(i, j)] - out.output()[i * 4 + j]).abs() < 1e-13);
        }
    }
}

fn small_flat_policy() -> (PolicyParams, ObsBatch) {
    let arch = PolicyArch {
        use_encoder: false,
        hidden: vec![5],
        init_log_std: -0.3,
        ..PolicyArch::default()
    };
    let p = PolicyParams::new(arch, 2).unwrap();
    let cloud = Arc::new(PointCloud {
        points: vec![Vec2::new(0.0, 0.0)],
        n: 1,
    });
    let obs: Vec<Observation> = (0..6)
        .map(|i| Observation {
            cloud: cloud.clone(),
            pose: Pose2::new(-0.4 + 0.05 * i as f64, 0.1 * i as f64, 0.3 * i as f64),
            q: [-0.4, -0.9, 0.2 * i as f64, 0.3, -0.2, -0.3, 0.1],
            target: Vec2::new(0.7, 0.1),
        })
        .collect();
    (p, ObsBatch::new(&obs))
}

fn kl_to(p: &PolicyParams, batch: &ObsBatch, theta: &[f64]) -> f64 {
    let mut q = p.clone();
    q.set(Subset::ThetaP, theta).unwrap();
    let m0 = p.forward_batch(batch).unwrap().mean().to_vec();
    let m1 = q.forward_batch(batch).unwrap().mean().to_vec();
    mean_kl(&m0, &p.log_std, &m1, &q.log_std)
}

#[test]
fn fisher_product_is_the_kl_curvature() {
    let (p, batch) = small_flat_policy();
    let cache = p.forward_batch(&batch).unwrap();
    let theta = p.get(Subset::ThetaP);
    let n = theta.len();
    let mut r = rng::Rng::seed_from_u64(5);
    for _ in 0..5 {
        let v: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let fv = fisher_vector_product(&p, &cache, &v, 0.0);
        let vfv: f64 = v.iter().zip(&fv).map(|(a, b)| a * b).sum();
        let t = 1e-3;
        let shifted = |s: f64| kl_to(&p, &batch, &theta.iter().zip(&v).map(|(a, b)| a + s * b).collect::<Vec<_>>());
        let curvature = (shifted(t) + shifted(-t)) / (t * t);
        assert!((vfv - curvature).abs() < 1e-4 * curvature.abs().max(1.0), "{vfv} vs {curvature}");
    }
}

#[test]
fn conjugate_gradient_solves_the_damped_fisher_system() {
    let (p, batch) = small_flat_policy();
    let cache = p.forward_batch(&batch).unwrap();
    let n = p.get(Subset::ThetaP).len();
    let damping = 0.1;
    let f = DMatrix::from_fn(n, n, |i, j| {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        fisher_vector_product(&p, &cache, &e, damping)[i]
    });
    assert!((&f - f.transpose()).amax() < 1e-10);
    let eig = f.clone().symmetric_eigen();
    assert!(eig.eigenvalues.min() >= damping - 1e-9);

    let mut r = rng::Rng::seed_from_u64(6);
    let b: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let exact = f.clone().cholesky().unwrap().solve(&DVector::from_vec(b.clone()));
    let x = conjugate_gradient(|v| fisher_vector_product(&p, &cache, v, damping), &b, 4 * n, 1e-20);
    let err = (DVector::from_vec(x) - &exact).amax() / exact.amax();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn checkpoint_files_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let p = PolicyParams::new(PolicyArch::default(), 9).unwrap();
    let path = dir.path().join("p.ckpt");
    save_checkpoint(&path, &p, 9, Some(3)).unwrap();
    let (q, h) = load_checkpoint(&path).unwrap();
    assert_eq!(q.get(Subset::All).iter().map(|v| v.to_bits()).collect::<Vec<_>>(), p.get(Subset::All).iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!((h.seed, h.epoch), (9, Some(3)));
    std::fs::write(&path, b"not a checkpoint").unwrap();
    assert!(load_checkpoint(&path).is_err());
}

#[test]
fn log_std_is_shared_across_states() {
    let (p, batch) = small_flat_policy();
    assert_eq!(p.log_std.len(), DOF);
    assert_eq!(p.forward_batch(&batch).unwrap().mean().len(), batch.len() * DOF);
}
