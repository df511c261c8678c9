#![allow(dead_code)]

use ilad::geom::{Pose2, Vec2};
use ilad::imitation::{fit_value_functions, IladConfig, ValueData, ValueLearner};
use ilad::nets::{finite_difference_check, CheckTarget, Encoder, ObsBatch, PolicyArch, PolicyParams, ValueParams};
use ilad::planner::{generate_demo_set, DemoGenConfig, DemoSet};
use ilad::rng;
use ilad::shapes::{generate_category_instances, train_test_split, Category, PointCloud};
use ilad::sim::{assets, Action, ObjectAsset, Observation, SimConfig, DOF};
use rand::Rng;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;

pub const FD_EPS: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

/// A 16-point cloud whose pooled features are all separated by more than
/// 1e-4, so central differences never cross a max-pool switch.
pub fn tie_free_cloud(seed: u64, enc: &Encoder) -> PointCloud {
    for k in 0..10_000 {
        let mut r = rng::stream(seed, &[777, k]);
        let points = (0..16)
            .map(|_| Vec2::new(r.random_range(-0.2..0.2), r.random_range(-0.2..0.2)))
            .collect();
        let c = PointCloud { points, n: 16 };
        if enc.pool_margin(&c).unwrap() > 1e-4 {
            return c;
        }
    }
    panic!("no tie-free cloud for seed {seed}")
}

fn random_rows(seed: u64, rows: usize, dim: usize) -> Vec<f64> {
    let mut r = rng::stream(seed, &[778]);
    (0..rows * dim).map(|_| r.random_range(-1.0..1.0)).collect()
}

/// Worst relative errors for (encoder, decision MLP, value net, Q net,
/// policy log density) at one seed.
pub fn gradient_errors(seed: u64) -> [(&'static str, f64); 5] {
    let p = PolicyParams::new(PolicyArch::default(), seed).unwrap();
    let enc = p.encoder.as_ref().unwrap();
    let cloud = tie_free_cloud(seed, enc);
    let e_enc = finite_difference_check(CheckTarget::Encoder { enc, cloud: &cloud }, FD_EPS, seed).unwrap();

    let xd = random_rows(seed, 4, p.decision.input_dim());
    let e_dec = finite_difference_check(CheckTarget::Mlp { net: &p.decision, x: &xd, rows: 4 }, FD_EPS, seed).unwrap();

    let v = ValueParams::new(p.input_dim(), &[64, 64], seed).unwrap();
    let xv = random_rows(seed + 1, 4, v.v_net.input_dim());
    let e_v = finite_difference_check(CheckTarget::Mlp { net: &v.v_net, x: &xv, rows: 4 }, FD_EPS, seed).unwrap();
    let xq = random_rows(seed + 2, 4, v.q_net.input_dim());
    let e_q = finite_difference_check(CheckTarget::Mlp { net: &v.q_net, x: &xq, rows: 4 }, FD_EPS, seed).unwrap();

    let c = Arc::new(cloud);
    let obs: Vec<Observation> = (0..3)
        .map(|i| Observation {
            cloud: c.clone(),
            pose: Pose2::new(-0.3 + 0.1 * i as f64, 0.1, 0.2),
            q: [-0.4, -0.9, 0.1 * i as f64, 0.3, 0.2, -0.3, -0.1],
            target: Vec2::new(0.6, -0.2),
        })
        .collect();
    let batch = ObsBatch::new(&obs);
    let actions: Vec<Action> = (0..3).map(|i| Action { dq: [0.01 * i as f64 - 0.01; DOF] }).collect();
    let e_pol = finite_difference_check(
        CheckTarget::Policy {
            params: &p,
            batch: &batch,
            actions: &actions,
        },
        FD_EPS,
        seed,
    )
    .unwrap();
    [("encoder", e_enc), ("decision", e_dec), ("value", e_v), ("q", e_q), ("log_prob", e_pol)]
}

/// Two-state, two-action MDP: action `a` moves to state `a`.
pub struct TabularMdp {
    pub reward: [[f64; 2]; 2],
    pub policy: [[f64; 2]; 2],
    pub gamma: f64,
}

impl Default for TabularMdp {
    fn default() -> Self {
        TabularMdp {
            reward: [[1.0, 0.0], [-0.5, 2.0]],
            policy: [[0.7, 0.3], [0.4, 0.6]],
            gamma: 0.8,
        }
    }
}

impl TabularMdp {
    /// Exact advantages by iterating the policy Bellman equation.
    pub fn exact_advantages(&self) -> [[f64; 2]; 2] {
        let mut v = [0.0; 2];
        for _ in 0..2000 {
            let q = self.q(&v);
            v = [0, 1].map(|s| self.policy[s][0] * q[s][0] + self.policy[s][1] * q[s][1]);
        }
        let q = self.q(&v);
        [0, 1].map(|s| [0, 1].map(|a| q[s][a] - v[s]))
    }

    fn q(&self, v: &[f64; 2]) -> [[f64; 2]; 2] {
        [0, 1].map(|s| [0, 1].map(|a| self.reward[s][a] + self.gamma * v[a]))
    }

    fn act(&self, s: usize, r: &mut rng::Rng) -> usize {
        usize::from(r.random::<f64>() >= self.policy[s][0])
    }

    /// Monte Carlo returns from uniformly drawn start states.
    pub fn samples(&self, n: usize, seed: u64) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
        let mut r = rng::stream(seed, &[779]);
        let (mut ss, mut aa, mut gg) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..n {
            let s0 = usize::from(r.random::<bool>());
            let a0 = self.act(s0, &mut r);
            let (mut s, mut a, mut g, mut disc) = (s0, a0, 0.0, 1.0);
            for _ in 0..80 {
                g += disc * self.reward[s][a];
                disc *= self.gamma;
                s = a;
                a = self.act(s, &mut r);
            }
            ss.push(s0);
            aa.push(a0);
            gg.push(g);
        }
        (ss, aa, gg)
    }
}

fn tabular_features(s: usize) -> [f64; 2] {
    if s == 0 {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    }
}

fn tabular_action(a: usize) -> [f64; DOF] {
    let mut v = [0.0; DOF];
    v[0] = if a == 0 { -1.0 } else { 1.0 };
    v
}

/// Fits the value and Q heads on Monte Carlo returns and returns the worst
/// absolute gap between `Q - V` and the exact advantage.
pub fn tabular_advantage_error(seed: u64) -> f64 {
    let mdp = TabularMdp::default();
    let (ss, aa, gg) = mdp.samples(20_000, seed);
    let data = ValueData {
        features: ss.iter().flat_map(|&s| tabular_features(s)).collect(),
        actions: aa.iter().flat_map(|&a| tabular_action(a)).collect(),
        targets: gg,
    };
    let cfg = IladConfig {
        value_epochs: 150,
        value_minibatch: 2000,
        seed,
        ..IladConfig::default()
    };
    let mut learner = ValueLearner::new(ValueParams::new(2, &[64, 64], seed).unwrap(), cfg.value_lr);
    fit_value_functions(&mut learner, &data, &cfg, 0).unwrap();
    let exact = mdp.exact_advantages();
    let mut worst = 0.0f64;
    for s in 0..2 {
        for a in 0..2 {
            let est = ilad::imitation::demo_advantage(&learner.params, &tabular_features(s), &tabular_action(a), 1).unwrap()[0];
            worst = worst.max((est - exact[s][a]).abs());
        }
    }
    worst
}

/// Train and test assets of one category.
pub fn split_assets(category: Category, train: usize, test: usize, seed: u64) -> (Vec<Arc<ObjectAsset>>, Vec<Arc<ObjectAsset>>) {
    let all = generate_category_instances(category, train + test, seed).unwrap();
    let (tr, te) = train_test_split(&all, test as f64 / (train + test) as f64, seed).unwrap();
    let n = SimConfig::default().n_points;
    (assets(&tr, n).unwrap(), assets(&te, n).unwrap())
}

pub fn demos(objects: &[Arc<ObjectAsset>], per_object: usize, seed: u64) -> DemoSet {
    generate_demo_set(objects, per_object, &DemoGenConfig::default(), &SimConfig::default(), seed)
        .unwrap()
        .0
}

/// A learner configuration small enough for unit-scale runs.
pub fn tiny_config(epochs: usize) -> IladConfig {
    IladConfig {
        n_traj_per_epoch: 6,
        epochs,
        bc_epochs_per_update: 2,
        value_epochs: 2,
        fvp_states: 600,
        ..IladConfig::default()
    }
}

fn ilad(dir: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_ilad"))
        .current_dir(dir)
        .env("ILAD_THREADS", "2")
        .args(args)
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

/// gen-objects, gen-demos, train and eval from one seed manifest.
pub fn pipeline(dir: &Path) {
    std::fs::write(
        dir.join("config.json"),
        r#"{"n_traj_per_epoch": 4, "epochs": 3, "T": 2, "bc_epochs_per_update": 1, "value_epochs": 1}"#,
    )
    .unwrap();
    ilad(dir, &["gen-objects", "--category", "mug", "--count", "4", "--test-fraction", "0.5", "--seed", "5", "--out", "objects.json"]);
    ilad(dir, &["gen-demos", "--objects", "objects.json", "--per-object", "1", "--seed", "5", "--out", "demos.jsonl"]);
    ilad(dir, &["train", "--mode", "ilad", "--objects", "objects.json", "--demos", "demos.jsonl", "--config", "config.json", "--seed", "5", "--out", "run"]);
    ilad(dir, &["eval", "--checkpoint", "run/policy.ckpt", "--objects", "objects.json", "--trials", "4", "--seeds", "0,1", "--out", "eval.json"]);
}

/// Files compared between two pipeline runs.
pub const PIPELINE_FILES: [&str; 7] = [
    "objects.json",
    "demos.jsonl",
    "demos.report.csv",
    "run/metrics.csv",
    "run/manifest.json",
    "run/policy.ckpt",
    "eval.json",
];
