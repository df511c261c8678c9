mod common;

use common::*;
use ilad::harness::{
    build_report, evaluate_success, run_ablation, AblationSpec, DemoVariant, OracleController, RunData,
};
use ilad::imitation::{EpochMetrics, Mode};
use ilad::nets::{PolicyArch, PolicyParams, Subset};
use ilad::shapes::Category;
use ilad::sim::SimConfig;

#[test]
fn evaluation_counts_and_purity() {
    let (_, test) = split_assets(Category::Bottle, 1, 2, 0);
    let p = PolicyParams::new(PolicyArch::default(), 0).unwrap();
    let before = p.checksum(Subset::All);
    let r = evaluate_success(&p, &test, 10, &[0, 1, 2], &SimConfig::default()).unwrap();
    assert_eq!(p.checksum(Subset::All), before);
    assert_eq!(r.trials, 60);
    assert_eq!(r.episodes.len(), 60);
    assert_eq!(r.per_object.iter().map(|o| o.trials).sum::<usize>(), 60);
    assert_eq!(r.per_object.iter().map(|o| o.successes).sum::<usize>(), r.successes);
    assert_eq!(r.success_rate, r.successes as f64 / r.trials as f64);
    assert_eq!(r.successes, r.episodes.iter().filter(|e| e.success).count());
    assert!(r.success_rate < 0.1);
    assert!(evaluate_success(&p, &[], 1, &[0], &SimConfig::default()).is_err());
}

#[test]
fn evaluation_is_repeatable() {
    let (_, test) = split_assets(Category::Can, 1, 2, 0);
    let p = PolicyParams::new(PolicyArch::default(), 1).unwrap();
    let a = evaluate_success(&p, &test, 3, &[4], &SimConfig::default()).unwrap();
    let b = evaluate_success(&p, &test, 3, &[4], &SimConfig::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn oracle_solves_held_out_cans() {
    let (_, test) = split_assets(Category::Can, 5, 5, 7);
    let r = evaluate_success(&OracleController::default(), &test, 4, &[1], &SimConfig::default()).unwrap();
    assert!(r.success_rate >= 0.9, "{}", r.success_rate);
}

fn tiny_spec(modes: Vec<Mode>) -> AblationSpec {
    AblationSpec {
        modes,
        demo_counts: vec![2],
        seeds: vec![0, 1],
        categories: vec![Category::Can, Category::Bottle],
        train_per_category: 2,
        test_per_category: 1,
        config: tiny_config(2),
        eval_trials: 2,
        eval_seeds: vec![0],
        ..AblationSpec::default()
    }
}

#[test]
fn ablation_table_layout_and_determinism() {
    let spec = tiny_spec(vec![Mode::DapgPc, Mode::Ilad]);
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let r1 = run_ablation(&spec, d1.path()).unwrap();
    run_ablation(&spec, d2.path()).unwrap();
    assert_eq!(r1.failed(), 0);
    let lines: Vec<&str> = r1.table.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "| Method | can | bottle | Average |");
    assert!(lines[2].starts_with("| dapg-pc |") && lines[3].starts_with("| ilad |"));
    assert_eq!(
        std::fs::read(d1.path().join("results.csv")).unwrap(),
        std::fs::read(d2.path().join("results.csv")).unwrap()
    );
    assert_eq!(r1.rows.len(), 2 * 2 * 2);
}

#[test]
fn demo_variant_grid_gives_two_rows() {
    let spec = AblationSpec {
        demo_variants: vec![DemoVariant::CemGraspD006, DemoVariant::CemNograspD006],
        ..tiny_spec(vec![Mode::Ilad])
    };
    let labels: Vec<String> = spec.cells().iter().map(|c| spec.label(c)).collect();
    assert_eq!(labels, vec!["ilad cem_grasp_d006", "ilad cem_nograsp_d006"]);
}

#[test]
fn failed_cells_are_reported() {
    let mut spec = tiny_spec(vec![Mode::RlPc]);
    spec.categories = vec![Category::Can];
    spec.seeds = vec![0];
    spec.config.arch.point_widths.clear();
    let d = tempfile::tempdir().unwrap();
    let r = run_ablation(&spec, d.path()).unwrap();
    assert_eq!(r.rows.len(), 1);
    assert_eq!(r.failed(), 1);
    assert!(!r.rows[0].error.is_empty());
    assert!(r.table.contains("failed"));
    let csv = std::fs::read_to_string(d.path().join("results.csv")).unwrap();
    assert!(csv.contains("failed"));
}

fn run(method: &str, returns: &[f64]) -> RunData {
    RunData {
        dir: Default::default(),
        method: method.into(),
        metrics: returns
            .iter()
            .enumerate()
            .map(|(epoch, &mean_return)| EpochMetrics {
                epoch,
                mean_return,
                success_rate_train: 0.0,
                kl: None,
                bc_loss: None,
                w_min: None,
                w_mean: None,
                w_max: None,
                demo_term_norm: 0.0,
                adv_term_norm: 0.0,
            })
            .collect(),
    }
}

#[test]
fn report_normalizes_across_methods() {
    let r = build_report(&[run("a", &[0.0, 1.0]), run("a", &[2.0, 3.0]), run("b", &[5.0, 9.0])]).unwrap();
    let a = r.curve("a");
    assert_eq!(a[0].normalized, 0.0);
    assert_eq!(r.curve("b")[1].normalized, 1.0);
    assert!((a[1].normalized - 1.0 / 8.0).abs() < 1e-12);
    assert!(r.summary.contains("| a | 2 | 2 |"));
}
