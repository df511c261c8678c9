//! Variant grids: every cell is trained per category and seed, evaluated on
//! held-out objects, and summarized as a long CSV plus a markdown table.

use super::eval::{distribute_trials, evaluate_with_counts, mean_std, EvalReport};
use crate::error::{invalid_arg, Error, Result};
use crate::imitation::{train, IladConfig, Mode};
use crate::planner::{generate_demo_set, write_demo_file, CemConfig, DemoGenConfig, DemoSet, PlannerKind, RrtConfig};
use crate::shapes::{generate_category_instances, train_test_split, write_object_set, Category};
use crate::sim::{assets, ObjectAsset};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemoVariant {
    CemGraspD006,
    CemGraspD010,
    CemNograspD006,
    Rrt,
}

impl DemoVariant {
    pub fn name(self) -> &'static str {
        match self {
            DemoVariant::CemGraspD006 => "cem_grasp_d006",
            DemoVariant::CemGraspD010 => "cem_grasp_d010",
            DemoVariant::CemNograspD006 => "cem_nograsp_d006",
            DemoVariant::Rrt => "rrt",
        }
    }

    /// Generation recipe for this variant.
    pub fn recipe(self) -> DemoGenConfig {
        let cem = |delta| CemConfig {
            delta,
            ..CemConfig::default()
        };
        match self {
            DemoVariant::CemGraspD006 => DemoGenConfig {
                cem: cem(0.06),
                ..DemoGenConfig::default()
            },
            DemoVariant::CemGraspD010 => DemoGenConfig {
                cem: cem(0.10),
                ..DemoGenConfig::default()
            },
            DemoVariant::CemNograspD006 => DemoGenConfig {
                cem: cem(0.06),
                use_grasp_pose: false,
                ..DemoGenConfig::default()
            },
            DemoVariant::Rrt => DemoGenConfig {
                cem: cem(0.06),
                planner: PlannerKind::Rrt(RrtConfig::default()),
                ..DemoGenConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationSpec {
    pub name: String,
    pub modes: Vec<Mode>,
    pub t_values: Vec<usize>,
    /// Demonstrations per category.
    pub demo_counts: Vec<usize>,
    pub demo_variants: Vec<DemoVariant>,
    /// Joint-learning settings tried for ILAD.
    pub joint_learning: Vec<bool>,
    pub seeds: Vec<u64>,
    pub categories: Vec<Category>,
    pub train_per_category: usize,
    pub test_per_category: usize,
    pub object_seed: u64,
    pub demo_seed: u64,
    pub config: IladConfig,
    /// Evaluation trials per category and evaluation seed.
    pub eval_trials: usize,
    pub eval_seeds: Vec<u64>,
}

impl Default for AblationSpec {
    fn default() -> Self {
        AblationSpec {
            name: "ablation".into(),
            modes: vec![Mode::DapgPc, Mode::Ilad],
            t_values: vec![50],
            demo_counts: vec![20],
            demo_variants: vec![DemoVariant::CemGraspD006],
            joint_learning: vec![true],
            seeds: vec![0, 1, 2],
            categories: Category::ALL.to_vec(),
            train_per_category: 5,
            test_per_category: 5,
            object_seed: 0,
            demo_seed: 0,
            config: IladConfig::default(),
            eval_trials: 100,
            eval_seeds: vec![0],
        }
    }
}

/// One row of the result table.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub mode: Mode,
    pub t: usize,
    pub demo_count: usize,
    pub demo_variant: Option<DemoVariant>,
    pub joint_learning: bool,
}

impl Cell {
    pub fn config(&self, base: &IladConfig, seed: u64) -> IladConfig {
        IladConfig {
            t: self.t,
            joint_learning: self.joint_learning,
            seed,
            ..base.clone()
        }
    }
}

impl AblationSpec {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (!self.modes.is_empty(), "no modes"),
            (!self.seeds.is_empty(), "no seeds"),
            (!self.categories.is_empty(), "no categories"),
            (!self.t_values.is_empty() && !self.t_values.contains(&0), "T values must be positive"),
            (!self.joint_learning.is_empty(), "no joint-learning settings"),
            (self.train_per_category >= 1 && self.test_per_category >= 1, "need train and test objects"),
            (self.eval_trials >= 1 && !self.eval_seeds.is_empty(), "need evaluation trials and seeds"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(invalid_arg(msg));
            }
        }
        if self.modes.iter().any(|m| m.needs_demos())
            && (self.demo_counts.is_empty() || self.demo_variants.is_empty() || self.demo_counts.contains(&0))
        {
            return Err(invalid_arg("demo modes need positive demo counts and a demo variant"));
        }
        self.config.validate()
    }

    /// Distinct cells in grid order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out: Vec<Cell> = Vec::new();
        for &mode in &self.modes {
            let jls = if mode == Mode::Ilad {
                self.joint_learning.clone()
            } else {
                vec![mode.joint_learning(&self.config)]
            };
            for jl in jls {
                let probe = IladConfig {
                    joint_learning: jl,
                    ..self.config.clone()
                };
                let ts = if mode.joint_learning(&probe) {
                    self.t_values.clone()
                } else {
                    vec![self.config.t]
                };
                let demos: Vec<(usize, Option<DemoVariant>)> = if mode.needs_demos() {
                    self.demo_variants
                        .iter()
                        .flat_map(|&v| self.demo_counts.iter().map(move |&c| (c, Some(v))))
                        .collect()
                } else {
                    vec![(0, None)]
                };
                for &t in &ts {
                    for &(demo_count, demo_variant) in &demos {
                        let c = Cell {
                            mode,
                            t,
                            demo_count,
                            demo_variant,
                            joint_learning: jl,
                        };
                        if !out.contains(&c) {
                            out.push(c);
                        }
                    }
                }
            }
        }
        out
    }

    /// Row label naming the mode plus every grid dimension that varies.
    pub fn label(&self, cell: &Cell) -> String {
        let mut s = cell.mode.name().to_string();
        if self.t_values.len() > 1 && cell.mode.joint_learning(&cell.config(&self.config, 0)) {
            let _ = write!(s, " T={}", cell.t);
        }
        if cell.mode.needs_demos() {
            if self.demo_counts.len() > 1 {
                let _ = write!(s, " demos={}", cell.demo_count);
            }
            if let (true, Some(v)) = (self.demo_variants.len() > 1, cell.demo_variant) {
                let _ = write!(s, " {}", v.name());
            }
        }
        if cell.mode == Mode::Ilad && self.joint_learning.len() > 1 {
            s.push_str(if cell.joint_learning { " jl" } else { " no-jl" });
        }
        s
    }
}

/// Long-format result row; failed jobs keep their error text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub mode: Mode,
    pub t: usize,
    pub demo_count: usize,
    pub demo_variant: String,
    pub joint_learning: bool,
    pub category: Category,
    pub seed: u64,
    pub status: String,
    pub success_rate: Option<f64>,
    pub successes: Option<usize>,
    pub trials: Option<usize>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationResult {
    pub rows: Vec<AblationRow>,
    pub table: String,
}

impl AblationResult {
    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|r| r.status != "ok").count()
    }

    /// Seed-mean success for a label and category.
    pub fn seed_mean(&self, label: &str, category: Category) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.label == label && r.category == category)
            .filter_map(|r| r.success_rate)
            .collect();
        (!v.is_empty()).then(|| mean_std(&v).0)
    }
}

struct CategoryData {
    train: Vec<Arc<ObjectAsset>>,
    test: Vec<Arc<ObjectAsset>>,
}

type DemoKey = (Category, DemoVariant, usize);

fn run_cell(
    spec: &AblationSpec,
    cell: &Cell,
    data: &CategoryData,
    demos: Option<&DemoSet>,
    seed: u64,
    dir: &Path,
) -> Result<EvalReport> {
    let cfg = cell.config(&spec.config, seed);
    let out = train(&data.train, demos, &cfg, cell.mode, Some(dir))?;
    let counts = distribute_trials(spec.eval_trials, data.test.len());
    let report = evaluate_with_counts(&out.params, &data.test, &counts, &spec.eval_seeds, &cfg.sim)?;
    std::fs::write(dir.join("eval.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

fn panic_text(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

fn dir_name(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '=' { c } else { '_' })
        .collect()
}

/// Runs every cell for every category and seed. Jobs run in parallel and
/// each owns `out_dir/cells/<label>/<category>/seed_<s>`; a failing job
/// becomes a failed row.
pub fn run_ablation(spec: &AblationSpec, out_dir: &Path) -> Result<AblationResult> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("spec.json"), serde_json::to_string_pretty(spec)?)?;
    let cells = spec.cells();
    let sim = &spec.config.sim;

    let total = spec.train_per_category + spec.test_per_category;
    let fraction = spec.test_per_category as f64 / total as f64;
    let objects_dir = out_dir.join("objects");
    std::fs::create_dir_all(&objects_dir)?;
    let mut data = BTreeMap::new();
    for &c in &spec.categories {
        let all = generate_category_instances(c, total, spec.object_seed)?;
        let (train_p, test_p) = train_test_split(&all, fraction, spec.object_seed)?;
        write_object_set(&objects_dir.join(format!("{c}_train.json")), &train_p)?;
        write_object_set(&objects_dir.join(format!("{c}_test.json")), &test_p)?;
        data.insert(
            c,
            CategoryData {
                train: assets(&train_p, sim.n_points)?,
                test: assets(&test_p, sim.n_points)?,
            },
        );
    }

    let mut keys: Vec<DemoKey> = Vec::new();
    for cell in &cells {
        if let Some(v) = cell.demo_variant {
            for &c in &spec.categories {
                if !keys.contains(&(c, v, cell.demo_count)) {
                    keys.push((c, v, cell.demo_count));
                }
            }
        }
    }
    let demos_dir = out_dir.join("demos");
    std::fs::create_dir_all(&demos_dir)?;
    let demo_sets: BTreeMap<DemoKey, std::result::Result<DemoSet, String>> = keys
        .par_iter()
        .map(|&(c, v, count)| {
            let train_objs = &data[&c].train;
            let per_object = count.div_ceil(train_objs.len());
            let made = generate_demo_set(train_objs, per_object, &v.recipe(), sim, spec.demo_seed).and_then(|(set, rep)| {
                let stem = format!("{c}_{}_{count}", v.name());
                write_demo_file(&demos_dir.join(format!("{stem}.jsonl")), &set)?;
                rep.write_csv(&demos_dir.join(format!("{stem}_report.csv")))?;
                Ok(set)
            });
            ((c, v, count), made.map_err(|e| e.to_string()))
        })
        .collect();

    let jobs: Vec<(&Cell, Category, u64)> = cells
        .iter()
        .flat_map(|cell| {
            spec.categories
                .iter()
                .flat_map(move |&c| spec.seeds.iter().map(move |&s| (cell, c, s)))
        })
        .collect();
    let rows: Vec<AblationRow> = jobs
        .par_iter()
        .map(|&(cell, category, seed)| {
            let label = spec.label(cell);
            let dir = out_dir
                .join("cells")
                .join(dir_name(&label))
                .join(category.name())
                .join(format!("seed_{seed}"));
            let outcome = (|| -> Result<EvalReport> {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("cell.json"), serde_json::to_string_pretty(&(&label, cell))?)?;
                let demos = match cell.demo_variant {
                    Some(v) => match &demo_sets[&(category, v, cell.demo_count)] {
                        Ok(set) => Some(set),
                        Err(e) => return Err(Error::GenerationFailed(e.clone())),
                    },
                    None => None,
                };
                catch_unwind(AssertUnwindSafe(|| run_cell(spec, cell, &data[&category], demos, seed, &dir)))
                    .map_err(|p| Error::InvalidState(format!("job panicked: {}", panic_text(p))))?
            })();
            if let Err(e) = &outcome {
                log::warn!("{label} {category} seed {seed} failed: {e}");
            }
            let ok = outcome.as_ref().ok();
            AblationRow {
                label,
                mode: cell.mode,
                t: cell.t,
                demo_count: cell.demo_count,
                demo_variant: cell.demo_variant.map_or("", |v| v.name()).to_string(),
                joint_learning: cell.joint_learning,
                category,
                seed,
                status: if ok.is_some() { "ok" } else { "failed" }.into(),
                success_rate: ok.map(|r| r.success_rate),
                successes: ok.map(|r| r.successes),
                trials: ok.map(|r| r.trials),
                error: outcome.err().map_or(String::new(), |e| e.to_string()),
            }
        })
        .collect();

    let labels: Vec<String> = cells.iter().map(|c| spec.label(c)).collect();
    let table = render_table(&labels, &spec.categories, &spec.seeds, &rows);
    let mut w = csv::Writer::from_path(out_dir.join("results.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    std::fs::write(out_dir.join("results.md"), &table)?;
    Ok(AblationResult { rows, table })
}

fn cell_text(rates: &[f64], expected: usize) -> String {
    if rates.is_empty() {
        return "failed".into();
    }
    let (m, s) = mean_std(rates);
    let mut t = format!("{m:.3} ± {s:.3}");
    if rates.len() < expected {
        let _ = write!(t, " ({}/{expected} ok)", rates.len());
    }
    t
}

/// Markdown table: one row per label, one column per category plus an
/// average over categories computed per seed.
pub fn render_table(labels: &[String], categories: &[Category], seeds: &[u64], rows: &[AblationRow]) -> String {
    let rate = |label: &str, c: Category, s: u64| {
        rows.iter()
            .find(|r| r.label == label && r.category == c && r.seed == s)
            .and_then(|r| r.success_rate)
    };
    let mut out = String::from("| Method |");
    for c in categories {
        let _ = write!(out, " {c} |");
    }
    out.push_str(" Average |\n|---|");
    out.push_str(&"---|".repeat(categories.len() + 1));
    out.push('\n');
    for label in labels {
        let _ = write!(out, "| {label} |");
        for &c in categories {
            let v: Vec<f64> = seeds.iter().filter_map(|&s| rate(label, c, s)).collect();
            let _ = write!(out, " {} |", cell_text(&v, seeds.len()));
        }
        let avg: Vec<f64> = seeds
            .iter()
            .filter_map(|&s| {
                let v: Option<Vec<f64>> = categories.iter().map(|&c| rate(label, c, s)).collect();
                v.map(|v| v.iter().sum::<f64>() / v.len() as f64)
            })
            .collect();
        let _ = writeln!(out, " {} |", cell_text(&avg, seeds.len()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_collapses_unused_dimensions() {
        let spec = AblationSpec {
            modes: Mode::ALL.to_vec(),
            t_values: vec![10, 50],
            demo_counts: vec![20, 100],
            demo_variants: vec![DemoVariant::CemGraspD006],
            joint_learning: vec![true, false],
            ..AblationSpec::default()
        };
        let cells = spec.cells();
        // rl: 1, rl-pc: 2 T values, dapg-pc: 2 counts, ilad: jl (2 T x 2 counts) + no-jl (2 counts)
        assert_eq!(cells.len(), 1 + 2 + 2 + 6);
        let labels: Vec<String> = cells.iter().map(|c| spec.label(c)).collect();
        let mut unique = labels.clone();
        unique.dedup();
        assert_eq!(unique.len(), labels.len());
        assert!(labels.contains(&"ilad T=10 demos=100 jl".to_string()));
        assert!(labels.contains(&"ilad demos=20 no-jl".to_string()));
    }

    #[test]
    fn table_layout_and_failures() {
        let row = |label: &str, c: Category, seed: u64, rate: Option<f64>| AblationRow {
            label: label.into(),
            mode: Mode::Ilad,
            t: 50,
            demo_count: 20,
            demo_variant: String::new(),
            joint_learning: true,
            category: c,
            seed,
            status: if rate.is_some() { "ok" } else { "failed" }.into(),
            success_rate: rate,
            successes: None,
            trials: None,
            error: String::new(),
        };
        let cats = [Category::Bottle, Category::Can];
        let rows = vec![
            row("a", Category::Bottle, 0, Some(0.2)),
            row("a", Category::Bottle, 1, Some(0.4)),
            row("a", Category::Can, 0, Some(0.6)),
            row("a", Category::Can, 1, None),
            row("b", Category::Bottle, 0, None),
            row("b", Category::Bottle, 1, None),
            row("b", Category::Can, 0, Some(1.0)),
            row("b", Category::Can, 1, Some(1.0)),
        ];
        let t = render_table(&["a".into(), "b".into()], &cats, &[0, 1], &rows);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "| Method | bottle | can | Average |");
        assert!(lines[2].starts_with("| a | 0.300 ± 0.100 | 0.600 ± 0.000 (1/2 ok) | 0.400 ± 0.000 (1/2 ok) |"));
        assert!(lines[3].starts_with("| b | failed | 1.000 ± 0.000 | failed |"));
    }
}
