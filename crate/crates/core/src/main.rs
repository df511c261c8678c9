use clap::{Parser, Subcommand, ValueEnum};
use ilad::harness::{self, distribute_trials, evaluate_with_counts, AblationSpec, Controller, OracleController};
use ilad::imitation::{train, IladConfig, Mode};
use ilad::nets::load_checkpoint;
use ilad::planner::{generate_demo_set, read_demo_file, write_demo_file, DemoGenConfig, PlannerKind, RrtConfig};
use ilad::shapes::{generate_category_instances, read_object_set, train_test_split, write_object_set, Category, Polygon, Split};
use ilad::sim::assets;
use ilad::{Error, Result};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "ilad", version, about = "Affordance demonstrations and augmented policy gradients for planar relocation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlannerArg {
    Cem,
    Rrt,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Generate procedural object instances and split them.
    GenObjects {
        /// Category name, a comma-separated list, or "all".
        #[arg(long)]
        category: String,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0.5)]
        test_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plan demonstrations on the training split of an object file.
    GenDemos {
        #[arg(long)]
        objects: PathBuf,
        #[arg(long)]
        per_object: usize,
        #[arg(long, default_value_t = 0.06)]
        delta: f64,
        #[arg(long)]
        no_grasp_pose: bool,
        #[arg(long, value_enum, default_value = "cem")]
        planner: PlannerArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a policy on the training split.
    Train {
        #[arg(long)]
        mode: Mode,
        #[arg(long)]
        objects: PathBuf,
        #[arg(long)]
        demos: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint, or the scripted oracle, on an object split.
    Eval {
        #[arg(long, required_unless_present = "oracle")]
        checkpoint: Option<PathBuf>,
        #[arg(long, conflicts_with = "checkpoint")]
        oracle: bool,
        #[arg(long)]
        objects: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Trials per seed, spread over the objects.
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an ablation grid.
    Ablate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate learning curves of finished runs.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

fn load_config(path: Option<&Path>) -> Result<IladConfig> {
    path.map_or_else(|| Ok(IladConfig::default()), read_json)
}

fn select(objects: Vec<Polygon>, split: SplitArg) -> Result<Vec<Polygon>> {
    let out: Vec<Polygon> = objects
        .into_iter()
        .filter(|o| match split {
            SplitArg::Train => o.split == Split::Train,
            SplitArg::Test => o.split == Split::Test,
            SplitArg::All => true,
        })
        .collect();
    if out.is_empty() {
        return Err(Error::InvalidArgument("no objects in the requested split".into()));
    }
    Ok(out)
}

fn categories(arg: &str) -> Result<Vec<Category>> {
    if arg.eq_ignore_ascii_case("all") {
        return Ok(Category::ALL.to_vec());
    }
    arg.split(',').map(|s| s.trim().parse()).collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenObjects {
            category,
            count,
            test_fraction,
            seed,
            out,
        } => {
            let mut all = Vec::new();
            for c in categories(&category)? {
                let inst = generate_category_instances(c, count, seed)?;
                let (tr, te) = train_test_split(&inst, test_fraction, seed)?;
                all.extend(tr);
                all.extend(te);
            }
            write_object_set(&out, &all)?;
            println!("wrote {} objects to {}", all.len(), out.display());
        }
        Command::GenDemos {
            objects,
            per_object,
            delta,
            no_grasp_pose,
            planner,
            seed,
            out,
        } => {
            let train_objs = select(read_object_set(&objects)?, SplitArg::Train)?;
            let mut cfg = DemoGenConfig {
                use_grasp_pose: !no_grasp_pose,
                planner: match planner {
                    PlannerArg::Cem => PlannerKind::Cem,
                    PlannerArg::Rrt => PlannerKind::Rrt(RrtConfig::default()),
                },
                ..DemoGenConfig::default()
            };
            cfg.cem.delta = delta;
            let sim = ilad::sim::SimConfig::default();
            let (set, rep) = generate_demo_set(&assets(&train_objs, sim.n_points)?, per_object, &cfg, &sim, seed)?;
            write_demo_file(&out, &set)?;
            let report_path = out.with_extension("report.csv");
            rep.write_csv(&report_path)?;
            println!(
                "accepted {} of {} attempts; demos in {}, report in {}",
                rep.accepted(),
                rep.attempts(),
                out.display(),
                report_path.display()
            );
        }
        Command::Train {
            mode,
            objects,
            demos,
            config,
            seed,
            out,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let train_objs = select(read_object_set(&objects)?, SplitArg::Train)?;
            let demo_set = demos.as_deref().map(read_demo_file).transpose()?;
            let res = train(&assets(&train_objs, cfg.sim.n_points)?, demo_set.as_ref(), &cfg, mode, Some(&out))?;
            if let Some(m) = res.metrics.last() {
                println!(
                    "{mode}: {} epochs, final return {:.3}, train success {:.3}",
                    res.metrics.len(),
                    m.mean_return,
                    m.success_rate_train
                );
            }
        }
        Command::Eval {
            checkpoint,
            oracle,
            objects,
            split,
            trials,
            seeds,
            config,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let objs = assets(&select(read_object_set(&objects)?, split)?, cfg.sim.n_points)?;
            let counts = distribute_trials(trials, objs.len());
            let controller: Box<dyn Controller> = if oracle {
                Box::new(OracleController::default())
            } else {
                let path = checkpoint.expect("clap requires a checkpoint without --oracle");
                Box::new(load_checkpoint(&path)?.0)
            };
            let rep = evaluate_with_counts(controller.as_ref(), &objs, &counts, &seeds, &cfg.sim)?;
            std::fs::write(&out, serde_json::to_string_pretty(&rep)?)?;
            println!(
                "success {:.3} ({}/{}), seed mean {:.3} ± {:.3}",
                rep.success_rate, rep.successes, rep.trials, rep.seed_mean, rep.seed_std
            );
        }
        Command::Ablate { spec, out } => {
            let spec: AblationSpec = read_json(&spec)?;
            let res = harness::run_ablation(&spec, &out)?;
            print!("{}", res.table);
            if res.failed() > 0 {
                eprintln!("{} jobs failed; see {}", res.failed(), out.join("results.csv").display());
            }
        }
        Command::Report { runs, out } => {
            let rep = harness::report(&runs, &out)?;
            print!("{}", rep.summary);
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(n) = std::env::var("ILAD_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
