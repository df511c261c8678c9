//! Evaluation, the scripted oracle, ablation grids and learning-curve reports.

pub mod ablation;
pub mod eval;
pub mod oracle;
pub mod report;

pub use eval::{distribute_trials, evaluate_success, evaluate_with_counts, mean_std, Controller, EpisodeOutcome, EpisodeRecord, EvalReport};
pub use oracle::OracleController;
pub use ablation::{render_table, run_ablation, AblationResult, AblationRow, AblationSpec, Cell, DemoVariant};
pub use report::{build_report, load_run, report, CurvePoint, Report, RunData};
