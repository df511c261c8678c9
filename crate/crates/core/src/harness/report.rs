//! Learning-curve aggregation over completed training runs.

use super::eval::mean_std;
use crate::error::{invalid_arg, Error, Result};
use crate::imitation::EpochMetrics;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Metrics of one finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunData {
    pub dir: PathBuf,
    pub method: String,
    pub metrics: Vec<EpochMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub method: String,
    pub epoch: usize,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
    /// Mean return min-max normalized over every method's curve.
    pub normalized: f64,
    pub success_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub curves: Vec<CurvePoint>,
    pub warnings: Vec<String>,
    pub summary: String,
}

impl Report {
    pub fn curve(&self, method: &str) -> Vec<&CurvePoint> {
        self.curves.iter().filter(|p| p.method == method).collect()
    }
}

#[derive(Deserialize)]
struct ManifestMode {
    mode: String,
}

/// Reads a run directory. The method name comes from `cell.json` written by
/// the ablation runner when present, else from the manifest's mode.
pub fn load_run(dir: &Path) -> Result<RunData> {
    let cell = dir.join("cell.json");
    let method = if cell.exists() {
        let (label, _): (String, serde_json::Value) = serde_json::from_slice(&std::fs::read(cell)?)?;
        label
    } else {
        let m: ManifestMode = serde_json::from_slice(&std::fs::read(dir.join("manifest.json"))?)?;
        m.mode
    };
    let mut r = csv::Reader::from_path(dir.join("metrics.csv"))?;
    let metrics = r.deserialize().collect::<std::result::Result<Vec<EpochMetrics>, _>>()?;
    if metrics.is_empty() {
        return Err(Error::Format(format!("{} has no completed epochs", dir.display())));
    }
    Ok(RunData {
        dir: dir.to_path_buf(),
        method,
        metrics,
    })
}

/// Groups runs by method, truncates each group to its shortest run, and
/// normalizes mean returns by the global minimum and maximum.
pub fn build_report(runs: &[RunData]) -> Result<Report> {
    if runs.is_empty() {
        return Err(invalid_arg("no completed runs"));
    }
    let mut groups: BTreeMap<&str, Vec<&RunData>> = BTreeMap::new();
    for r in runs {
        groups.entry(&r.method).or_default().push(r);
    }
    let mut warnings = Vec::new();
    let mut curves = Vec::new();
    for (method, rs) in &groups {
        let shortest = rs.iter().map(|r| r.metrics.len()).min().expect("non-empty group");
        if rs.iter().any(|r| r.metrics.len() != shortest) {
            let w = format!("{method}: epoch counts differ, truncated to {shortest}");
            log::warn!("{w}");
            warnings.push(w);
        }
        for e in 0..shortest {
            let ret: Vec<f64> = rs.iter().map(|r| r.metrics[e].mean_return).collect();
            let succ: Vec<f64> = rs.iter().map(|r| r.metrics[e].success_rate_train).collect();
            let (mean, std) = mean_std(&ret);
            curves.push(CurvePoint {
                method: method.to_string(),
                epoch: rs[0].metrics[e].epoch,
                mean,
                std,
                runs: rs.len(),
                normalized: 0.0,
                success_mean: mean_std(&succ).0,
            });
        }
    }
    let lo = curves.iter().map(|p| p.mean).fold(f64::INFINITY, f64::min);
    let hi = curves.iter().map(|p| p.mean).fold(f64::NEG_INFINITY, f64::max);
    for p in &mut curves {
        p.normalized = if hi > lo { (p.mean - lo) / (hi - lo) } else { 0.0 };
    }

    let mut summary = String::from("# Learning curves\n\n");
    summary.push_str("| Method | Runs | Epochs | Final return | Last-quartile normalized | Final train success |\n");
    summary.push_str("|---|---|---|---|---|---|\n");
    for method in groups.keys() {
        let c: Vec<&CurvePoint> = curves.iter().filter(|p| p.method == *method).collect();
        let last = c.last().expect("at least one epoch");
        let q = &c[c.len() - c.len().div_ceil(4)..];
        let lq = q.iter().map(|p| p.normalized).sum::<f64>() / q.len() as f64;
        let _ = writeln!(
            summary,
            "| {method} | {} | {} | {:.3} ± {:.3} | {lq:.3} | {:.3} |",
            last.runs,
            c.len(),
            last.mean,
            last.std,
            last.success_mean
        );
    }
    if !warnings.is_empty() {
        summary.push_str("\n## Warnings\n\n");
        for w in &warnings {
            let _ = writeln!(summary, "- {w}");
        }
    }
    Ok(Report {
        curves,
        warnings,
        summary,
    })
}

/// Loads runs, writes `curves.csv` and `summary.md` into `out`.
pub fn report(run_dirs: &[PathBuf], out: &Path) -> Result<Report> {
    let runs = run_dirs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>>>()?;
    let rep = build_report(&runs)?;
    std::fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join("curves.csv"))?;
    for p in &rep.curves {
        w.serialize(p)?;
    }
    w.flush()?;
    std::fs::write(out.join("summary.md"), &rep.summary)?;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(method: &str, returns: &[f64]) -> RunData {
        RunData {
            dir: PathBuf::new(),
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
    fn single_run_spans_unit_interval() {
        let r = build_report(&[run("ilad", &[-3.0, -1.0, 2.0, 0.5])]).unwrap();
        let n: Vec<f64> = r.curves.iter().map(|p| p.normalized).collect();
        assert_eq!(n.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
        assert_eq!(n.iter().copied().fold(f64::NEG_INFINITY, f64::max), 1.0);
    }

    #[test]
    fn truncation_and_std() {
        let r = build_report(&[run("rl", &[1.0, 2.0, 3.0]), run("rl", &[3.0, 2.0]), run("rl", &[2.0, 5.0, 1.0])]).unwrap();
        assert_eq!(r.curve("rl").len(), 2);
        assert_eq!(r.warnings.len(), 1);
        assert!(r.curves.iter().all(|p| p.std >= 0.0));
        assert!((r.curves[0].mean - 2.0).abs() < 1e-12);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(build_report(&[]).is_err());
    }
}
