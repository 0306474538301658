use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{OrlError, Result};
use crate::metrics::{mean, parse_run_csv, population_std, CurveRow, FINAL_WINDOW};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub seeds: usize,
    pub mean_normalized: f64,
    pub std_normalized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub label: String,
    /// Mean normalized score over the last ten evaluations; `None` for
    /// shorter logs.
    pub final_performance: Option<f64>,
    pub worst_episode_deviation: Option<f64>,
    pub worst_evaluation_deviation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub points: Vec<CurvePoint>,
    pub stability: Vec<StabilityRow>,
    pub final_mean: Option<f64>,
    pub final_std: Option<f64>,
}

fn deviation(values: &[f64]) -> Option<f64> {
    let m = mean(values);
    if values.is_empty() || m.abs() < 1e-12 {
        return None;
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    Some((100.0 * (min - m) / m.abs()).min(0.0))
}

/// Sums in a fixed order so the result does not depend on input order.
fn sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Mean ± population σ of the normalized score at each evaluation step, and
/// per-log stability metrics. All logs must share one evaluation grid.
pub fn curve_report(logs: &[(String, Vec<CurveRow>)]) -> Result<CurveReport> {
    let (_, first) = logs
        .first()
        .ok_or_else(|| OrlError::InvalidArgument("report needs at least one log".into()))?;
    let grid: Vec<u64> = first.iter().map(|r| r.step).collect();
    for (label, rows) in logs {
        if rows.iter().map(|r| r.step).ne(grid.iter().copied()) {
            return Err(OrlError::InvalidArgument(format!("{label}: evaluation steps differ from the first log")));
        }
    }

    let points = grid
        .iter()
        .enumerate()
        .map(|(i, &step)| {
            let vals = sorted(logs.iter().map(|(_, rows)| rows[i].normalized_mean));
            CurvePoint {
                step,
                seeds: vals.len(),
                mean_normalized: mean(&vals),
                std_normalized: population_std(&vals),
            }
        })
        .collect();

    let mut stability: Vec<StabilityRow> = logs
        .iter()
        .map(|(label, rows)| {
            let n = rows.len();
            let window = &rows[n.saturating_sub(FINAL_WINDOW)..];
            let means: Vec<f64> = window.iter().map(|r| r.mean_return).collect();
            StabilityRow {
                label: label.clone(),
                final_performance: (n >= FINAL_WINDOW).then(|| mean(&window.iter().map(|r| r.normalized_mean).collect::<Vec<_>>())),
                worst_episode_deviation: rows.last().and_then(|r| deviation(&r.episode_returns)),
                worst_evaluation_deviation: deviation(&means),
            }
        })
        .collect();
    stability.sort_by(|a, b| a.label.cmp(&b.label));

    let finals: Option<Vec<f64>> = stability.iter().map(|s| s.final_performance).collect();
    let finals = finals.map(|f| sorted(f.into_iter()));
    Ok(CurveReport {
        points,
        stability,
        final_mean: finals.as_ref().map(|f| mean(f)),
        final_std: finals.as_ref().map(|f| population_std(f)),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl CurveReport {
    /// `step,seeds,mean_normalized,std_normalized`
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("step,seeds,mean_normalized,std_normalized\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{}\n", p.step, p.seeds, p.mean_normalized, p.std_normalized));
        }
        out
    }

    /// `log,final_performance,worst_episode_deviation,worst_evaluation_deviation`
    pub fn stability_csv(&self) -> String {
        let mut out = String::from("log,final_performance,worst_episode_deviation,worst_evaluation_deviation\n");
        for s in &self.stability {
            out.push_str(&format!(
                "{},{},{},{}\n",
                s.label,
                opt(s.final_performance),
                opt(s.worst_episode_deviation),
                opt(s.worst_evaluation_deviation)
            ));
        }
        out
    }
}

/// Reads run CSVs and builds the report; logs are labelled by file name.
pub fn load_curve_report(paths: &[impl AsRef<Path>]) -> Result<CurveReport> {
    let logs = paths
        .iter()
        .map(|p| {
            let p = p.as_ref();
            let text = fs::read_to_string(p).map_err(|e| OrlError::io(p, e))?;
            let label = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
            Ok((label, parse_run_csv(&text)?))
        })
        .collect::<Result<Vec<_>>>()?;
    curve_report(&logs)
}
