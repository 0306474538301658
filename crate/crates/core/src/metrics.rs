//! Evaluation protocol, normalized scores and stability diagnostics.
//!
//! Deviations are reported as `100·(min − mean)/|mean|`, so they are never
//! positive. Standard deviations across seeds use the population convention.

use serde::{Deserialize, Serialize};

use crate::envs::{run_episode, EnvSpec, Policy, ReferenceScores};
use crate::error::{OrlError, Result};

/// Number of trailing evaluations averaged into the final score.
pub const FINAL_WINDOW: usize = 10;
pub const DEFAULT_EPISODES_PER_EVAL: usize = 10;
const DEGENERATE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub train_step: u64,
    pub episode_returns: Vec<f64>,
    pub episode_seeds: Vec<u64>,
}

impl EvaluationRecord {
    pub fn mean_return(&self) -> f64 {
        mean(&self.episode_returns)
    }
}

/// Learner statistics sampled at each evaluation point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainDiagnostics {
    pub train_step: u64,
    pub critic_loss: f64,
    pub mean_abs_q: f64,
    pub lambda_value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub env_name: String,
    pub seed: u64,
    /// Identifies everything about the run except the seed.
    pub config_fingerprint: String,
    pub anchors: ReferenceScores,
    pub records: Vec<EvaluationRecord>,
    pub diagnostics: Vec<TrainDiagnostics>,
    /// `(phase, seconds)`; excluded from every deterministic artifact.
    #[serde(skip)]
    pub wall_clock: Vec<(String, f64)>,
}

impl RunLog {
    pub fn new(env_name: impl Into<String>, seed: u64, config_fingerprint: impl Into<String>, anchors: ReferenceScores) -> Self {
        Self {
            env_name: env_name.into(),
            seed,
            config_fingerprint: config_fingerprint.into(),
            anchors,
            records: Vec::new(),
            diagnostics: Vec::new(),
            wall_clock: Vec::new(),
        }
    }

    /// Appends a record; `train_step` must increase strictly.
    pub fn push(&mut self, record: EvaluationRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.train_step <= last.train_step {
                return Err(OrlError::InvalidArgument(format!(
                    "evaluation at step {} does not follow step {}",
                    record.train_step, last.train_step
                )));
            }
        }
        if record.episode_returns.iter().any(|r| !r.is_finite()) {
            return Err(OrlError::InvalidArgument(format!("non-finite return at step {}", record.train_step)));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn normalized_means(&self) -> Result<Vec<f64>> {
        self.records
            .iter()
            .map(|r| normalized_score(r.mean_return(), self.anchors.random_ref, self.anchors.expert_ref))
            .collect()
    }

    pub fn peak_mean_abs_q(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.mean_abs_q).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub final_performance: f64,
    /// Worst episode of the last evaluation; `None` for a degenerate mean.
    pub worst_episode_deviation: Option<f64>,
    /// Worst of the last ten evaluation means; `None` for a degenerate mean.
    pub worst_evaluation_deviation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub env_name: String,
    pub config_fingerprint: String,
    pub seeds: Vec<SeedSummary>,
    pub mean: f64,
    pub std: f64,
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Runs `episodes` deterministic rollouts with seeds `base_seed + i`.
pub fn evaluate_policy(policy: &mut dyn Policy, spec: &EnvSpec, episodes: usize, base_seed: u64, train_step: u64) -> Result<EvaluationRecord> {
    if episodes == 0 {
        return Err(OrlError::InvalidArgument("episodes must be at least 1".into()));
    }
    let episode_seeds: Vec<u64> = (0..episodes as u64).map(|i| base_seed.wrapping_add(i)).collect();
    let episode_returns = episode_seeds
        .iter()
        .map(|&s| run_episode(spec, s, policy))
        .collect::<Result<_>>()?;
    Ok(EvaluationRecord {
        train_step,
        episode_returns,
        episode_seeds,
    })
}

/// Evaluation base seed for the `eval_index`-th evaluation of a run.
pub fn eval_base_seed(train_seed: u64, eval_index: u64) -> u64 {
    train_seed.wrapping_mul(1_000_000).wrapping_add(eval_index)
}

/// `100·(raw − random_ref)/(expert_ref − random_ref)`.
pub fn normalized_score(raw: f64, random_ref: f64, expert_ref: f64) -> Result<f64> {
    if !(expert_ref > random_ref) {
        return Err(OrlError::InvalidArgument(format!(
            "expert_ref {expert_ref} must exceed random_ref {random_ref}"
        )));
    }
    Ok(100.0 * (raw - random_ref) / (expert_ref - random_ref))
}

/// Mean normalized score over every episode of the last ten evaluations.
pub fn final_performance(log: &RunLog) -> Result<f64> {
    let n = log.records.len();
    if n < FINAL_WINDOW {
        return Err(OrlError::InvalidArgument(format!("final performance needs {FINAL_WINDOW} evaluations, log has {n}")));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for rec in &log.records[n - FINAL_WINDOW..] {
        for &r in &rec.episode_returns {
            total += normalized_score(r, log.anchors.random_ref, log.anchors.expert_ref)?;
            count += 1;
        }
    }
    if count == 0 {
        return Err(OrlError::InvalidArgument("evaluations contain no episodes".into()));
    }
    Ok(total / count as f64)
}

fn min_deviation(values: &[f64], what: &'static str) -> Result<f64> {
    if values.is_empty() {
        return Err(OrlError::InvalidArgument(format!("{what}: no values")));
    }
    let m = mean(values);
    if m.abs() < DEGENERATE {
        return Err(OrlError::DegenerateMean(what));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((100.0 * (min - m) / m.abs()).min(0.0))
}

/// Shortfall of the worst episode relative to the record's mean, in percent.
pub fn worst_episode_deviation(record: &EvaluationRecord) -> Result<f64> {
    min_deviation(&record.episode_returns, "worst_episode_deviation")
}

/// Shortfall of the worst per-evaluation mean among the last `window`
/// records relative to their average, in percent.
pub fn worst_evaluation_deviation(log: &RunLog, window: usize) -> Result<f64> {
    let n = log.records.len();
    if window == 0 || window > n {
        return Err(OrlError::InvalidArgument(format!("window {window} for a log of {n} evaluations")));
    }
    let means: Vec<f64> = log.records[n - window..].iter().map(EvaluationRecord::mean_return).collect();
    min_deviation(&means, "worst_evaluation_deviation")
}

/// `100·(candidate − reference)/|reference|`.
pub fn percent_difference(candidate: f64, reference: f64) -> Result<f64> {
    if reference.abs() < DEGENERATE {
        return Err(OrlError::DegenerateMean("percent_difference"));
    }
    Ok(100.0 * (candidate - reference) / reference.abs())
}

pub fn summarize_seed(log: &RunLog) -> Result<SeedSummary> {
    let last = log
        .records
        .last()
        .ok_or_else(|| OrlError::InvalidArgument(format!("seed {} has no evaluations", log.seed)))?;
    Ok(SeedSummary {
        seed: log.seed,
        final_performance: final_performance(log)?,
        worst_episode_deviation: worst_episode_deviation(last).ok(),
        worst_evaluation_deviation: worst_evaluation_deviation(log, FINAL_WINDOW.min(log.records.len())).ok(),
    })
}

/// Per-seed final scores with their mean and population σ. Seeds are
/// reported in ascending order regardless of input order.
pub fn aggregate_over_seeds(logs: &[RunLog]) -> Result<AggregateReport> {
    let first = logs
        .first()
        .ok_or_else(|| OrlError::InvalidArgument("aggregate_over_seeds needs at least one log".into()))?;
    for log in logs {
        if log.config_fingerprint != first.config_fingerprint || log.env_name != first.env_name || log.anchors != first.anchors {
            return Err(OrlError::InvalidArgument(format!(
                "seed {} was produced by a different configuration than seed {}",
                log.seed, first.seed
            )));
        }
    }
    let mut seeds = logs.iter().map(summarize_seed).collect::<Result<Vec<_>>>()?;
    seeds.sort_by_key(|s| s.seed);
    if seeds.windows(2).any(|w| w[0].seed == w[1].seed) {
        return Err(OrlError::InvalidArgument("duplicate seed in aggregate".into()));
    }
    let finals: Vec<f64> = seeds.iter().map(|s| s.final_performance).collect();
    Ok(AggregateReport {
        env_name: first.env_name.clone(),
        config_fingerprint: first.config_fingerprint.clone(),
        mean: mean(&finals),
        std: population_std(&finals),
        seeds,
    })
}

/// CSV with one row per evaluation:
/// `step, ep_return_0..N-1, mean_return, normalized_mean`.
pub fn run_log_csv(log: &RunLog) -> Result<String> {
    let episodes = log.records.first().map_or(DEFAULT_EPISODES_PER_EVAL, |r| r.episode_returns.len());
    let mut out = String::from("step");
    for i in 0..episodes {
        out.push_str(&format!(",ep_return_{i}"));
    }
    out.push_str(",mean_return,normalized_mean\n");
    for (rec, norm) in log.records.iter().zip(log.normalized_means()?) {
        if rec.episode_returns.len() != episodes {
            return Err(OrlError::InvalidArgument(format!("step {}: episode count changed mid-run", rec.train_step)));
        }
        out.push_str(&rec.train_step.to_string());
        for r in &rec.episode_returns {
            out.push_str(&format!(",{r}"));
        }
        out.push_str(&format!(",{},{norm}\n", rec.mean_return()));
    }
    Ok(out)
}

/// One parsed row of a run CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub step: u64,
    pub episode_returns: Vec<f64>,
    pub mean_return: f64,
    pub normalized_mean: f64,
}

pub fn parse_run_csv(text: &str) -> Result<Vec<CurveRow>> {
    let bad = |line: usize, msg: String| OrlError::InvalidArgument(format!("run CSV line {line}: {msg}"));
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let episodes = cols.len().saturating_sub(3);
    let valid = cols.len() >= 4
        && cols[0] == "step"
        && cols[cols.len() - 2] == "mean_return"
        && cols[cols.len() - 1] == "normalized_mean"
        && (0..episodes).all(|i| cols[1 + i] == format!("ep_return_{i}"));
    if !valid {
        return Err(bad(1, format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(bad(i + 1, format!("{} fields, expected {}", fields.len(), cols.len())));
        }
        let step = fields[0].parse::<u64>().map_err(|e| bad(i + 1, e.to_string()))?;
        let nums = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| bad(i + 1, e.to_string())))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(CurveRow {
            step,
            episode_returns: nums[..episodes].to_vec(),
            mean_return: nums[episodes],
            normalized_mean: nums[episodes + 1],
        });
    }
    Ok(rows)
}
