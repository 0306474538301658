//! Experiment orchestration: dataset preparation, multi-seed training with
//! periodic evaluation, artifact export, profiling and curve reports.
//!
//! A run directory contains `seed_<s>.csv` and `seed_<s>.ckpt` for every
//! successful seed, plus `report.json`, `config.toml` and `timing.json`.
//! Everything except `timing.json` is a function of the config alone.

mod config;
mod profile;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{agent_init, save_checkpoint, train_step, Checkpoint, LossReport};
use crate::datasets::{apply_normalization, compute_normalization, generate_dataset, load_dataset, NormalizationStats, OfflineDataset, DEFAULT_NORM_EPSILON};
use crate::envs::{EnvSpec, ReferenceScores};
use crate::error::{OrlError, Result};
use crate::metrics::{aggregate_over_seeds, eval_base_seed, evaluate_policy, run_log_csv, AggregateReport, RunLog, TrainDiagnostics};

pub use config::{default_output_dir, DatasetSource, ExperimentConfig, DESK_EVAL_EVERY, DESK_TOTAL_STEPS, OUTPUT_DIR_ENV, PAPER_EVAL_EVERY, PAPER_TOTAL_STEPS};
pub use profile::{machine_descriptor, profile_configs, profile_training, MachineDescriptor, ProfileEntry, ProfileReport};
pub use report::{curve_report, load_curve_report, CurvePoint, CurveReport, StabilityRow};

/// Dataset ready for training, with the statistics the policy needs at
/// evaluation time.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub train: OfflineDataset,
    pub stats: Option<NormalizationStats>,
}

/// Normalizes `raw` with its own state statistics when `use_state_norm` is set.
pub fn prepare_dataset(raw: &OfflineDataset, use_state_norm: bool) -> Result<PreparedData> {
    if !use_state_norm {
        return Ok(PreparedData {
            train: raw.clone().with_stats(None)?,
            stats: None,
        });
    }
    let stats = compute_normalization(raw, DEFAULT_NORM_EPSILON);
    Ok(PreparedData {
        train: apply_normalization(raw, &stats)?,
        stats: Some(stats),
    })
}

/// Loads `source.path`, or generates the described dataset.
pub fn resolve_dataset(spec: &EnvSpec, source: &DatasetSource) -> Result<OfflineDataset> {
    let d = match &source.path {
        Some(path) => load_dataset(path)?,
        None => generate_dataset(spec, source.tier, source.size, source.seed)?,
    };
    if d.env_name() != spec.name() {
        return Err(OrlError::InvalidArgument(format!(
            "dataset was generated for {}, experiment targets {}",
            d.env_name(),
            spec.name()
        )));
    }
    Ok(d)
}

#[derive(Clone, Debug)]
pub struct SeedRun {
    pub log: RunLog,
    pub checkpoint: Checkpoint,
}

/// Trains one seed for `total_steps`, evaluating every `eval_every` steps.
pub fn run_seed(spec: &EnvSpec, data: &PreparedData, cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let anchors = ReferenceScores {
        random_ref: spec.random_ref,
        expert_ref: spec.expert_ref,
    };
    let mut log = RunLog::new(spec.name(), seed, cfg.fingerprint(), anchors);
    let mut state = agent_init(spec, &cfg.agent, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);

    let (mut train_secs, mut eval_secs) = (0.0, 0.0);
    let mut last_lambda = None;
    let mut clock = Instant::now();
    for step in 1..=cfg.total_steps {
        let report: LossReport = train_step(&mut state, &data.train, &cfg.agent, &mut rng)?;
        if report.lambda_value.is_some() {
            last_lambda = report.lambda_value;
        }
        if step % cfg.eval_every == 0 {
            train_secs += clock.elapsed().as_secs_f64();
            clock = Instant::now();
            let eval_index = step / cfg.eval_every - 1;
            let mut policy = state.policy(data.stats.clone());
            let record = evaluate_policy(&mut policy, spec, cfg.episodes_per_eval, eval_base_seed(seed, eval_index), step)?;
            log.push(record)?;
            log.diagnostics.push(TrainDiagnostics {
                train_step: step,
                critic_loss: report.critic_loss,
                mean_abs_q: report.mean_abs_q,
                lambda_value: last_lambda,
            });
            eval_secs += clock.elapsed().as_secs_f64();
            clock = Instant::now();
        }
    }
    log.wall_clock = vec![("train".into(), train_secs), ("eval".into(), eval_secs)];
    let checkpoint = Checkpoint {
        env_name: spec.name().to_string(),
        seed,
        config: cfg.agent.clone(),
        stats: data.stats.clone(),
        state,
    };
    Ok(SeedRun { log, checkpoint })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedSeed {
    pub seed: u64,
    pub error: String,
}

/// Contents of `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub env_name: String,
    pub config_fingerprint: String,
    /// `None` when every seed failed.
    pub aggregate: Option<AggregateReport>,
    pub failed_seeds: Vec<FailedSeed>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunArtifacts {
    pub output_dir: PathBuf,
    pub csv_logs: Vec<PathBuf>,
    pub checkpoints: Vec<PathBuf>,
    pub report: PathBuf,
    pub timing: PathBuf,
    pub config_snapshot: PathBuf,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub logs: Vec<RunLog>,
    pub artifacts: RunArtifacts,
}

impl ExperimentOutcome {
    pub fn all_failed(&self) -> bool {
        self.report.aggregate.is_none()
    }
}

#[derive(Serialize)]
struct SeedTiming {
    seed: u64,
    phases: Vec<(String, f64)>,
}

#[derive(Serialize)]
struct Timing {
    dataset_seconds: f64,
    jobs: usize,
    seeds: Vec<SeedTiming>,
    total_seconds: f64,
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| OrlError::io(path, e))
}

/// Runs `f` over `items` on up to `jobs` threads; results keep input order.
fn parallel_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(items.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots.into_iter().map(|s| s.into_inner().unwrap().expect("every slot filled")).collect()
}

/// Trains every seed, writes per-seed artifacts and the aggregate report.
/// A seed that fails is recorded in the report and leaves no files behind.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let started = Instant::now();
    let spec = EnvSpec::lookup(&cfg.env)?;
    let raw = resolve_dataset(&spec, &cfg.dataset)?;
    let data = prepare_dataset(&raw, cfg.agent.use_state_norm)?;
    let dataset_seconds = started.elapsed().as_secs_f64();

    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| OrlError::io(out, e))?;
    let results = parallel_map(&cfg.seeds, cfg.jobs, |&seed| run_seed(&spec, &data, cfg, seed));

    let mut logs = Vec::new();
    let mut failed_seeds = Vec::new();
    let mut csv_logs = Vec::new();
    let mut checkpoints = Vec::new();
    for (&seed, result) in cfg.seeds.iter().zip(results) {
        match result {
            Ok(run) => {
                let csv_path = out.join(format!("seed_{seed}.csv"));
                let ckpt_path = out.join(format!("seed_{seed}.ckpt"));
                write_file(&csv_path, run_log_csv(&run.log)?)?;
                save_checkpoint(&run.checkpoint, &ckpt_path)?;
                csv_logs.push(csv_path);
                checkpoints.push(ckpt_path);
                logs.push(run.log);
            }
            Err(e) if e.is_numeric() => failed_seeds.push(FailedSeed {
                seed,
                error: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }

    let aggregate = if logs.is_empty() { None } else { Some(aggregate_over_seeds(&logs)?) };
    let report = ExperimentReport {
        env_name: spec.name().to_string(),
        config_fingerprint: cfg.fingerprint(),
        aggregate,
        failed_seeds,
    };
    let report_path = out.join("report.json");
    write_file(&report_path, serde_json::to_string_pretty(&report).expect("report serializes") + "\n")?;
    let config_path = out.join("config.toml");
    write_file(&config_path, cfg.to_toml_string())?;

    let timing = Timing {
        dataset_seconds,
        jobs: cfg.jobs,
        seeds: logs
            .iter()
            .map(|l| SeedTiming {
                seed: l.seed,
                phases: l.wall_clock.clone(),
            })
            .collect(),
        total_seconds: started.elapsed().as_secs_f64(),
    };
    let timing_path = out.join("timing.json");
    write_file(&timing_path, serde_json::to_string_pretty(&timing).expect("timing serializes") + "\n")?;

    Ok(ExperimentOutcome {
        report,
        logs,
        artifacts: RunArtifacts {
            output_dir: out.clone(),
            csv_logs,
            checkpoints,
            report: report_path,
            timing: timing_path,
            config_snapshot: config_path,
        },
    })
}
