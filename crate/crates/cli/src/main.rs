//! `orl`: dataset generation, training sweeps, profiling and curve reports.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O or file-format error,
//! 3 numeric failure in every seed.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use orl_core::agent::PAPER_HIDDEN;
use orl_core::datasets::{compute_normalization, load_dataset, mix_datasets, save_dataset, DatasetTier, OfflineDataset, DEFAULT_NORM_EPSILON};
use orl_core::envs::EnvSpec;
use orl_core::runner::{
    default_output_dir, load_curve_report, prepare_dataset, profile_training, resolve_dataset, run_experiment, DatasetSource, ExperimentConfig, PAPER_EVAL_EVERY,
    PAPER_TOTAL_STEPS,
};
use orl_core::OrlError;

#[derive(Parser)]
#[command(name = "orl", version, about = "Offline RL laboratory: TD3+BC on small control tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset with a scripted behavior policy.
    GenData(GenDataArgs),
    /// Mix two datasets of the same environment half and half.
    MixData(MixDataArgs),
    /// Train and evaluate one or more seeds.
    Train(TrainArgs),
    /// Time training steps of TD3+BC, TD3-only and BC-only.
    Profile(ProfileArgs),
    /// Aggregate run CSVs into learning curves and a stability table.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    env: String,
    #[arg(long)]
    tier: DatasetTier,
    #[arg(long, default_value_t = 100_000)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; defaults to `<output dir>/<env>_<tier>_<size>_s<seed>.orld`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MixDataArgs {
    #[arg(long)]
    first: PathBuf,
    #[arg(long)]
    second: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Dataset selection shared by `train` and `profile`.
#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    env: Option<String>,
    /// Existing dataset file; otherwise one is generated from tier/size/seed.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    tier: Option<DatasetTier>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    data_seed: Option<u64>,
}

/// Learner switches shared by `train` and `profile`.
#[derive(Args)]
struct AgentArgs {
    /// Drop the behavior-cloning term (TD3 with the λ-scaled Q term).
    #[arg(long)]
    no_bc: bool,
    /// Drop the Q term (pure behavior cloning; critics are not trained).
    #[arg(long)]
    no_q: bool,
    /// Train on raw states.
    #[arg(long)]
    no_norm: bool,
    #[arg(long)]
    alpha: Option<f64>,
    /// 256-unit hidden layers, 1M steps, evaluation every 5000 steps.
    #[arg(long)]
    paper_parity: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// TOML experiment config; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    agent: AgentArgs,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    eval_every: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Comma-separated training seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Seeds trained concurrently.
    #[arg(long)]
    jobs: Option<usize>,
    /// Run directory; defaults to $ORL_OUTPUT_DIR or `runs`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    agent: AgentArgs,
    #[arg(long, default_value_t = 10_000)]
    steps: u64,
    #[arg(long, default_value_t = 20)]
    blocks: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Timing JSON path; defaults to `<output dir>/profile.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run CSV logs, one per seed.
    #[arg(required = true)]
    logs: Vec<PathBuf>,
    /// Directory for `curves.csv`, `stability.csv` and `summary.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &OrlError) -> u8 {
    match e {
        OrlError::Io { .. } | OrlError::Format { .. } | OrlError::Version(_) => 2,
        OrlError::Numeric { .. } => 3,
        _ => 1,
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OrlError + '_ {
    move |source| OrlError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), OrlError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

fn print_dataset_summary(d: &OfflineDataset, spec: &EnvSpec) {
    let returns = d.episode_returns(spec.horizon);
    let mean = returns.iter().sum::<f64>() / returns.len().max(1) as f64;
    println!("env {} tier {} size {}", d.env_name(), d.tier(), d.len());
    println!("episodes {} mean return {mean:.4}", returns.len());
    let stats = compute_normalization(d, DEFAULT_NORM_EPSILON);
    for (i, (m, s)) in stats.mu.iter().zip(&stats.sigma).enumerate() {
        println!("feature {i}: mu {m:.6} sigma {s:.6}");
    }
}

fn gen_data(args: GenDataArgs) -> Result<u8, OrlError> {
    let spec = EnvSpec::lookup(&args.env)?;
    let source = DatasetSource {
        path: None,
        tier: args.tier,
        size: args.size,
        seed: args.seed,
    };
    let d = resolve_dataset(&spec, &source)?;
    let out = args
        .out
        .unwrap_or_else(|| default_output_dir().join(format!("{}_{}_{}_s{}.orld", spec.name(), args.tier, args.size, args.seed)));
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    save_dataset(&d, &out)?;
    print_dataset_summary(&d, &spec);
    println!("wrote {}", out.display());
    Ok(0)
}

fn mix_data(args: MixDataArgs) -> Result<u8, OrlError> {
    let a = load_dataset(&args.first)?;
    let b = load_dataset(&args.second)?;
    let spec = EnvSpec::lookup(a.env_name())?;
    let mixed = mix_datasets(&a, &b, args.seed)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    save_dataset(&mixed, &args.out)?;
    print_dataset_summary(&mixed, &spec);
    println!("wrote {}", args.out.display());
    Ok(0)
}

/// Config file (or defaults), then `--paper-parity`, then individual flags.
fn base_config(config: Option<&Path>, data: DataArgs, agent: &AgentArgs) -> Result<ExperimentConfig, OrlError> {
    let mut cfg = match config {
        Some(path) => ExperimentConfig::from_toml_file(path)?,
        None => ExperimentConfig::default(),
    };
    if agent.paper_parity {
        cfg.total_steps = PAPER_TOTAL_STEPS;
        cfg.eval_every = PAPER_EVAL_EVERY;
        cfg.agent.hidden_sizes = PAPER_HIDDEN.to_vec();
    }
    if let Some(env) = data.env {
        cfg.env = env;
    }
    if let Some(path) = data.dataset {
        cfg.dataset.path = Some(path);
    }
    if let Some(tier) = data.tier {
        cfg.dataset.tier = tier;
    }
    if let Some(size) = data.size {
        cfg.dataset.size = size;
    }
    if let Some(seed) = data.data_seed {
        cfg.dataset.seed = seed;
    }
    if agent.no_bc {
        cfg.agent.use_bc_term = false;
    }
    if agent.no_q {
        cfg.agent.use_q_term = false;
    }
    if agent.no_norm {
        cfg.agent.use_state_norm = false;
    }
    if let Some(alpha) = agent.alpha {
        cfg.agent.alpha = alpha;
    }
    Ok(cfg)
}

fn train(args: TrainArgs) -> Result<u8, OrlError> {
    let mut cfg = base_config(args.config.as_deref(), args.data, &args.agent)?;
    if let Some(v) = args.steps {
        cfg.total_steps = v;
    }
    if let Some(v) = args.eval_every {
        cfg.eval_every = v;
    }
    if let Some(v) = args.episodes {
        cfg.episodes_per_eval = v;
    }
    if let Some(v) = args.seeds {
        cfg.seeds = v;
    }
    if let Some(v) = args.jobs {
        cfg.jobs = v;
    }
    if let Some(v) = args.out {
        cfg.output_dir = v;
    }
    let outcome = run_experiment(&cfg)?;
    for f in &outcome.report.failed_seeds {
        eprintln!("seed {} failed: {}", f.seed, f.error);
    }
    match &outcome.report.aggregate {
        Some(agg) => {
            for s in &agg.seeds {
                println!("seed {} final {:.2}", s.seed, s.final_performance);
            }
            println!("final performance {:.2} ± {:.2} over {} seeds", agg.mean, agg.std, agg.seeds.len());
        }
        None => eprintln!("every seed failed"),
    }
    println!("wrote {}", outcome.artifacts.output_dir.display());
    Ok(if outcome.all_failed() { 3 } else { 0 })
}

fn profile(args: ProfileArgs) -> Result<u8, OrlError> {
    let cfg = base_config(args.config.as_deref(), args.data, &args.agent)?;
    cfg.agent.validate()?;
    let spec = EnvSpec::lookup(&cfg.env)?;
    let raw = resolve_dataset(&spec, &cfg.dataset)?;
    let data = prepare_dataset(&raw, cfg.agent.use_state_norm)?;
    let report = profile_training(&spec, &data.train, &cfg.agent, args.steps, args.blocks, args.seed)?;
    for (e, rel) in report.entries.iter().zip(&report.relative_to_first_percent) {
        println!("{:<8} {:>10.2} us/step  {:+.2}%", e.name, e.per_step_seconds * 1e6, rel);
    }
    let out = args.out.unwrap_or_else(|| cfg.output_dir.join("profile.json"));
    write(&out, serde_json::to_string_pretty(&report).expect("profile serializes") + "\n")?;
    println!("wrote {}", out.display());
    Ok(0)
}

fn report(args: ReportArgs) -> Result<u8, OrlError> {
    let rep = load_curve_report(&args.logs)?;
    let out = args.out.unwrap_or_else(default_output_dir);
    write(&out.join("curves.csv"), rep.curves_csv())?;
    write(&out.join("stability.csv"), rep.stability_csv())?;
    write(&out.join("summary.json"), serde_json::to_string_pretty(&rep).expect("report serializes") + "\n")?;
    if let (Some(m), Some(s)) = (rep.final_mean, rep.final_std) {
        println!("final performance {m:.2} ± {s:.2} over {} logs", rep.stability.len());
    }
    println!("wrote {}", out.display());
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::MixData(a) => mix_data(a),
        Command::Train(a) => train(a),
        Command::Profile(a) => profile(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
