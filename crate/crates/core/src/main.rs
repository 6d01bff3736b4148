use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hypersic::adaptation::{generate_datasets, hypernet_train, joint_train, Datasets};
use hypersic::channel::{load_trace, ChannelSource};
use hypersic::checkpoint::{
    load_hyper, load_joint, save_hyper, save_joint, HYPER_FILE, JOINT_FILE,
};
use hypersic::harness::{
    compare_methods, emit_comparison, emit_results, read_json, run_experiment, write_json,
    ExperimentConfig, Method, Models, RESOLVED_CONFIG_FILE,
};
use hypersic::{Error, Result};

const DATASETS_FILE: &str = "datasets.json";
const HYPER_REPORT_FILE: &str = "hyper_training.json";

/// Link-level simulator for DeepSIC receivers adapted by joint training,
/// online training or a modular hypernetwork.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the offline training sets for every user count into OUT/datasets.json.
    GenData(Common),
    /// Train one DeepSIC receiver per user count and write OUT/joint.json.
    TrainJoint(Common),
    /// Train the hypernetwork and write OUT/hypernet.json.
    TrainHyper(Common),
    /// Run one method over T blocks and write results.csv, summary.json and config.resolved.json.
    Simulate(Common),
    /// Run all three methods over identical blocks, one subdirectory per method.
    Compare(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Adaptation method for `simulate`.
    #[arg(long, value_parser = ["joint", "online", "hyper"])]
    method: Option<String>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Channel trace to replay instead of the synthetic channel.
    #[arg(long)]
    trace: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(m) = &self.method {
            cfg.method = m.parse()?;
        }
        if let Some(path) = &self.trace {
            let snr_db = match &cfg.link.channel {
                ChannelSource::Trace { snr_db, .. } => *snr_db,
                ChannelSource::Synthetic => cfg.link.snr.base_db,
            };
            cfg.link.channel = ChannelSource::Trace {
                path: path.clone(),
                snr_db,
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

/// Reuses OUT/datasets.json when present, otherwise generates the sets from the config.
fn datasets(cfg: &ExperimentConfig, out: &Path) -> Result<Datasets> {
    let cached = out.join(DATASETS_FILE);
    if cached.exists() {
        let sets: Datasets = read_json(&cached)?;
        if sets.n == cfg.link.n && sets.k_max == cfg.link.k_max && sets.seed == cfg.seed {
            log::info!("using datasets from {}", cached.display());
            return Ok(sets);
        }
        log::warn!(
            "{} does not match the configuration; regenerating",
            cached.display()
        );
    }
    build_datasets(cfg)
}

fn build_datasets(cfg: &ExperimentConfig) -> Result<Datasets> {
    let trace = match &cfg.link.channel {
        ChannelSource::Trace { path, .. } => Some(load_trace(path, cfg.link.n, cfg.link.k_max)?),
        ChannelSource::Synthetic => None,
    };
    generate_datasets(
        &cfg.link,
        trace.as_deref(),
        &cfg.dataset,
        cfg.seed,
        cfg.exec,
    )
}

fn load_models(cfg: &ExperimentConfig, methods: &[Method]) -> Result<Models> {
    let mut models = Models::default();
    if methods.contains(&Method::Joint) {
        models.joint = Some(load_joint(&cfg.checkpoints.join(JOINT_FILE))?);
    }
    if methods.contains(&Method::Hyper) {
        models.hyper = Some(load_hyper(&cfg.checkpoints.join(HYPER_FILE))?);
    }
    Ok(models)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(args) => {
            let cfg = args.resolve()?;
            create_dir(&args.out)?;
            let sets = build_datasets(&cfg)?;
            write_json(&args.out.join(DATASETS_FILE), &sets)?;
            write_json(&args.out.join(RESOLVED_CONFIG_FILE), &cfg)
        }
        Command::TrainJoint(args) => {
            let cfg = args.resolve()?;
            create_dir(&args.out)?;
            let sets = datasets(&cfg, &args.out)?;
            let bank = joint_train(
                &sets,
                &cfg.link.constellation,
                &cfg.joint_config(),
                cfg.seed,
                cfg.exec,
            )?;
            save_joint(&args.out.join(JOINT_FILE), &bank)?;
            write_json(&args.out.join(RESOLVED_CONFIG_FILE), &cfg)
        }
        Command::TrainHyper(args) => {
            let cfg = args.resolve()?;
            create_dir(&args.out)?;
            let sets = datasets(&cfg, &args.out)?;
            let (params, report) = hypernet_train(
                &sets,
                &cfg.link.constellation,
                &cfg.hyper_config(),
                None,
                cfg.seed,
            )?;
            save_hyper(&args.out.join(HYPER_FILE), &params)?;
            write_json(&args.out.join(HYPER_REPORT_FILE), &report)?;
            write_json(&args.out.join(RESOLVED_CONFIG_FILE), &cfg)
        }
        Command::Simulate(args) => {
            let cfg = args.resolve()?;
            let models = load_models(&cfg, &[cfg.method])?;
            let out = run_experiment(&cfg, cfg.method, &models)?;
            log::info!(
                "{}: aggregate SER {:.4}",
                cfg.method,
                out.summary.aggregate_ser
            );
            emit_results(&out, &cfg, &args.out)
        }
        Command::Compare(args) => {
            let cfg = args.resolve()?;
            let models = load_models(&cfg, &Method::ALL)?;
            let cmp = compare_methods(&cfg, &models)?;
            for s in &cmp.summary.methods {
                log::info!("{}: aggregate SER {:.4}", s.method, s.aggregate_ser);
            }
            create_dir(&args.out)?;
            emit_comparison(&cmp, &cfg, &args.out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
