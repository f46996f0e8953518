//! Experiment command line: dataset generation, training, evaluation,
//! timing, and reproducible end-to-end runs.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use nbd::checkpoint::load_checkpoint;
use nbd::config::ExperimentConfig;
use nbd::divergence::{learned_divergence, learned_divergence_batch, learned_pairwise};
use nbd::experiment::{self, ExperimentPaths};
use nbd::Mat;

mod builtin;

#[derive(Parser)]
#[command(name = "nbd", version, about = "Learned Bregman divergence experiments")]
struct Cli {
    /// Worker threads (overrides the NBD_THREADS environment variable).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset (JSON-lines plus manifest) from a config.
    Generate {
        /// Experiment config (TOML). Defaults to the named builtin when
        /// --task matches one.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Builtin experiment name to use when no config file is given.
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Desk-scale sizes (default on; use =false for full scale).
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        desk_scale: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a generated dataset.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        desk_scale: bool,
        /// Directory holding the generated dataset.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset; writes metrics CSV.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        desk_scale: bool,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time single-pair, batched, and pairwise divergence evaluation.
    Bench {
        /// Comma-separated batch sizes, e.g. 10,100,1000.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        /// Feature dimension of the synthetic inputs.
        #[arg(long, default_value_t = 20)]
        dim: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a named experiment end to end from its stored config.
    Reproduce {
        /// Experiment name; see --list.
        #[arg(long)]
        name: Option<String>,
        /// List available experiment names.
        #[arg(long)]
        list: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<nbd::NbdError> for CliError {
    fn from(e: nbd::NbdError) -> Self {
        CliError::Runtime(e.into())
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn init_threads(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var("NBD_THREADS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn load_config(
    config: &Option<PathBuf>,
    task: &Option<String>,
    seed: Option<u64>,
    desk_scale: bool,
) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match (config, task) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            ExperimentConfig::from_toml(&text)
                .map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?
        }
        (None, Some(name)) => builtin::config_by_name(name)
            .ok_or_else(|| usage(format!("unknown experiment `{name}`; try `reproduce --list`")))?,
        (None, None) => {
            return Err(usage("either --config or --task is required"));
        }
    };
    // Flags beat file values.
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.desk_scale = desk_scale;
    cfg.validate().map_err(|e| usage(format!("invalid config: {e}")))?;
    Ok(cfg)
}

fn cmd_generate(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let data = experiment::run_generate(cfg, out)?;
    println!(
        "generated {} records for `{}` into {}",
        data.record_count(),
        cfg.dataset_name(),
        out.display()
    );
    Ok(())
}

fn cmd_train(cfg: &ExperimentConfig, data: &Path, out: &Path) -> Result<(), CliError> {
    if !data.exists() {
        return Err(usage(format!("dataset path {} does not exist", data.display())));
    }
    let trace = experiment::run_train(cfg, data, out)?;
    match trace.final_loss("train") {
        Some(loss) => println!("trained `{}`: final train loss {loss}", cfg.dataset_name()),
        None => println!("model `{}` has no trainable parameters; checkpoint written", cfg.model.model_name()),
    }
    println!("checkpoint: {}", ExperimentPaths::new(out).checkpoint().display());
    Ok(())
}

fn cmd_eval(cfg: &ExperimentConfig, checkpoint: &Path, data: &Path, out: &Path) -> Result<(), CliError> {
    if !checkpoint.exists() {
        return Err(usage(format!("checkpoint {} does not exist", checkpoint.display())));
    }
    if !data.exists() {
        return Err(usage(format!("dataset path {} does not exist", data.display())));
    }
    let report = experiment::run_eval(cfg, checkpoint, data, out)?;
    println!("{}", report.summary);
    Ok(())
}

fn cmd_bench(sizes: &[usize], dim: usize, out: Option<&Path>) -> Result<(), CliError> {
    if sizes.is_empty() {
        return Err(usage("--sizes must list at least one batch size"));
    }
    use nbd::divergence::{DivergenceModel, DivergenceVariant, ModelGenerator};
    use nbd::encoder::EncoderParams;
    use nbd::icnn::{init_icnn, IcnnConfig};
    let icnn = init_icnn(&IcnnConfig::with_widths(dim, vec![128, 128]), 1)
        .map_err(|e| CliError::Runtime(e.into()))?;
    let model = DivergenceModel::new(
        EncoderParams::identity(dim),
        ModelGenerator::Icnn(icnn),
        DivergenceVariant::Plain,
    )
    .map_err(|e| CliError::Runtime(e.into()))?;

    let mut csv = String::from("size,single_s,batched_s,pairwise_s\n");
    for &n in sizes {
        let mut x = Mat::zeros(n, dim);
        let mut y = Mat::zeros(n, dim);
        // Deterministic synthetic inputs; no dataset needed for timing.
        for i in 0..n {
            for j in 0..dim {
                x[(i, j)] = ((i * 31 + j * 7) % 17) as f64 / 17.0 - 0.5;
                y[(i, j)] = ((i * 13 + j * 11) % 19) as f64 / 19.0 - 0.5;
            }
        }
        let t0 = Instant::now();
        for i in 0..n {
            let _ = learned_divergence(&model, x.row(i), y.row(i))?;
        }
        let single = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let _ = learned_divergence_batch(&model, &x, &y)?;
        let batched = t1.elapsed().as_secs_f64();
        let t2 = Instant::now();
        let _ = learned_pairwise(&model, &x, &y)?;
        let pairwise = t2.elapsed().as_secs_f64();
        let row = format!("{n},{single},{batched},{pairwise}");
        println!("{row}");
        csv.push_str(&row);
        csv.push('\n');
    }
    if let Some(path) = out {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::Runtime(e.into()))?;
        }
        std::fs::write(path, csv).map_err(|e| CliError::Runtime(e.into()))?;
    }
    Ok(())
}

fn cmd_reproduce(
    name: Option<&str>,
    list: bool,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    if list {
        for n in builtin::names() {
            println!("{n}");
        }
        return Ok(());
    }
    let name = name.ok_or_else(|| usage("--name is required (or use --list)"))?;
    let mut cfg = builtin::config_by_name(name)
        .ok_or_else(|| usage(format!("unknown experiment `{name}`; try --list")))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out = out.ok_or_else(|| usage("--out is required"))?;
    let (trace, report) = experiment::run_pipeline(&cfg, out)?;
    if let Some(loss) = trace.final_loss("train") {
        println!("final train loss {loss}");
    }
    println!("{}", report.summary);
    println!("metrics: {}", ExperimentPaths::new(out).metrics().display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Generate { config, task, seed, desk_scale, out } => {
            let cfg = load_config(config, task, *seed, *desk_scale)?;
            cmd_generate(&cfg, out)
        }
        Command::Train { config, task, seed, desk_scale, data, out } => {
            let cfg = load_config(config, task, *seed, *desk_scale)?;
            cmd_train(&cfg, data, out)
        }
        Command::Eval { config, task, seed, desk_scale, checkpoint, data, out } => {
            let cfg = load_config(config, task, *seed, *desk_scale)?;
            // The checkpoint must agree with the requested model family.
            let _ = load_checkpoint(checkpoint)
                .map_err(|e| usage(format!("cannot load checkpoint: {e}")))?;
            cmd_eval(&cfg, checkpoint, data, out)
        }
        Command::Bench { sizes, dim, out } => cmd_bench(sizes, *dim, out.as_deref()),
        Command::Reproduce { name, list, seed, out } => {
            cmd_reproduce(name.as_deref(), *list, *seed, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads(cli.threads);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
