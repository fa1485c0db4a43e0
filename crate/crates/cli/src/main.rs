use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use volint::harness::report::{write_backtest, write_study};
use volint::harness::{run_backtest, run_simulation_study, BacktestDataset, ModelChoice, ReturnKind, StudyConfig};
use volint::time_domain::EsConfig;

#[derive(Parser)]
#[command(name = "volint", version, about = "Time-domain, state-domain and integrated volatility estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo comparison of the estimators on simulated paths.
    Simulate(SimulateArgs),
    /// One-step-ahead backtest of a `date,value` CSV series.
    Backtest(BacktestArgs),
    /// Print configuration defaults.
    Config(ConfigArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Cir,
    Sv,
    Gbm,
}

impl From<Model> for ModelChoice {
    fn from(m: Model) -> Self {
        match m {
            Model::Cir => ModelChoice::Cir,
            Model::Sv => ModelChoice::Sv,
            Model::Gbm => ModelChoice::Gbm,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Returns {
    Log,
    Difference,
}

/// Overrides shared by both run modes.
#[derive(Args)]
struct Common {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// VaR level of the exceedance ratio.
    #[arg(long)]
    alpha: Option<f64>,
    /// Smoothing parameter of the exponential smoother.
    #[arg(long)]
    lambda: Option<f64>,
    /// Window of the smoother and of the moving average.
    #[arg(long)]
    window: Option<usize>,
    /// Steps between state-domain refits.
    #[arg(long)]
    refit_every: Option<usize>,
    /// Upper fraction trimmed from the reported means.
    #[arg(long)]
    trim: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "cir")]
    model: Model,
    #[arg(long)]
    reps: Option<usize>,
    /// Use the full replication count instead of the desk-scale default.
    #[arg(long)]
    full_scale: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct BacktestArgs {
    /// CSV file with header `date,value`.
    #[arg(long)]
    data: PathBuf,
    /// Number of leading observations that are in-sample.
    #[arg(long, conflicts_with = "in_sample_end")]
    in_sample: Option<usize>,
    /// Last in-sample date (YYYY-MM-DD).
    #[arg(long)]
    in_sample_end: Option<String>,
    #[arg(long, value_enum)]
    returns: Option<Returns>,
    /// Sampling interval in years.
    #[arg(long)]
    delta: Option<f64>,
    /// Fill missing values with the previous value.
    #[arg(long)]
    forward_fill: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ConfigArgs {
    /// Print the defaults as TOML.
    #[arg(long)]
    dump: bool,
    #[arg(long, value_enum)]
    model: Option<Model>,
}

fn base_config(path: Option<&PathBuf>, fallback: StudyConfig) -> Result<StudyConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(StudyConfig::from_toml(&text)?)
        }
        None => Ok(fallback),
    }
}

fn apply_common(cfg: &mut StudyConfig, c: &Common) -> Result<()> {
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(a) = c.alpha {
        cfg.alpha = a;
    }
    let lambda = c.lambda.unwrap_or(cfg.es.lambda);
    let n = c.window.unwrap_or(cfg.es.n);
    cfg.es = EsConfig::new(lambda, n)?;
    if let Some(w) = c.window {
        cfg.hist_window = w;
    }
    if let Some(k) = c.refit_every {
        cfg.state_refit_every = k;
    }
    if let Some(t) = c.trim {
        cfg.trim_upper = t;
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let model: ModelChoice = args.model.into();
    let mut cfg = base_config(args.common.config.as_ref(), StudyConfig::for_model(model))?;
    apply_common(&mut cfg, &args.common)?;
    if args.full_scale {
        cfg = cfg.full_scale();
    }
    if let Some(r) = args.reps {
        cfg.n_reps = r;
    }
    let start = Instant::now();
    let out = run_simulation_study(&cfg)?;
    let paths = write_study(&args.common.out, &out)?;
    print!("{}", out.report.to_text_table());
    eprintln!(
        "{} replications ({} failed) in {:.1}s",
        cfg.n_reps,
        out.failures.len(),
        start.elapsed().as_secs_f64()
    );
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn backtest(args: BacktestArgs) -> Result<()> {
    let mut cfg = base_config(args.common.config.as_ref(), StudyConfig::backtest_default())?;
    apply_common(&mut cfg, &args.common)?;
    if let Some(r) = args.returns {
        cfg.return_kind = match r {
            Returns::Log => ReturnKind::Log,
            Returns::Difference => ReturnKind::Difference,
        };
    }
    if let Some(d) = args.delta {
        cfg.delta = d;
    }
    cfg.forward_fill |= args.forward_fill;
    let name = args
        .data
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "series".into());
    let file = fs::File::open(&args.data).with_context(|| format!("opening {}", args.data.display()))?;
    let mut data = BacktestDataset::from_csv(name.clone(), file, cfg.forward_fill)?;
    if let Some(n) = args.in_sample {
        data = data.with_in_sample_len(n)?;
    } else if let Some(d) = &args.in_sample_end {
        data = data.with_in_sample_end_iso(d)?;
    } else if cfg.in_sample_len > 0 {
        data = data.with_in_sample_len(cfg.in_sample_len)?;
    }
    let out = run_backtest(&data, &cfg)?;
    let ids: Vec<String> = cfg.estimators.iter().map(|e| e.label().to_string()).collect();
    let paths = write_backtest(&args.common.out, &name, &ids, &out)?;
    print!("{}", out.report.to_text_table());
    if !out.filled_rows.is_empty() {
        eprintln!("forward-filled rows: {:?}", out.filled_rows);
    }
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Backtest(a) => backtest(a),
        Command::Config(a) => {
            if !a.dump {
                bail!("nothing to do; pass --dump");
            }
            let cfg = match a.model {
                Some(m) => StudyConfig::for_model(m.into()),
                None => StudyConfig::cir_weekly(),
            };
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}
