//! `clpu`: command-line front end for cold-load-pick-up estimation.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use clpu_core::harness::{Method, RefreshPolicy};
use clpu_core::order_select::SearchMethod;

use crate::config::{Config, ConfigError};

#[derive(Debug, Parser)]
#[command(name = "clpu", version, about = "Cold load pick-up estimation from smart-meter data")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true, env = "CLPU_CONFIG")]
    config: Option<PathBuf>,
    /// Seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Include wall-clock columns in reports.
    #[arg(long, global = true)]
    timings: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SearchArg {
    Reduced,
    Full,
}

impl From<SearchArg> for SearchMethod {
    fn from(a: SearchArg) -> Self {
        match a {
            SearchArg::Reduced => SearchMethod::Reduced,
            SearchArg::Full => SearchMethod::Full,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PolicyArg {
    WeeklyOrDivergence,
    FixedOrder,
}

impl From<PolicyArg> for RefreshPolicy {
    fn from(a: PolicyArg) -> Self {
        match a {
            PolicyArg::WeeklyOrDivergence => RefreshPolicy::WeeklyOrDivergence,
            PolicyArg::FixedOrder => RefreshPolicy::FixedOrder,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Correlograms, ADF test and differencing order of a meter file.
    Analyze {
        input: PathBuf,
        #[arg(long, default_value_t = 40)]
        max_lag: usize,
    },
    /// Identify the ARIMA order by grid search.
    SelectOrder {
        input: PathBuf,
        #[arg(long, value_enum)]
        method: Option<SearchArg>,
        /// Only use data before this instant.
        #[arg(long)]
        t0: Option<String>,
    },
    /// Fit and persist the energy and peak models.
    Fit {
        input: PathBuf,
        /// Order as `p,d,q`; searched when neither this nor --order-file is given.
        #[arg(long, conflicts_with = "order_file")]
        order: Option<String>,
        /// `order.json` written by select-order.
        #[arg(long)]
        order_file: Option<PathBuf>,
        #[arg(long)]
        t0: Option<String>,
    },
    /// Per-interval and cumulative energy forecast from a persisted model.
    Forecast {
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        t0: Option<String>,
        /// Largest horizon in intervals.
        #[arg(long)]
        r_max: Option<usize>,
    },
    /// CLPU peak, foregone energy and duration for outages starting at t0.
    Clpu {
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        peak_model: PathBuf,
        #[arg(long)]
        t0: Option<String>,
        #[arg(long)]
        r_max: Option<usize>,
    },
    /// Rolling-origin backtest of one or more meter files.
    Backtest {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Comma-separated methods.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        /// Outdoor temperature CSV (`timestamp,temperature_c`) for ARIMAX.
        #[arg(long)]
        temperatures: Option<PathBuf>,
        #[arg(long)]
        max_origins: Option<usize>,
    },
    /// Method comparison and reduced-versus-full search comparison.
    Compare {
        /// Meter files; a synthetic suite is generated from the seed when empty.
        inputs: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        #[arg(long)]
        max_origins: Option<usize>,
        /// Skip the search comparison.
        #[arg(long)]
        no_search: bool,
    },
    /// Simulate the thermal house suite and optionally validate forecasts against it.
    Simulate {
        #[arg(long)]
        validate: bool,
    },
}

/// Bad flag values or flag combinations.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    use clpu_core::Error as E;
    if err.is::<ConfigError>() || err.is::<UsageError>() {
        return 1;
    }
    match err.downcast_ref::<E>() {
        Some(E::NoConvergedCell) => 3,
        Some(E::StaleHistory { .. } | E::ZeroPeak { .. } | E::SeedLengthMismatch { .. }) => 4,
        Some(E::InvalidConfig(_) | E::InvalidHorizon { .. } | E::OrderOutOfBounds { .. } | E::InvalidParams(_)) => 1,
        _ => 2,
    }
}

fn load_config(g: &GlobalArgs) -> anyhow::Result<Config> {
    let mut cfg = Config::load(g.config.as_deref(), std::env::vars())?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = g.jobs {
        cfg.jobs = jobs;
    }
    if let Some(out) = &g.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = load_config(&cli.global)?;
    if cfg.jobs != 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build_global()
            .map_err(|e| UsageError(format!("--jobs: {e}")))?;
    }
    let ctx = commands::Context {
        cfg,
        timings: cli.global.timings,
    };
    match cli.command {
        Command::Analyze { input, max_lag } => commands::analyze(&ctx, &input, max_lag),
        Command::SelectOrder { input, method, t0 } => {
            commands::select_order(&ctx, &input, method.map(Into::into), t0.as_deref())
        }
        Command::Fit {
            input,
            order,
            order_file,
            t0,
        } => commands::fit(&ctx, &input, order.as_deref(), order_file.as_deref(), t0.as_deref()),
        Command::Forecast { input, model, t0, r_max } => {
            commands::forecast(&ctx, &input, &model, t0.as_deref(), r_max)
        }
        Command::Clpu {
            input,
            model,
            peak_model,
            t0,
            r_max,
        } => commands::clpu(&ctx, &input, &model, &peak_model, t0.as_deref(), r_max),
        Command::Backtest {
            inputs,
            methods,
            policy,
            temperatures,
            max_origins,
        } => commands::backtest(
            &ctx,
            &inputs,
            methods,
            policy.map(Into::into),
            temperatures.as_deref(),
            max_origins,
        ),
        Command::Compare {
            inputs,
            methods,
            max_origins,
            no_search,
        } => commands::compare(&ctx, &inputs, methods, max_origins, !no_search),
        Command::Simulate { validate } => commands::simulate(&ctx, validate),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(exit_code(&e))
        }
    }
}
