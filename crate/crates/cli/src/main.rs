use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Mixed-effects extreme value index regression for clustered heavy-tailed data.
#[derive(Debug, Parser)]
#[command(name = "evtmem", version, about)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "EVTMEM_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum QuadModeArg {
    Agh,
    Laplace,
    Oracle,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OptimizerArg {
    NelderMead,
    Compass,
}

#[derive(Debug, Clone, Args)]
pub struct FitFlags {
    /// Smallest candidate number of exceedances per cluster.
    #[arg(long, default_value_t = 10)]
    pub k_min: usize,
    /// Largest candidate number of exceedances per cluster.
    #[arg(long, default_value_t = 20)]
    pub k_max: usize,
    #[arg(long, value_enum, default_value_t = QuadModeArg::Agh)]
    pub quad_mode: QuadModeArg,
    /// Gauss-Hermite nodes per random-effect dimension.
    #[arg(long, default_value_t = 15)]
    pub quad_nodes: usize,
    #[arg(long, value_enum, default_value_t = OptimizerArg::NelderMead)]
    pub optimizer: OptimizerArg,
    /// Optimizer iteration budget.
    #[arg(long, default_value_t = 2000)]
    pub max_iters: usize,
    /// Center and scale covariates to zero mean and unit sample variance.
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ReportInput {
    /// Fit report written by `evtmem fit`.
    pub report: PathBuf,
    /// The CSV the report was fitted to (or one with the same schema).
    pub input: PathBuf,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Select thresholds and fit the mixed-effects model; writes a JSON report.
    Fit {
        input: PathBuf,
        #[command(flatten)]
        flags: FitFlags,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Per-cluster thresholds chosen from the candidate ladder (CSV).
    Thresholds {
        input: PathBuf,
        #[arg(long, default_value_t = 10)]
        k_min: usize,
        #[arg(long, default_value_t = 20)]
        k_max: usize,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Conditional-mode predictions of the random effects (CSV).
    Predict(ReportInput),
    /// Wald tests for each common slope (CSV).
    Test(ReportInput),
    /// Cluster-wise extreme value index, sorted descending (CSV).
    Evi(ReportInput),
    /// Goodness-of-fit transform and its KS statistic (JSON).
    Gof(ReportInput),
    /// Per-cluster EVI under M1-M4 and their split-half stability (CSV).
    Compare {
        input: PathBuf,
        #[command(flatten)]
        flags: FitFlags,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run a Monte Carlo experiment from a key=value config.
    Simulate {
        config: PathBuf,
        /// Directory for the summary and QQ tables.
        #[arg(long, default_value = "simulate-out")]
        out_dir: PathBuf,
    },
    /// Write a synthetic station-day dataset with known positive slopes.
    GenData {
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 47)]
        clusters: usize,
        /// Days per station.
        #[arg(long, default_value_t = 300)]
        days: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(commands::EXIT_PARSE),
            };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(commands::EXIT_PARSE);
        }
    }
    let result = match cli.command {
        Command::Fit { input, flags, out } => commands::fit(&input, &flags, out),
        Command::Thresholds { input, k_min, k_max, out } => commands::thresholds(&input, k_min, k_max, out),
        Command::Predict(a) => commands::predict(&a),
        Command::Test(a) => commands::test(&a),
        Command::Evi(a) => commands::evi(&a),
        Command::Gof(a) => commands::gof(&a),
        Command::Compare { input, flags, out } => commands::compare(&input, &flags, out),
        Command::Simulate { config, out_dir } => commands::simulate(&config, &out_dir),
        Command::GenData {
            out,
            clusters,
            days,
            seed,
        } => commands::gen_data(&out, clusters, days, seed),
    };
    match result {
        Ok(outcome) => {
            for p in &outcome.paths {
                println!("{}", p.display());
            }
            ExitCode::from(outcome.code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
