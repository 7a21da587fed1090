use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use ppns_cli::experiment::{run_experiment, DatasetFormat, ExperimentSpec, Mode};
use ppns_core::selection::Method;
use ppns_core::Error;

/// Neighbourhood-based collaborative filtering experiments with
/// privacy-preserving neighbour selection (kNN, nPNS, PNCF, PPNS).
///
/// Without --attack-m the harness measures leave-one-out prediction MAE over
/// seeded target draws; with it, the kNN-attack simulator measures disclosure
/// instead. Reports are CSV plus gnuplot-ready `.dat` curves, and identical
/// invocations produce byte-identical files.
#[derive(Parser, Debug)]
#[command(name = "ppns", version, disable_help_subcommand = true)]
struct Cli {
    /// Dataset path; with `--format synth`, a generator seed or `default`
    #[arg(long)]
    dataset: String,

    /// Input format
    #[arg(long, value_enum, default_value = "movielens")]
    format: FormatArg,

    /// Filtering axis; `item` transposes the matrix
    #[arg(long, value_enum, default_value = "user")]
    mode: ModeArg,

    /// Selection strategies (comma-separated: knn,npns,pncf,ppns)
    #[arg(long, value_delimiter = ',', required = true)]
    method: Vec<String>,

    /// Neighbour-count grid
    #[arg(long, value_delimiter = ',', default_value = "100")]
    k: Vec<usize>,

    /// Privacy-budget grid
    #[arg(long, value_delimiter = ',', default_value = "1")]
    epsilon: Vec<f64>,

    /// Security-level grid (partitions covered)
    #[arg(long, value_delimiter = ',', default_value = "1")]
    beta: Vec<usize>,

    /// Attacker-knowledge grid; enables the attack experiment
    #[arg(long, value_delimiter = ',')]
    attack_m: Vec<usize>,

    /// PNCF truncation confidence for the formula lambda
    #[arg(long, default_value_t = 0.5)]
    rho: f64,

    /// How PNCF picks its truncation width
    #[arg(long, value_enum, default_value = "attack")]
    lambda_mode: LambdaArg,

    /// PNCF similarity-noise scale (default: 2*rs/epsilon; 0 disables)
    #[arg(long)]
    pncf_laplace_scale: Option<f64>,

    /// Seed replicas (accuracy) or attack rounds per target (attack)
    #[arg(long, default_value_t = 5)]
    trials: usize,

    /// Master seed; everything derives from it
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output directory for reports
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Movielens,
    Csv,
    Synth,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    User,
    Item,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LambdaArg {
    Attack,
    Formula,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io(_) | Error::Csv(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn run(cli: Cli) -> ppns_core::Result<()> {
    let methods = cli
        .method
        .iter()
        .map(|s| Method::parse(s))
        .collect::<ppns_core::Result<Vec<Method>>>()?;
    let spec = ExperimentSpec {
        dataset: cli.dataset,
        format: match cli.format {
            FormatArg::Movielens => DatasetFormat::Movielens,
            FormatArg::Csv => DatasetFormat::Csv,
            FormatArg::Synth => DatasetFormat::Synth,
        },
        mode: match cli.mode {
            ModeArg::User => Mode::User,
            ModeArg::Item => Mode::Item,
        },
        methods,
        k_grid: cli.k,
        epsilon_grid: cli.epsilon,
        beta_grid: cli.beta,
        m_grid: cli.attack_m,
        rho: cli.rho,
        formula_lambda: matches!(cli.lambda_mode, LambdaArg::Formula),
        pncf_laplace_scale: cli.pncf_laplace_scale,
        trials: cli.trials,
        seed: cli.seed,
        out_dir: cli.out,
    };
    let outcome = run_experiment(&spec)?;
    for file in &outcome.files {
        println!("{}", file.display());
    }
    Ok(())
}
