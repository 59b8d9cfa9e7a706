//! Command-line entry point: dataset generation, complementary-label
//! generation, prior estimation, training, the evaluation grid, and the
//! bundled verification suite.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use conu::data::{
    builtin_transition, gen_complementary, make_gaussian_mixture, ClassPriors, TransitionSpec,
};
use conu::error::{Error, Result};
use conu::experiment::{parse_arch, write_default_config, ExperimentConfig};
use conu::io::{
    read_complementary_csv, read_ordinary_csv, read_priors_csv, write_complementary_csv,
    write_curves_csv, write_ordinary_csv, write_priors_csv,
};
use conu::model::ModelConfig;
use conu::priors::{estimate_priors, BbeConfig, MixtureSource};
use conu::reproduce::run_suite;
use conu::train::{train_conu, train_supervised, Method, TrainConfig};

#[derive(Parser)]
#[command(
    name = "conu",
    about = "Learn multi-class classifiers from complementary labels",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Gaussian-mixture dataset and write it as an ordinary CSV.
    GenData(GenDataArgs),
    /// Attach complementary labels to an ordinary CSV.
    GenCl(GenClArgs),
    /// Estimate class priors from a complementary CSV.
    EstimatePriors(EstimatePriorsArgs),
    /// Train a scorer and write a checkpoint plus per-epoch curves.
    Train(TrainArgs),
    /// Run the method x setting grid of an experiment config and write the
    /// accuracy tables.
    Eval(EvalArgs),
    /// Run the verification suite and write a pass/fail summary.
    Reproduce(ReproduceArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Number of classes.
    #[arg(long, default_value_t = 4)]
    q: usize,
    /// Examples per class.
    #[arg(long, default_value_t = 1000)]
    n_per_class: usize,
    /// Feature dimension.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Distance of each class center from the origin.
    #[arg(long, default_value_t = 6.0)]
    separation: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenClArgs {
    /// Ordinary CSV to label.
    #[arg(long)]
    data: PathBuf,
    /// Transition spec: uniform, biased-a, biased-b, scar-a, scar-b,
    /// scar-independent, or scar-single.
    #[arg(long)]
    spec: String,
    /// Comma-separated per-class flag probabilities for the scar-independent
    /// and scar-single specs.
    #[arg(long)]
    flag_probs: Option<String>,
    /// Class count override when the file may not mention every class.
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimatePriorsArgs {
    /// Complementary CSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 0.8)]
    split_fraction: f64,
    /// Mixture sample per class: "unlabeled" rows or "all" rows.
    #[arg(long, default_value = "unlabeled")]
    mixture: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output priors CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Training data: complementary CSV, or ordinary CSV with
    /// --risk supervised.
    #[arg(long)]
    data: PathBuf,
    /// Ordinary CSV scored for the per-epoch test accuracy.
    #[arg(long)]
    test: PathBuf,
    /// conu (abs correction), conu-relu, ure (no correction), or supervised.
    #[arg(long, default_value = "conu")]
    risk: String,
    /// Priors CSV, or "estimate" to run prior estimation first. Required
    /// unless --risk supervised.
    #[arg(long)]
    priors: Option<String>,
    /// Perturb the priors with this sigma before training.
    #[arg(long)]
    corrupt_sigma: Option<f64>,
    #[arg(long)]
    classes: Option<usize>,
    /// Hidden widths, e.g. "300,300,300"; "none" for the linear model.
    #[arg(long, default_value = "300,300,300")]
    hidden: String,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1e-5)]
    weight_decay: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Checkpoint path.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Per-epoch curves CSV path.
    #[arg(long)]
    curves: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Experiment config file (key=value). Omit to use defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set train.epochs=50. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Write the default config to this path and exit.
    #[arg(long)]
    write_default: Option<PathBuf>,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Run a single criterion: identity, unbiasedness, dominance,
    /// gradcheck, bbe, priors, figure2, learning, or sensitivity.
    #[arg(long)]
    suite: Option<String>,
    /// Write the pass/fail summary to this file as well as stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::GenData(args) => {
            let ds = make_gaussian_mixture(args.q, args.n_per_class, args.dim, args.separation, args.seed)?;
            write_ordinary_csv(&args.out, &ds)?;
            println!("wrote {} rows to {}", ds.len(), args.out.display());
        }
        Command::GenCl(args) => {
            let ds = read_ordinary_csv(&args.data, args.classes)?;
            let spec = resolve_spec(&args.spec, args.flag_probs.as_deref(), &ds.empirical_priors())?;
            let cds = gen_complementary(&ds, &spec, args.seed)?;
            write_complementary_csv(&args.out, &cds)?;
            println!("wrote {} rows to {}", cds.len(), args.out.display());
        }
        Command::EstimatePriors(args) => {
            let cds = read_complementary_csv(&args.data, args.classes)?;
            let config = BbeConfig {
                gamma: args.gamma,
                delta: args.delta,
                split_fraction: args.split_fraction,
                mixture: match args.mixture.as_str() {
                    "unlabeled" => MixtureSource::Unlabeled,
                    "all" => MixtureSource::All,
                    other => {
                        return Err(Error::InvalidArgument(format!(
                            "mixture must be 'unlabeled' or 'all', got '{other}'"
                        )))
                    }
                },
                ..BbeConfig::default()
            };
            let priors = estimate_priors(&cds, &config, args.seed)?;
            write_priors_csv(&args.out, &priors)?;
            println!("wrote priors for {} classes to {}", priors.class_count(), args.out.display());
        }
        Command::Train(args) => run_train(args)?,
        Command::Eval(args) => {
            if let Some(path) = &args.write_default {
                write_default_config(path)?;
                println!("wrote default config to {}", path.display());
                return Ok(ExitCode::SUCCESS);
            }
            let overrides: Vec<(String, String)> = args
                .overrides
                .iter()
                .map(|raw| {
                    raw.split_once('=')
                        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                        .ok_or_else(|| {
                            Error::InvalidArgument(format!("--set expects key=value, got '{raw}'"))
                        })
                })
                .collect::<Result<_>>()?;
            let config = match &args.config {
                Some(path) => ExperimentConfig::from_file(path, &overrides)?,
                None => ExperimentConfig::from_pairs(&overrides)?,
            };
            config.run()?;
            println!("wrote results.csv and summary.csv to {}", config.out_dir.display());
        }
        Command::Reproduce(args) => {
            let results = run_suite(args.suite.as_deref())?;
            let mut lines = Vec::new();
            for result in &results {
                println!("{result}");
                lines.push(result.to_string());
            }
            let all_passed = results.iter().all(|r| r.passed);
            let verdict = format!(
                "{}/{} criteria passed",
                results.iter().filter(|r| r.passed).count(),
                results.len()
            );
            println!("{verdict}");
            lines.push(verdict);
            if let Some(path) = &args.out {
                fs::write(path, lines.join("\n") + "\n")?;
            }
            if !all_passed {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn resolve_spec(
    name: &str,
    flag_probs: Option<&str>,
    empirical_priors: &[f64],
) -> Result<TransitionSpec> {
    let parse_probs = || -> Result<Vec<f64>> {
        let list = flag_probs.ok_or_else(|| {
            Error::InvalidArgument(format!("--spec {name} needs --flag-probs"))
        })?;
        list.split(',')
            .map(|v| {
                v.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidArgument(format!("flag probability '{v}' is not a number"))
                })
            })
            .collect()
    };
    match name {
        "scar-independent" => TransitionSpec::scar_independent(parse_probs()?),
        "scar-single" => TransitionSpec::scar_single(parse_probs()?),
        other => builtin_transition(other, empirical_priors),
    }
}

fn run_train(args: TrainArgs) -> Result<()> {
    let method: Method = args.risk.parse()?;
    let test = read_ordinary_csv(&args.test, args.classes)?;
    let config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        lr: args.lr,
        weight_decay: args.weight_decay,
        seed: args.seed,
        ..TrainConfig::default()
    };

    let (params, report) = match method {
        Method::Supervised => {
            let ds = read_ordinary_csv(&args.data, args.classes.or(Some(test.class_count())))?;
            let model = ModelConfig {
                arch: parse_arch(&args.hidden)?,
                input_dim: ds.dim(),
                output_dim: ds.class_count(),
            };
            train_supervised(&ds, &model, &config, &test)?
        }
        Method::Nu(correction) => {
            let cds = read_complementary_csv(&args.data, args.classes.or(Some(test.class_count())))?;
            let priors = match args.priors.as_deref() {
                Some("estimate") => estimate_priors(&cds, &BbeConfig::default(), args.seed)?,
                Some(path) => read_priors_csv(&PathBuf::from(path))?,
                None => {
                    return Err(Error::InvalidArgument(
                        "--priors <csv|estimate> is required unless --risk supervised".into(),
                    ))
                }
            };
            let priors: ClassPriors = match args.corrupt_sigma {
                Some(sigma) => conu::data::corrupt_priors(&priors, sigma, args.seed)?,
                None => priors,
            };
            let model = ModelConfig {
                arch: parse_arch(&args.hidden)?,
                input_dim: cds.dim(),
                output_dim: cds.class_count(),
            };
            let mut config = config;
            config.correction = correction;
            train_conu(&cds, &priors, &model, &config, &test)?
        }
    };
    params.save(&args.checkpoint)?;
    write_curves_csv(&args.curves, &report)?;
    let final_acc = report.test_acc.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained {} for {} epochs; final test accuracy {final_acc:.4}; wrote {} and {}",
        method.name(),
        args.epochs,
        args.checkpoint.display(),
        args.curves.display()
    );
    Ok(())
}
