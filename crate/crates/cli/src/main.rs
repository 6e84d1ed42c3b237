use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ntm::infotheory::{estimate_mi, practical_gap, DEFAULT_BETA_RANGE};
use ntm::{
    avg_noise_rate_from_r, build_transition, build_weights, estimate_detailed, estimation_error,
    fit_whitening, inject_noise, kl_order_gap, load_dataset, save_dataset, train_linear,
    Activation, CsvSchema, Dataset, EstimatorConfig, FDivergenceKind, NoiseRatePair, NoiseScheme,
    Report, TrainConfig, TransitionMatrix, Variant,
};

#[derive(Parser)]
#[command(
    name = "ntm",
    version,
    about = "Label-noise transition matrix estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate T from a noisy-labelled dataset and write a JSON report.
    Estimate(EstimateArgs),
    /// Per-dimension f-MI against the noisy labels, as `dim,mi,weight` CSV.
    Mi(MiArgs),
    /// Order-preservation gap and practical gap for a pair of noise rates.
    Bound(BoundArgs),
    /// Replace noisy labels with draws through a synthetic T.
    InjectNoise(InjectArgs),
    /// Estimation error between an estimate and the true T.
    Eval(EvalArgs),
    /// Train a linear classifier on noisy labels, optionally forward-corrected.
    Train(TrainArgs),
}

#[derive(clap::Args)]
struct DataArgs {
    /// Dataset CSV with `f0..f{d-1}`, `noisy_label` and optional `clean_label`.
    #[arg(long)]
    input: PathBuf,
    /// Number of classes; inferred from the labels when omitted.
    #[arg(long)]
    k: Option<usize>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        read_dataset(&self.input, self.k)
    }
}

#[derive(clap::Args)]
struct EstimateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "a-tv")]
    variant: Variant,
    #[arg(long, default_value_t = 15)]
    bins: usize,
    #[arg(long, default_value = "minmax")]
    activation: Activation,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
    /// True transition matrix JSON; adds the estimation error to the report.
    #[arg(long)]
    true_t: Option<PathBuf>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    /// Write the 2-NN triplets as `n,n1,n2,y_n,y_n1,y_n2` CSV.
    #[arg(long)]
    triplets: Option<PathBuf>,
    /// Write the fitted whitening transform (a-* variants only).
    #[arg(long)]
    whitening: Option<PathBuf>,
    /// Write the consensus statistics.
    #[arg(long)]
    consensus: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Divergence {
    Kl,
    Tv,
}

impl From<Divergence> for FDivergenceKind {
    fn from(d: Divergence) -> Self {
        match d {
            Divergence::Kl => FDivergenceKind::Kl,
            Divergence::Tv => FDivergenceKind::Tv,
        }
    }
}

#[derive(clap::Args)]
struct MiArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "tv")]
    divergence: Divergence,
    #[arg(long, default_value_t = 15)]
    bins: usize,
    #[arg(long, default_value = "minmax")]
    activation: Activation,
    /// Whiten the features before measuring.
    #[arg(long)]
    whiten: bool,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(clap::Args)]
struct BoundArgs {
    #[arg(long)]
    e1: f64,
    #[arg(long)]
    e2: f64,
    #[arg(long, default_value_t = DEFAULT_BETA_RANGE.0)]
    beta_lo: f64,
    #[arg(long, default_value_t = DEFAULT_BETA_RANGE.1)]
    beta_hi: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Symmetric,
    Asymmetric,
    Dirichlet,
}

#[derive(clap::Args)]
struct InjectArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum)]
    scheme: Scheme,
    /// Flip rate (symmetric) or the 0 -> 1 rate (asymmetric).
    #[arg(long)]
    e1: Option<f64>,
    /// The 1 -> 0 rate (asymmetric).
    #[arg(long)]
    e2: Option<f64>,
    /// Dirichlet noise level; the average rate is 1 / (1 + r / sqrt(K - 1)).
    #[arg(long)]
    r: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(clap::Args)]
struct EvalArgs {
    /// Report JSON from `estimate`, or a bare transition matrix JSON.
    #[arg(long)]
    estimated: PathBuf,
    #[arg(long = "true")]
    true_t: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Plain,
    Forward,
}

#[derive(clap::Args)]
struct TrainArgs {
    /// Training CSV; fitted on its noisy labels.
    #[arg(long)]
    train: PathBuf,
    /// Test CSV; accuracy is measured on its clean labels.
    #[arg(long)]
    test: PathBuf,
    /// Transition matrix JSON (or an `estimate` report) for forward mode.
    #[arg(long)]
    t: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "plain")]
    mode: Mode,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    step_size: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the result JSON here as well as to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Estimate(args) => run_estimate(args),
        Command::Mi(args) => run_mi(args),
        Command::Bound(args) => run_bound(args),
        Command::InjectNoise(args) => run_inject(args),
        Command::Eval(args) => run_eval(args),
        Command::Train(args) => run_train(args),
    }
}

fn read_dataset(path: &Path, k: Option<usize>) -> Result<Dataset> {
    let schema = CsvSchema {
        k,
        ..CsvSchema::default()
    };
    load_dataset(path, &schema).with_context(|| format!("reading {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn read_transition(path: &Path) -> Result<TransitionMatrix> {
    TransitionMatrix::from_json_file(path).with_context(|| format!("reading {}", path.display()))
}

/// Accepts either a full report or a bare transition matrix.
fn read_estimate(path: &Path) -> Result<TransitionMatrix> {
    match Report::from_json_file(path) {
        Ok(report) => Ok(report.estimated_t),
        Err(_) => read_transition(path),
    }
}

fn run_estimate(args: EstimateArgs) -> Result<()> {
    let data = args.data.load()?;
    let mut config = EstimatorConfig {
        variant: args.variant,
        bins: args.bins,
        activation: args.activation,
        seed: args.seed,
        ..EstimatorConfig::default()
    };
    if let Some(iters) = args.max_iters {
        config.optimizer.max_iters = iters;
    }
    if let Some(restarts) = args.restarts {
        config.optimizer.restarts = restarts;
    }
    let true_t = args.true_t.as_deref().map(read_transition).transpose()?;

    let (report, artifacts) = estimate_detailed(&data, &config, true_t.as_ref())?;
    report
        .to_json_file(&args.output)
        .with_context(|| format!("writing {}", args.output.display()))?;

    if let Some(path) = &args.triplets {
        artifacts.triplets.write_csv(path)?;
    }
    if let Some(path) = &args.whitening {
        match &artifacts.whitening {
            Some(w) => write_json(path, w)?,
            None => bail!("--whitening needs an a-* variant, got {}", config.variant),
        }
    }
    if let Some(path) = &args.consensus {
        write_json(path, &report.consensus)?;
    }

    if !report.converged {
        eprintln!(
            "warning: optimizer did not converge in {} iterations",
            report.iterations
        );
    }
    match report.error {
        Some(e) => println!("{}: error {e:.6}", config.variant),
        None => println!("{}: wrote {}", config.variant, args.output.display()),
    }
    Ok(())
}

fn run_mi(args: MiArgs) -> Result<()> {
    let mut data = args.data.load()?;
    if args.whiten {
        data = fit_whitening(&data, EstimatorConfig::default().eigen_floor)?.apply(&data)?;
    }
    let mi = estimate_mi(
        data.features(),
        data.noisy_labels(),
        data.k(),
        args.divergence.into(),
        args.bins,
    )?;
    let weights = build_weights(&mi, args.activation)?;

    let out: Box<dyn Write> = match &args.output {
        Some(path) => {
            Box::new(File::create(path).with_context(|| format!("creating {}", path.display()))?)
        }
        None => Box::new(io::stdout().lock()),
    };
    let mut out = BufWriter::new(out);
    writeln!(out, "dim,mi,weight")?;
    for (dim, (m, w)) in mi.per_dim.iter().zip(&weights.w).enumerate() {
        writeln!(out, "{dim},{m},{w}")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct BoundOutput {
    e1: f64,
    e2: f64,
    epsilon: f64,
    practical_gap: f64,
    beta_range: [f64; 2],
}

fn run_bound(args: BoundArgs) -> Result<()> {
    let rates = NoiseRatePair::new(args.e1, args.e2)?;
    let out = BoundOutput {
        e1: args.e1,
        e2: args.e2,
        epsilon: kl_order_gap(rates)?,
        practical_gap: practical_gap(rates, args.beta_lo, args.beta_hi)?,
        beta_range: [args.beta_lo, args.beta_hi],
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn run_inject(args: InjectArgs) -> Result<()> {
    let mut data = args.data.load()?;
    if data.clean_labels().is_none() {
        // without a clean column the given labels are taken as clean
        data = Dataset::new(
            data.features().clone(),
            data.noisy_labels().to_vec(),
            Some(data.noisy_labels().to_vec()),
            Some(data.k()),
        )?;
    }
    let k = data.k();
    let scheme = match args.scheme {
        Scheme::Symmetric => {
            let e = args.e1.context("--scheme symmetric needs --e1")?;
            NoiseScheme::symmetric(e)
        }
        Scheme::Asymmetric => {
            let e1 = args.e1.context("--scheme asymmetric needs --e1")?;
            let e2 = args.e2.context("--scheme asymmetric needs --e2")?;
            NoiseScheme::binary(e1, e2)
        }
        Scheme::Dirichlet => {
            let r = args.r.context("--scheme dirichlet needs --r")?;
            NoiseScheme::dirichlet(avg_noise_rate_from_r(r, k)?, args.seed)
        }
    };
    let t = build_transition(&scheme, k)?;
    let noisy = inject_noise(&data, &t, args.seed)?;
    save_dataset(&args.output, &noisy)
        .with_context(|| format!("writing {}", args.output.display()))?;

    let mut t_path = args.output.clone().into_os_string();
    t_path.push(".true_t.json");
    let t_path = PathBuf::from(t_path);
    t.to_json_file(&t_path)?;
    println!("wrote {} and {}", args.output.display(), t_path.display());
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let estimated = read_estimate(&args.estimated)?;
    let truth = read_transition(&args.true_t)?;
    println!("{}", estimation_error(&truth, &estimated)?);
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<()> {
    let train = read_dataset(&args.train, args.k)?;
    let test = read_dataset(&args.test, args.k.or(Some(train.k())))?;
    let t = match (args.mode, &args.t) {
        (Mode::Plain, _) => None,
        (Mode::Forward, Some(path)) => Some(read_estimate(path)?),
        (Mode::Forward, None) => bail!("--mode forward needs --t"),
    };
    let config = TrainConfig {
        epochs: args.epochs,
        step_size: args.step_size,
        seed: args.seed,
    };
    let (result, _) = train_linear(&train, &test, t.as_ref(), &config)?;
    if let Some(path) = &args.output {
        write_json(path, &result)?;
    }
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(())
}
