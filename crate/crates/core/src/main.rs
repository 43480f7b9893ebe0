use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use drnet::data::{load_csv_covariates, BenchmarkKind, BenchmarkSpec, CsvSchema, Dataset, Preset, Split};
use drnet::harness::{
    load_config, load_experiment_config, run_experiment, sweep_bias, sweep_strata, train_estimator,
    Estimator, ExperimentConfig, Hyperparameters, ModelSpec,
};
use drnet::metrics::{evaluate, nn_mise, NnMiseReference, DEFAULT_NN_CANDIDATES};
use drnet::model::NeuralModel;
use drnet::{Error, Result};

/// Dose-response estimation with hierarchical neural networks.
#[derive(Parser)]
#[command(name = "drnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a semi-synthetic benchmark dataset.
    Generate(GenerateArgs),
    /// Train one model on a dataset.
    Train(TrainArgs),
    /// Evaluate a saved model on the test split of a dataset.
    Evaluate(EvaluateArgs),
    /// Run the random-search protocol for several models.
    Experiment(ExperimentArgs),
    /// Train DRNet over several stratum counts.
    SweepStrata {
        #[command(flatten)]
        common: ExperimentArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,2,5,10")]
        strata: Vec<usize>,
    },
    /// Rerun the protocol over several assignment biases.
    SweepBias {
        #[command(flatten)]
        common: ExperimentArgs,
        #[arg(long, value_delimiter = ',', default_value = "5,10,15,20")]
        kappas: Vec<f64>,
    },
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value = "news")]
    benchmark: BenchmarkKind,
    #[arg(long, default_value = "desk")]
    preset: Preset,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Override the assignment bias κ.
    #[arg(long)]
    kappa: Option<f64>,
    /// Number of treatments (news benchmark only).
    #[arg(long)]
    treatments: Option<usize>,
    /// Use covariates from a CSV file with a header row.
    #[arg(long)]
    covariates: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Model kind, optionally with a regulariser: drnet, tarnet, mlp,
    /// drnet+wasserstein, drnet+pd, drnet+pm, drnet+psm_pm.
    #[arg(long, default_value = "drnet")]
    model: String,
    /// Hyperparameter file (JSON or TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Model output file.
    #[arg(long)]
    out: PathBuf,
    /// Run record output file; printed to stdout when absent.
    #[arg(long)]
    record: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Report output file; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment file (JSON or TOML); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    benchmark: Option<BenchmarkKind>,
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    hyperopt_runs: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Comma-separated model list, e.g. `drnet,tarnet,mlp,knn`.
    #[arg(long, value_delimiter = ',')]
    models: Vec<String>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    redraw_data: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => load_experiment_config(path)?,
            None => ExperimentConfig::for_benchmark(
                self.benchmark.unwrap_or(BenchmarkKind::NewsLike),
                self.preset.unwrap_or(Preset::Desk),
                self.seed.unwrap_or(1),
            ),
        };
        if self.config.is_some() && (self.benchmark.is_some() || self.preset.is_some()) {
            let seed = self.seed.unwrap_or(config.benchmark.seed);
            config.benchmark = BenchmarkSpec::preset(
                self.benchmark.unwrap_or(config.benchmark.kind),
                self.preset.unwrap_or(Preset::Desk),
                seed,
            );
        }
        if let Some(seed) = self.seed {
            config.benchmark.seed = seed;
            config.master_seed = seed;
        }
        if let Some(n) = self.hyperopt_runs {
            config.num_hyperopt_runs = n;
        }
        if let Some(n) = self.repeats {
            config.num_repeats = n;
        }
        if !self.models.is_empty() {
            config.models = self.models.iter().map(|m| ModelSpec::parse(m)).collect::<Result<_>>()?;
        }
        if let Some(k) = self.kappa {
            config.benchmark.kappa = k;
        }
        config.redraw_data |= self.redraw_data;
        if self.out.is_some() {
            config.output_dir.clone_from(&self.out);
        }
        config.validate()?;
        Ok(config)
    }
}

fn write_json(path: Option<&Path>, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn generate(args: &GenerateArgs) -> Result<()> {
    let mut spec = match (args.benchmark, args.treatments) {
        (BenchmarkKind::NewsLike, Some(k)) => BenchmarkSpec::news(k, args.preset, args.seed),
        (_, Some(_)) => {
            return Err(Error::Usage("--treatments applies to the news benchmark only".into()))
        }
        (kind, None) => BenchmarkSpec::preset(kind, args.preset, args.seed),
    };
    if let Some(k) = args.kappa {
        spec.kappa = k;
    }
    let data = match &args.covariates {
        Some(path) => {
            let x = load_csv_covariates(path, &CsvSchema::default())?;
            spec.num_samples = x.rows();
            spec.num_features = x.cols();
            Dataset::from_covariates(&spec, x)?
        }
        None => Dataset::generate(&spec)?,
    };
    data.save(&args.out)?;
    eprintln!(
        "wrote {} units, {} covariates, {} treatments to {}",
        data.len(),
        data.num_features(),
        data.num_treatments(),
        args.out.display()
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct TrainRecord {
    model: String,
    seed: u64,
    hyperparameters: Hyperparameters,
    train: Option<drnet::model::TrainReport>,
    validation_nn_mise: f64,
    test: drnet::metrics::MetricsReport,
    seconds: f64,
}

fn train(args: &TrainArgs) -> Result<()> {
    let data = Dataset::load(&args.data)?;
    let spec = ModelSpec::parse(&args.model)?;
    let hp: Hyperparameters = match &args.config {
        Some(path) => load_config(path)?,
        None => Hyperparameters::default(),
    };
    let start = std::time::Instant::now();
    let (estimator, report) = train_estimator(&spec, &hp, &data, args.seed)?;
    let Estimator::Neural(model) = &estimator else {
        return Err(Error::Usage("kNN has no trainable parameters to save".into()));
    };
    let reference = NnMiseReference::new(&data, DEFAULT_NN_CANDIDATES)?;
    let selection = nn_mise(&estimator, &data, &reference)?;
    let mut test = evaluate(&estimator, &data, Split::Test, &spec.label(), args.seed)?;
    test.nn_mise = Some(selection);
    model.save(&args.out)?;
    let record = TrainRecord {
        model: spec.label(),
        seed: args.seed,
        hyperparameters: hp,
        train: report,
        validation_nn_mise: selection,
        test,
        seconds: start.elapsed().as_secs_f64(),
    };
    write_json(args.record.as_deref(), &record)
}

fn evaluate_model(args: &EvaluateArgs) -> Result<()> {
    let data = Dataset::load(&args.data)?;
    let model = NeuralModel::load(&args.model)?;
    if model.config().num_features != data.num_features() {
        return Err(Error::DimensionMismatch {
            context: "model covariates vs dataset",
            expected: model.config().num_features,
            actual: data.num_features(),
        });
    }
    let report = evaluate(&model, &data, Split::Test, model.kind().name(), data.spec.seed)?;
    write_json(args.out.as_deref(), &report)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(args) => generate(&args),
        Command::Train(args) => train(&args),
        Command::Evaluate(args) => evaluate_model(&args),
        Command::Experiment(args) => {
            let config = args.resolve()?;
            let result = run_experiment(&config)?;
            if config.output_dir.is_none() {
                write_json(None, &result.summary)?;
            }
            for s in &result.summary {
                eprintln!(
                    "{:<20} sqrt-MISE {:.3} ± {:.3}  sqrt-DPE {:.3}  sqrt-PE {:.3}",
                    s.model, s.root_mise_mean, s.root_mise_std, s.root_dpe_mean, s.root_pe_mean
                );
            }
            Ok(())
        }
        Command::SweepStrata { common, strata } => {
            let config = common.resolve()?;
            let rows = sweep_strata(&config, &strata)?;
            write_json(None, &rows)
        }
        Command::SweepBias { common, kappas } => {
            let config = common.resolve()?;
            let rows = sweep_bias(&config, &kappas)?;
            write_json(None, &rows)
        }
    }
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) | Error::Config(_) | Error::InvalidConfig(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
