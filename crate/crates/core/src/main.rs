use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sparn::cli::{
    cmd_eval, cmd_nearest, cmd_sample, cmd_select_train, exit_code, nearest_text, with_threads,
    ExperimentConfig, ImageShape, Metric,
};
use sparn::Error;

#[derive(Parser)]
#[command(name = "sparn", version, about = "Sparse autoregressive networks for density estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Grid-search λ and K on a validation split and keep the best model.
    #[command(alias = "select")]
    Train(TrainArgs),
    /// Mean test log-likelihood (nats per example) of a saved model.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Write per-example log-likelihoods here.
        #[arg(long)]
        dump: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Draw samples from a saved model.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write one P5 image per sample, e.g. `28x28`.
        #[arg(long)]
        image: Option<ImageShape>,
    },
    /// Nearest training example of every sample.
    Nearest {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long, default_value = "hamming")]
        metric: Metric,
        /// Write symmetric-difference P6 images of this shape.
        #[arg(long)]
        image: Option<ImageShape>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// File of key=value lines; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train: Option<String>,
    #[arg(long)]
    valid: Option<String>,
    #[arg(long)]
    test: Option<String>,
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    lambda_grid: Option<String>,
    #[arg(long)]
    components_grid: Option<String>,
    #[arg(long)]
    partition: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    threads: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    intercept_scale: Option<String>,
}

impl TrainArgs {
    fn overrides(self) -> Vec<(String, String)> {
        [
            ("train", self.train),
            ("valid", self.valid),
            ("test", self.test),
            ("kind", self.kind),
            ("family", self.family),
            ("mode", self.mode),
            ("lambda-grid", self.lambda_grid),
            ("components-grid", self.components_grid),
            ("partition", self.partition),
            ("seed", self.seed),
            ("threads", self.threads),
            ("out", self.out),
            ("intercept-scale", self.intercept_scale),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
        .collect()
    }
}

fn run(command: Command) -> sparn::Result<String> {
    match command {
        Command::Train(args) => {
            let file = match &args.config {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| Error::file(p, e))?;
                    ExperimentConfig::parse_kv(&text)?
                }
                None => Default::default(),
            };
            let cfg = ExperimentConfig::from_sources(file, args.overrides())?;
            Ok(cmd_select_train(&cfg)?.to_kv())
        }
        Command::Eval {
            model,
            data,
            dump,
            threads,
        } => {
            let report = with_threads(threads, || cmd_eval(&model, &data))??;
            if let Some(p) = dump {
                std::fs::write(&p, report.logliks_text()).map_err(|e| Error::file(&p, e))?;
            }
            Ok(report.to_kv())
        }
        Command::Sample {
            model,
            count,
            seed,
            out,
            image,
        } => {
            let paths = cmd_sample(&model, count, seed, &out, image)?;
            Ok(format!("samples={count}\nfiles={}\n", paths.len()))
        }
        Command::Nearest {
            samples,
            train,
            metric,
            image,
            out,
        } => Ok(nearest_text(&cmd_nearest(&samples, &train, metric, image, out.as_deref())?)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
