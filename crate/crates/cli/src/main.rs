use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use codeaug::pipeline::SweepParam;
use codeaug::synth::SynthConfig;
use codeaug::Error;

mod config;
mod stages;

use config::{ClientKind, RunConfig};

#[derive(Parser)]
#[command(name = "codeaug", version, about = "Augment, filter and retrain a code-search retriever")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every stage. Anything given here wins over the config
/// file.
#[derive(Args, Debug, Clone, Default)]
pub struct Overrides {
    /// TOML or JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; each stage writes into its own subdirectory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training pairs (JSONL).
    #[arg(long)]
    train: Option<PathBuf>,
    /// Test pairs (JSONL).
    #[arg(long)]
    test: Option<PathBuf>,
    /// Retrieval codebase for the test pairs (JSONL).
    #[arg(long)]
    test_codebase: Option<PathBuf>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    #[arg(long)]
    theta_q: Option<f64>,
    #[arg(long)]
    theta_c: Option<f64>,
    /// Augmented pairs kept per original pair.
    #[arg(long)]
    n_aug: Option<f64>,
    /// Keep every augmentation instead of filtering.
    #[arg(long)]
    no_filter: bool,
    #[arg(long, value_enum)]
    client: Option<ClientKind>,
}

impl Overrides {
    fn resolve(&self) -> codeaug::Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.out {
            c.out = v.clone();
        }
        if let Some(v) = &self.train {
            c.train = Some(v.clone());
        }
        if let Some(v) = &self.test {
            c.test = Some(v.clone());
        }
        if let Some(v) = &self.test_codebase {
            c.test_codebase = Some(v.clone());
        }
        if let Some(v) = &self.seed {
            c.seeds = v.clone();
        }
        if let Some(v) = self.theta_q {
            c.theta_q = v;
        }
        if let Some(v) = self.theta_c {
            c.theta_c = v;
        }
        if let Some(v) = self.n_aug {
            c.n_aug = Some(v);
        }
        if self.no_filter {
            c.filtering = false;
        }
        if let Some(v) = self.client {
            c.client = v;
        }
        c.experiment()?;
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic train/test corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        n_test: Option<usize>,
        #[arg(long)]
        codebase_size: Option<usize>,
    },
    /// Print a summary of the configured datasets.
    Stats {
        #[command(flatten)]
        common: Overrides,
    },
    /// Request query and code rewrites for every training pair.
    Augment {
        #[command(flatten)]
        common: Overrides,
    },
    /// Train one cross-encoder filter per seed.
    TrainFilter {
        #[command(flatten)]
        common: Overrides,
    },
    /// Score augmentations and build the augmented training set.
    Filter {
        #[command(flatten)]
        common: Overrides,
    },
    /// Train the bi-encoder retriever.
    Train {
        #[command(flatten)]
        common: Overrides,
        /// Train on the original pairs only.
        #[arg(long, conflicts_with_all = ["n_aug", "no_filter"])]
        original: bool,
    },
    /// Evaluate trained retrievers on the test set.
    Eval {
        #[command(flatten)]
        common: Overrides,
        /// Also write test-pair embeddings as CSV.
        #[arg(long)]
        export: bool,
        /// Append a 2-D projection to the exported rows.
        #[arg(long, requires = "export")]
        project: bool,
        /// Export a seeded sample of this many pairs.
        #[arg(long, requires = "export")]
        sample: Option<usize>,
    },
    /// Repeat filter, train and eval over a grid of one hyperparameter.
    Sweep {
        #[command(flatten)]
        common: Overrides,
        #[arg(long, value_parser = parse_param)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Run augment, train-filter, filter, train and eval in order.
    Pipeline {
        #[command(flatten)]
        common: Overrides,
    },
}

fn parse_param(s: &str) -> Result<SweepParam, String> {
    SweepParam::from_slug(s).ok_or_else(|| {
        let names: Vec<&str> = SweepParam::ALL.iter().map(|p| p.slug()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Transport(_) | Error::Credential(_) | Error::EmptyResponse(_) => 4,
        Error::Divergence { .. } | Error::Degenerate(_) => 5,
        Error::Io { .. } => 1,
        _ => 3,
    }
}

fn run(cli: Cli) -> codeaug::Result<()> {
    match cli.command {
        Command::Synth {
            out,
            seed,
            n_train,
            n_test,
            codebase_size,
        } => {
            let d = SynthConfig::default();
            let cfg = SynthConfig {
                n_train: n_train.unwrap_or(d.n_train),
                n_test: n_test.unwrap_or(d.n_test),
                codebase_size: codebase_size.unwrap_or(d.codebase_size),
                seed,
                ..d
            };
            stages::synth(&cfg, &out)
        }
        Command::Stats { common } => stages::stats(&common.resolve()?),
        Command::Augment { common } => stages::augment(&common.resolve()?),
        Command::TrainFilter { common } => stages::train_filter(&common.resolve()?),
        Command::Filter { common } => stages::filter(&common.resolve()?),
        Command::Train { common, original } => stages::train(&common.resolve()?, original),
        Command::Eval {
            common,
            export,
            project,
            sample,
        } => {
            let export = export.then_some(stages::Export { project, sample });
            stages::eval(&common.resolve()?, export.as_ref())
        }
        Command::Sweep { common, param, values } => stages::sweep(&common.resolve()?, param, &values),
        Command::Pipeline { common } => stages::pipeline(&common.resolve()?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
