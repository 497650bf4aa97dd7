use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::error;

use crossrec::commands::{self, TopicsInput};
use crossrec::config::RunConfig;
use crossrec::data::StreamRange;
use crossrec::eval::SynthConfig;
use crossrec::params::Variant;
use crossrec::Result;

#[derive(Parser)]
#[command(name = "crossrec", version, about = "Cross-network streaming recommendation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

/// Configuration file plus per-field overrides.
#[derive(Args)]
struct Overrides {
    /// `key = value` config file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    variant: Option<String>,
    /// Topics per source network.
    #[arg(long, global = true)]
    topics: Option<usize>,
    #[arg(long, global = true)]
    embed_dim: Option<usize>,
    #[arg(long, global = true)]
    hidden: Option<usize>,
    #[arg(long, global = true)]
    dropout: Option<f64>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long, global = true)]
    top_k: Option<usize>,
    /// Seconds, or `none` for the mean training gap.
    #[arg(long, global = true)]
    tau: Option<String>,
    #[arg(long, global = true)]
    max_iters: Option<usize>,
    /// History length, or `none`.
    #[arg(long, global = true)]
    history_cap: Option<String>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Prepared split directory.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Extra `key=value` settings.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let fields = [
            ("variant", self.variant.clone()),
            ("topics", self.topics.map(|v| v.to_string())),
            ("embed_dim", self.embed_dim.map(|v| v.to_string())),
            ("hidden", self.hidden.map(|v| v.to_string())),
            ("dropout", self.dropout.map(|v| v.to_string())),
            ("lr", self.lr.map(|v| v.to_string())),
            ("top_k", self.top_k.map(|v| v.to_string())),
            ("tau", self.tau.clone()),
            ("max_iters", self.max_iters.map(|v| v.to_string())),
            ("history_cap", self.history_cap.clone()),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("data_dir", path(&self.data)),
            ("out_dir", path(&self.out)),
        ];
        for (k, v) in fields {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| crossrec::Error::Config {
                key: kv.clone(),
                message: "expected KEY=VALUE".into(),
            })?;
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TopicsArgs {
    /// Fitted topic model.
    #[arg(long, conflicts_with = "contexts")]
    topic_model: Option<PathBuf>,
    /// Precomputed context table.
    #[arg(long)]
    contexts: Option<PathBuf>,
}

impl TopicsArgs {
    fn input(&self) -> Option<TopicsInput> {
        match (&self.topic_model, &self.contexts) {
            (Some(p), _) => Some(TopicsInput::Model(p.clone())),
            (_, Some(p)) => Some(TopicsInput::Table(p.clone())),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RangeArg {
    Validation,
    Test,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, filter and split an event log.
    Prepare {
        #[arg(long)]
        events: PathBuf,
        /// Keep sparse users and items.
        #[arg(long)]
        no_filter: bool,
    },
    /// Fit the topic model on the training split, or import contexts.
    Topics {
        #[arg(long)]
        import: Option<PathBuf>,
    },
    /// Offline training.
    Train {
        #[command(flatten)]
        topics: TopicsArgs,
    },
    /// Online predict-then-update over a held-out part.
    Stream {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        topics: TopicsArgs,
        #[arg(long, value_enum, default_value = "test")]
        range: RangeArg,
        /// Write the final session state here.
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
    /// Train and stream every variant.
    Ablate {
        #[command(flatten)]
        topics: TopicsArgs,
        /// Subset of variants, comma separated.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
    },
    /// Finite-difference gradient verification on tiny random models.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        models: usize,
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
    /// Generate a synthetic event log.
    Synth {
        #[arg(long, default_value_t = 200)]
        users: usize,
        #[arg(long, default_value_t = 50)]
        items: usize,
        #[arg(long, default_value_t = 5)]
        synth_topics: usize,
        #[arg(long, default_value_t = 20)]
        events_per_user: usize,
        /// Drift instants as fractions of the time span.
        #[arg(long, value_delimiter = ',')]
        drift_at: Vec<f64>,
    },
    /// Merge report CSVs and summarize them across runs.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn require(t: &TopicsArgs) -> Result<TopicsInput> {
    t.input()
        .ok_or_else(|| crossrec::Error::InvalidArgument("one of --topic-model or --contexts is required".into()))
}

fn run(command: Command, o: &Overrides) -> Result<()> {
    let cfg = o.resolve()?;
    match command {
        Command::Prepare { events, no_filter } => {
            commands::prepare(&cfg, &events, !no_filter)?;
        }
        Command::Topics { import } => {
            let p = commands::topics(&cfg, import.as_deref())?;
            println!("{}", p.display());
        }
        Command::Train { topics } => {
            commands::train(&cfg, &require(&topics)?)?;
        }
        Command::Stream {
            checkpoint,
            topics,
            range,
            snapshot,
        } => {
            let range = match range {
                RangeArg::Validation => StreamRange::Validation,
                RangeArg::Test => StreamRange::Test,
                RangeArg::All => StreamRange::ValidationAndTest,
            };
            let r = commands::stream(&cfg, &checkpoint, &require(&topics)?, range, snapshot.as_deref())?;
            println!(
                "events {} hr {} ndcg {}",
                r.cumulative.n_events, r.cumulative.hr, r.cumulative.ndcg
            );
        }
        Command::Ablate { topics, variants } => {
            let variants = if variants.is_empty() {
                Variant::ALL.to_vec()
            } else {
                variants.iter().map(|v| Variant::parse(v)).collect::<Result<_>>()?
            };
            for r in commands::ablate(&cfg, topics.input().as_ref(), &variants)? {
                println!("{} hr {} ndcg {}", r.variant, r.cumulative.hr, r.cumulative.ndcg);
            }
        }
        Command::Gradcheck { models, samples } => {
            let variants = if o.variant.is_some() {
                vec![cfg.variant]
            } else {
                Variant::ALL.to_vec()
            };
            let s = commands::gradcheck(&cfg, &variants, models, samples)?;
            println!(
                "models {} max_rel_error {:e} min_mutation_error {:e}",
                s.models, s.max_rel_error, s.min_mutation_error
            );
            if !s.passed() {
                return Err(crossrec::Error::InvalidArgument("gradient check failed".into()));
            }
        }
        Command::Synth {
            users,
            items,
            synth_topics,
            events_per_user,
            drift_at,
        } => {
            let synth = SynthConfig {
                users,
                items,
                topics: synth_topics,
                events_per_user,
                drift_at,
                seed: cfg.seed,
                ..SynthConfig::default()
            };
            let p = commands::synth(&cfg, &synth)?;
            println!("{}", p.display());
        }
        Command::Report { inputs } => {
            let p = commands::report(&cfg, &inputs)?;
            println!("{}", p.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CROSSREC_LOG", "info")).init();
    let cli = Cli::parse();
    match run(cli.command, &cli.overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
