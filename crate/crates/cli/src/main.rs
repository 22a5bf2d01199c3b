use std::path::PathBuf;
use std::process::ExitCode;

use cellcast_cli::commands::{self, ModelChoice};
use cellcast_cli::config::RunConfig;
use cellcast_cli::engine::{Engine, TimeRange};
use cellcast_cli::service;
use cellcast_core::data::{SynthConfig, DEFAULT_CALIBRATION_PERCENTILE};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "cellcast",
    version,
    about = "Preference-conditioned cell load forecasting and on-off simulation"
)]
struct Cli {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    BertMse,
    Fnn,
}

#[derive(Subcommand)]
enum Command {
    /// Convert CDR activity records into a calibrated series store.
    Ingest {
        #[arg(long)]
        cdr: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Days at the start of each series used for calibration.
        #[arg(long, default_value_t = 11)]
        train_days: usize,
        #[arg(long, default_value_t = DEFAULT_CALIBRATION_PERCENTILE)]
        percentile: f64,
        /// Largest fraction of gap-filled bins a cell may have.
        #[arg(long, default_value_t = 0.2)]
        max_missing: f64,
    },
    /// Write synthetic diurnal series to a store.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        cells: Option<usize>,
        #[arg(long)]
        days: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the MSE encoder or the feed-forward baseline.
    Train {
        #[arg(long, value_enum, default_value = "bert-mse")]
        model: ModelArg,
        /// Overrides both the initialization and the shuffling seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fine-tune on preference prompts with the balancing loss.
    Finetune {
        /// Starting checkpoint; defaults to the trained MSE encoder.
        #[arg(long)]
        from: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Test-set MSE of every forecaster, ascending.
    Evaluate,
    /// Power savings and throughput loss per preference.
    Simulate {
        #[arg(long)]
        preference: Option<String>,
        /// Start of the simulated window, epoch ms (inclusive).
        #[arg(long, requires = "to")]
        from: Option<i64>,
        /// End of the simulated window, epoch ms (exclusive).
        #[arg(long, requires = "from")]
        to: Option<i64>,
    },
    /// Serve the JSON API; the address comes from CELLCAST_LISTEN.
    Serve,
    /// Render stored evaluate and simulate results.
    Report,
}

fn run(cli: Cli) -> anyhow::Result<String> {
    let mut cfg = RunConfig::load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest {
            cdr,
            out,
            train_days,
            percentile,
            max_missing,
        } => commands::ingest(&cdr, &out, train_days, percentile, max_missing),
        Command::Synth {
            out,
            cells,
            days,
            seed,
        } => {
            let mut s = match &cfg.data {
                cellcast_cli::config::DataSource::Synth(s) => s.clone(),
                _ => SynthConfig::default(),
            };
            s.num_cells = cells.unwrap_or(s.num_cells);
            s.days = days.unwrap_or(s.days);
            s.seed = seed.unwrap_or(s.seed);
            commands::synth(&s, &out)
        }
        Command::Train { model, seed } => {
            let which = match model {
                ModelArg::BertMse => ModelChoice::BertMse,
                ModelArg::Fnn => ModelChoice::Fnn,
            };
            if let Some(seed) = seed {
                cfg.model_seed = seed;
                cfg.train.seed = seed;
                cfg.fnn.train.seed = seed;
            }
            commands::train_model(&cfg, which)
        }
        Command::Finetune { from, seed } => {
            if let Some(seed) = seed {
                cfg.finetune.seed = seed;
            }
            commands::finetune(&cfg, from.as_deref())
        }
        Command::Evaluate => commands::evaluate_models(&cfg),
        Command::Simulate {
            preference,
            from,
            to,
        } => {
            let range = from.zip(to).map(|(start, end)| TimeRange { start, end });
            commands::simulate_preferences(&cfg, preference.as_deref(), range)
        }
        Command::Serve => {
            let engine = Engine::load(&cfg)?;
            let addr = service::listen_address();
            tokio::runtime::Runtime::new()?.block_on(service::serve(engine, &addr))?;
            Ok(String::new())
        }
        Command::Report => commands::report(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let text = e.to_string();
            eprintln!("{}", text.lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            if !text.is_empty() && !text.ends_with('\n') {
                println!();
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let chain: Vec<String> = e
                .chain()
                .map(|c| {
                    c.to_string()
                        .split_whitespace()
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .collect();
            eprintln!("error: {}", chain.join(": "));
            ExitCode::FAILURE
        }
    }
}
