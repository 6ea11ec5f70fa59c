use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use retopt::commands::{self, EvaluateOptions, Overrides};
use retopt::config;
use retopt::error::exit_code;
use retopt_core::marl::Variant;

/// Shared-policy Q-learning for remote electrical tilt optimization.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args)]
struct Global {
    /// JSON configuration; missing keys keep their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Multiplier on the episode counts (1.0 is the full-size run).
    #[arg(long, global = true, value_name = "F")]
    scale: Option<f64>,
    /// Comma-separated variants: ES,RLEN,RLIN,RLIN+.
    #[arg(long, global = true, value_name = "LIST", value_parser = parse_variant_list)]
    variants: Option<VariantList>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
}

#[derive(Clone)]
struct VariantList(Vec<Variant>);

fn parse_variant_list(s: &str) -> Result<VariantList, String> {
    commands::parse_variants(s).map(VariantList)
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train the shared networks on the training grid.
    Pretrain,
    /// Evaluate the variants on paired test episodes.
    Evaluate {
        /// Checkpoint to evaluate [default: OUT/checkpoint.json].
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Also write layout, baseline snapshot and per-cell KPI tables.
        #[arg(long)]
        dump: bool,
    },
    /// Rebuild the report and charts from the trace files in OUT.
    Report,
    /// Print the effective configuration.
    Config {
        /// Print the documented defaults instead.
        #[arg(long)]
        print_defaults: bool,
    },
}

/// Prints to stdout, tolerating a reader that closes the pipe early.
fn print_stdout(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}");
}

fn run(cli: Cli) -> retopt::Result<()> {
    let g = cli.global;
    let overrides = Overrides {
        config: g.config,
        seed: g.seed,
        scale: g.scale,
        variants: g.variants.map(|v| v.0),
        workers: g.workers,
    };
    match cli.command {
        Command::Config { print_defaults: true } => {
            print_stdout(&config::print_defaults());
        }
        Command::Config { print_defaults: false } => {
            print_stdout(&overrides.resolve()?.to_json());
        }
        Command::Pretrain => {
            let cfg = overrides.resolve()?;
            commands::pretrain(&cfg, &g.out)?;
            log::info!("wrote {}", g.out.display());
        }
        Command::Evaluate { checkpoint, dump } => {
            let cfg = overrides.resolve()?;
            let report = commands::evaluate(&cfg, &g.out, &EvaluateOptions { checkpoint, dump })?;
            for r in &report.variants {
                if let Some(s) = r.final_gain(retopt::report::Metric::GoodTraffic) {
                    log::info!("{}: final good traffic gain {:.2}%", r.variant.as_str(), s.mean);
                }
            }
        }
        Command::Report => {
            let cfg = overrides.resolve()?;
            commands::report(&cfg, &g.out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(exit_code::SUCCESS as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
