use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use patrol::cli::{self, CliError, ReportDocument};
use patrol::config::EngineConfig;
use patrol::probe::{BufferMode, ScenarioKind};

#[derive(Parser)]
#[command(name = "patrol", version, about = "Syscall-level runtime security pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct EngineArgs {
    /// Config file; falls back to $PATROL_CONFIG, then built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<BufferMode>,
    /// Policy files; replaces `policy_paths` from the config.
    #[arg(long, num_args = 1..)]
    policies: Vec<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a trace through the pipeline, or the full detection matrix.
    Replay {
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long, required_unless_present = "matrix")]
        trace: Option<PathBuf>,
        #[arg(long)]
        matrix: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write the JSON report here.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Throughput and decision latency over a synthetic workload.
    Bench {
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long, default_value_t = 100_000)]
        events: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Check policy files.
    Lint {
        #[arg(long, num_args = 1..)]
        policies: Vec<PathBuf>,
        /// Positional policy files.
        files: Vec<PathBuf>,
    },
    /// Generate a scenario trace.
    Gen {
        #[arg(long, value_parser = parse_scenario)]
        scenario: ScenarioKind,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Render a saved report.
    Report {
        path: PathBuf,
        /// Dump behavior profiles as JSON.
        #[arg(long)]
        profiles: bool,
    },
}

fn parse_mode(s: &str) -> Result<BufferMode, String> {
    s.parse().map_err(|_| format!("unknown mode `{s}` (observe|inline)"))
}

fn parse_scenario(s: &str) -> Result<ScenarioKind, String> {
    s.parse()
}

fn engine_config(args: &EngineArgs) -> Result<EngineConfig, CliError> {
    let mut cfg = cli::resolve_config_from_env(args.config.as_deref())?;
    if let Some(mode) = args.mode {
        cfg.mode = mode;
    }
    if !args.policies.is_empty() {
        cfg.policy_paths = args.policies.clone();
    }
    Ok(cfg)
}

fn emit(doc: &ReportDocument, out: Option<&PathBuf>) -> Result<(), CliError> {
    print!("{}", doc.render());
    if let Some(path) = out {
        doc.write(path)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Replay {
            engine,
            trace,
            matrix,
            seed,
            out,
        } => {
            let cfg = engine_config(&engine)?;
            let doc = if matrix {
                cli::cmd_matrix(&cfg, seed)?
            } else {
                cli::cmd_replay(&cfg, trace.as_deref().expect("clap enforces --trace"))?
            };
            emit(&doc, out.as_ref())
        }
        Command::Bench {
            engine,
            events,
            seed,
            out,
        } => {
            let cfg = engine_config(&engine)?;
            emit(&cli::cmd_bench(&cfg, events, seed)?, out.as_ref())
        }
        Command::Lint { mut policies, files } => {
            policies.extend(files);
            let report = cli::cmd_lint(&policies)?;
            for d in &report.diagnostics {
                println!("{d}");
            }
            println!(
                "{} rule(s), {} diagnostic(s), {} error(s)",
                report.rules,
                report.diagnostics.len(),
                report.errors()
            );
            match report.errors() {
                0 => Ok(()),
                n => Err(CliError::LintErrors(n)),
            }
        }
        Command::Gen { scenario, seed, out } => {
            let trace = cli::cmd_gen(scenario, seed, &out)?;
            println!(
                "wrote {} events ({scenario}, seed {seed}) to {}",
                trace.len(),
                out.display()
            );
            Ok(())
        }
        Command::Report { path, profiles } => {
            print!("{}", cli::cmd_report(&path, profiles)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("patrol: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
