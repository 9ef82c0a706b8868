//! `precrash`: run the scenario-generation benchmark pipeline and replay
//! recorded episodes.
//!
//! Exit codes: 0 success, 2 configuration/input error, 3 stage failure.

use clap::{Args, Parser, Subcommand};
use precrash_core::pipeline::{self, PipelineConfig, Stage};
use precrash_core::scenario::GeneratorId;
use precrash_core::sim::trace::EpisodeTrace;
use precrash_core::CoreError;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

#[derive(Parser)]
#[command(
    name = "precrash",
    version,
    about = "Pre-crash driving scenario benchmark: train, generate, select, evaluate, report"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run pipeline stages (reads an optional TOML config; flags override it).
    Run(RunArgs),
    /// Print an episode trace timeline and write a trajectory plot (SVG).
    Replay(ReplayArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long, env = "PRECRASH_CONFIG")]
    config: Option<PathBuf>,
    /// Stage to run: train|generate|select|evaluate|report|all.
    #[arg(long, env = "PRECRASH_STAGE", default_value = "all")]
    stage: String,
    /// Output directory for all artifacts.
    #[arg(long, env = "PRECRASH_OUT")]
    out: Option<PathBuf>,
    /// Worker threads (0 = library default).
    #[arg(long, env = "PRECRASH_WORKERS")]
    workers: Option<usize>,
    /// Master seed.
    #[arg(long, env = "PRECRASH_SEED")]
    seed: Option<u64>,
    /// Scenario templates, comma-separated subset of 1..=8.
    #[arg(long, env = "PRECRASH_TEMPLATES", value_delimiter = ',')]
    templates: Option<Vec<u8>>,
    /// Routes, comma-separated subset of 0..=9.
    #[arg(long, env = "PRECRASH_ROUTES", value_delimiter = ',')]
    routes: Option<Vec<u8>>,
    /// Generators, comma-separated subset of lc,as,cs,at,random.
    #[arg(long, env = "PRECRASH_GENERATORS", value_delimiter = ',')]
    generators: Option<Vec<String>>,
    /// Agents under evaluation, comma-separated specs or checkpoint paths.
    #[arg(long, env = "PRECRASH_AGENTS", value_delimiter = ',')]
    agents: Option<Vec<String>>,
    /// Surrogate agent attacked during generation.
    #[arg(long, env = "PRECRASH_SURROGATE")]
    surrogate: Option<String>,
    /// Rollout budget per (template, route, generator) task.
    #[arg(long, env = "PRECRASH_BUDGET")]
    budget: Option<usize>,
    /// Scenarios kept per task.
    #[arg(long, env = "PRECRASH_KEEP_K")]
    keep_k: Option<usize>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Episode trace file (JSON lines).
    trace: PathBuf,
    /// Plot output path (default: the trace path with an .svg extension).
    #[arg(long, env = "PRECRASH_PLOT")]
    plot: Option<PathBuf>,
    /// Print the timeline only; write no plot file.
    #[arg(long)]
    no_plot: bool,
}

fn report_error(context: &str, err: &CoreError) {
    let line = serde_json::json!({ "error": err.to_string(), "context": context });
    eprintln!("{line}");
}

fn build_config(args: &RunArgs) -> Result<(PipelineConfig, Stage), CoreError> {
    let stage = Stage::from_str(&args.stage)?;
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CoreError::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            PipelineConfig::from_toml_str(&text)?
        }
        None => PipelineConfig::default(),
    };
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if let Some(workers) = args.workers {
        cfg.workers = workers;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(templates) = &args.templates {
        cfg.templates = templates.clone();
    }
    if let Some(routes) = &args.routes {
        cfg.routes = routes.clone();
    }
    if let Some(generators) = &args.generators {
        cfg.generators = generators
            .iter()
            .map(|g| GeneratorId::from_str(g))
            .collect::<Result<_, _>>()?;
    }
    if let Some(agents) = &args.agents {
        cfg.agents = agents.clone();
    }
    if let Some(surrogate) = &args.surrogate {
        cfg.surrogate = surrogate.clone();
    }
    if let Some(budget) = args.budget {
        cfg.budget = budget;
    }
    if let Some(keep_k) = args.keep_k {
        cfg.keep_k = keep_k;
    }
    cfg.validate()?;
    Ok((cfg, stage))
}

fn cmd_run(args: &RunArgs) -> ExitCode {
    let (cfg, stage) = match build_config(args) {
        Ok(v) => v,
        Err(e) => {
            report_error("config", &e);
            return ExitCode::from(2);
        }
    };
    match pipeline::run_pipeline(&cfg, stage) {
        Ok(manifest) => {
            for s in &manifest.stages {
                println!(
                    "stage {:<9} {:>7} ms  {} artifacts",
                    s.name,
                    s.wall_ms,
                    s.artifacts.len()
                );
            }
            println!(
                "done: seed {} config-hash {:016x} -> {}",
                manifest.seed,
                manifest.config_hash,
                cfg.out_dir.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            report_error(stage.name(), &e);
            ExitCode::from(3)
        }
    }
}

fn cmd_replay(args: &ReplayArgs) -> ExitCode {
    let file = match std::fs::File::open(&args.trace) {
        Ok(f) => f,
        Err(e) => {
            report_error(
                "replay",
                &CoreError::Config(format!("cannot open {}: {e}", args.trace.display())),
            );
            return ExitCode::from(2);
        }
    };
    let trace = match EpisodeTrace::read_jsonl(BufReader::new(file)) {
        Ok(t) => t,
        Err(e) => {
            report_error("replay", &e);
            return ExitCode::from(2);
        }
    };
    print!("{}", pipeline::replay_summary(&trace));
    if !args.no_plot {
        let plot = args
            .plot
            .clone()
            .unwrap_or_else(|| args.trace.with_extension("svg"));
        let svg = match pipeline::render_svg(&trace) {
            Ok(s) => s,
            Err(e) => {
                report_error("replay", &e);
                return ExitCode::from(2);
            }
        };
        if let Err(e) = pipeline::write_atomic(&plot, svg.as_bytes()) {
            report_error("replay", &e);
            return ExitCode::from(3);
        }
        println!("plot: {}", plot.display());
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(&args),
        Command::Replay(args) => cmd_replay(&args),
    }
}
