use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use evostage::agents::provider::{HttpProvider, LlmProvider, MockProvider};
use evostage::config::{load_config, parse_config, LoadedConfig, Profile};
use evostage::engine::{EngineError, RunReport};
use evostage::persist::{load_population, load_run};
use evostage::report::{emit_report, summarize};
use evostage::runner::{evaluate_individual, execute_run, RunError};

const EXIT_CONFIG: u8 = 2;
const EXIT_PROVIDER: u8 = 3;
const EXIT_DOMAIN: u8 = 4;

#[derive(Parser)]
#[command(name = "evostage", version, about = "Evolve multi-stage heuristics with LLM agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration; profile defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    profile: Option<Profile>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "evostage-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve against a live chat-completion endpoint.
    Run(RunArgs),
    /// Evolve with recorded agent responses. Uses `config.toml` in the
    /// fixture directory when no --config is given.
    Replay {
        #[arg(long)]
        fixtures: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Re-evaluate one individual from a saved population.
    EvalOne {
        #[arg(long)]
        population: PathBuf,
        /// Individual id; the best entry when omitted.
        #[arg(long)]
        id: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        profile: Option<Profile>,
    },
    /// Regenerate report files from a saved run.json.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn fail(code: u8) -> impl FnOnce(anyhow::Error) -> Failure {
    move |error| Failure { code, error }
}

fn config_for(path: Option<&Path>, profile: Option<Profile>, seed: Option<u64>) -> Result<LoadedConfig, Failure> {
    let mut cfg = match path {
        Some(p) => load_config(p, profile),
        None => parse_config("", Path::new("."), profile),
    }
    .map_err(|e| fail(EXIT_CONFIG)(e.into()))?;
    if let Some(seed) = seed {
        cfg.run.seed = seed;
    }
    Ok(cfg)
}

fn run_error(e: RunError) -> Failure {
    let code = match &e {
        RunError::Domain(_) => EXIT_DOMAIN,
        RunError::Engine(EngineError::Config(_)) | RunError::Engine(EngineError::Agent(_)) => EXIT_CONFIG,
        RunError::Persist(_) | RunError::Report(_) => 1,
    };
    fail(code)(e.into())
}

fn finish_run(report: &RunReport, out: &Path) -> Result<(), Failure> {
    let s = summarize(report);
    println!(
        "{} evaluations ({} initialization), pass rate {:.2}, best score {}, outputs in {}",
        s.evaluations,
        s.initialization_evaluations,
        s.pass_rate,
        s.best_score.map_or("none".to_string(), |b| b.to_string()),
        out.display()
    );
    match &report.aborted {
        Some(a) => Err(fail(EXIT_PROVIDER)(anyhow!("run aborted ({}): {}", a.kind, a.message))),
        None => Ok(()),
    }
}

fn evolve(args: &RunArgs, cfg: LoadedConfig, provider: &dyn LlmProvider) -> Result<(), Failure> {
    let report = execute_run(&cfg, provider, &args.out).map_err(run_error)?;
    finish_run(&report, &args.out)
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(args) => {
            let cfg = config_for(args.config.as_deref(), args.profile, args.seed)?;
            let provider = HttpProvider::from_env().map_err(|e| fail(EXIT_PROVIDER)(e.into()))?;
            evolve(&args, cfg, &provider)
        }
        Command::Replay { fixtures, run } => {
            let default_cfg = fixtures.join("config.toml");
            let path = run.config.clone().or_else(|| default_cfg.exists().then_some(default_cfg));
            let cfg = config_for(path.as_deref(), run.profile, run.seed)?;
            let provider = MockProvider::load(&fixtures).map_err(|e| fail(EXIT_CONFIG)(e.into()))?;
            evolve(&run, cfg, &provider)
        }
        Command::EvalOne { population, id, config, profile } => {
            let saved = load_population(&population).map_err(|e| fail(EXIT_CONFIG)(e.into()))?;
            let mut cfg = config_for(config.as_deref(), profile, None)?;
            cfg.run.stage_count = saved.config.stage_count;
            cfg.run.seed = saved.config.seed;
            let entries = saved.population.entries();
            let chosen = match id {
                Some(id) => entries.iter().find(|e| e.id == id),
                None => entries.first(),
            }
            .cloned()
            .ok_or_else(|| fail(EXIT_CONFIG)(anyhow!("no matching individual in {}", population.display())))?;
            let evaluated = evaluate_individual(&cfg, chosen).map_err(run_error)?;
            let out = serde_json::json!({
                "id": evaluated.id,
                "legality": evaluated.legality,
                "detail": evaluated.legality_detail,
                "score": evaluated.score,
                "final_metrics": evaluated.info.final_metrics,
            });
            println!("{}", serde_json::to_string_pretty(&out).expect("json"));
            Ok(())
        }
        Command::Report { run, out } => {
            let report = load_run(&run).map_err(|e| fail(EXIT_CONFIG)(e.into()))?;
            emit_report(&report, &out)
                .with_context(|| format!("writing report to {}", out.display()))
                .map_err(fail(1))?;
            println!("report written to {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
