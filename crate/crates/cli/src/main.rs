use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lanesim::env::{
    agent_by_name, evaluate, read_rollouts, record_rollouts, replay, run_episode, wire, Agent, EpisodeSummary,
    Evaluation, AGENT_NAMES,
};
use lanesim::map::{builtin_map_source, load_map, BUILTIN_MAPS};
use lanesim::task::{TaskError, TASK_NAMES};
use lanesim::{DrivingEnv, EnvError};
use lanesim_viz::{TelemetryHub, TelemetryRecorder, VizServer};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    /// Bad arguments; exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Verification failed; exit code 1.
    #[error("{0}")]
    Failed(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Env(EnvError::Task(TaskError::UnknownTask { .. })) => 2,
            CliError::Env(EnvError::Task(TaskError::Override(_))) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "lanesim", version, about = "Deterministic 2D driving simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(clap::Args)]
struct EpisodeArgs {
    task: String,
    #[arg(default_value = "autopilot")]
    agent: String,
    #[arg(default_value_t = 1)]
    episodes: usize,
    /// Seed of the first episode; episode i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON object of task overrides, keys may be dotted paths.
    #[arg(long, default_value = "{}")]
    overrides: String,
}

#[derive(Subcommand)]
enum Command {
    /// Run episodes and print one outcome line per episode.
    Run {
        #[command(flatten)]
        args: EpisodeArgs,
        /// Serve live telemetry over HTTP on this port.
        #[arg(long, env = "LANESIM_VIZ_PORT")]
        viz: Option<u16>,
        /// Also accept wire-protocol clients on this address.
        #[arg(long)]
        serve: Option<SocketAddr>,
    },
    /// Run episodes and print aggregate metrics.
    Evaluate {
        #[command(flatten)]
        args: EpisodeArgs,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Serve the JSON-lines wire protocol until killed.
    Serve {
        #[arg(default_value = "127.0.0.1:7878")]
        addr: SocketAddr,
    },
    /// Write rollouts as JSON lines.
    Record {
        #[command(flatten)]
        args: EpisodeArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Re-simulate a recorded log and compare rewards bit for bit.
    Replay { log: PathBuf },
    /// Check map files, or every built-in map when none are given.
    #[command(alias = "map_validate")]
    MapValidate { paths: Vec<PathBuf> },
    /// List task and agent names.
    List,
}

fn parse_overrides(text: &str) -> Result<Value, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Usage(format!("--overrides is not valid JSON: {e}")))
}

fn make_agent(name: &str, seed: u64) -> Result<Box<dyn Agent + Send>, CliError> {
    agent_by_name(name, seed).ok_or_else(|| {
        CliError::Usage(format!("unknown agent \"{name}\"; valid agents: {}, external", AGENT_NAMES.join(", ")))
    })
}

fn setup(args: &EpisodeArgs) -> Result<(DrivingEnv, Box<dyn Agent + Send>), CliError> {
    if args.episodes == 0 {
        return Err(CliError::Usage("episodes must be at least 1".into()));
    }
    let env = DrivingEnv::from_task(&args.task, &parse_overrides(&args.overrides)?)?;
    let agent = make_agent(&args.agent, args.seed)?;
    Ok((env, agent))
}

fn outcome_line(s: &EpisodeSummary) -> String {
    format!(
        "episode {} seed {}: {} after {} steps, return {:.4}, avg speed {:.3} m/s",
        s.episode,
        s.seed,
        s.cause.as_str(),
        s.steps,
        s.total_reward,
        s.mean_speed()
    )
}

fn run(args: EpisodeArgs, viz: Option<u16>, serve: Option<SocketAddr>) -> Result<(), CliError> {
    let _wire = match serve {
        Some(addr) => {
            let (local, handle) = wire::spawn_server(addr, wire::registry_factory())?;
            eprintln!("wire protocol on {local}");
            Some(handle)
        }
        None => None,
    };
    if args.agent == "external" {
        // the environment is driven by wire clients
        let Some(handle) = _wire else {
            return Err(CliError::Usage("agent \"external\" needs --serve ADDR".into()));
        };
        return match handle.join() {
            Ok(r) => r.map_err(CliError::from),
            Err(_) => Err(CliError::Failed("wire server panicked".into())),
        };
    }
    let (mut env, mut agent) = setup(&args)?;
    let mut recorder = None;
    let _server = match viz {
        Some(port) => {
            let hub = TelemetryHub::new();
            let server = VizServer::start(SocketAddr::from(([127, 0, 0, 1], port)), hub.clone())?;
            eprintln!("viz on http://{}", server.local_addr());
            recorder = Some(TelemetryRecorder::new(hub));
            Some(server)
        }
        None => None,
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for i in 0..args.episodes {
        let summary = run_episode(&mut env, agent.as_mut(), i, args.seed + i as u64, &mut |ev| {
            if let Some(r) = recorder.as_mut() {
                r.on_step(ev);
            }
        })?;
        writeln!(out, "{}", outcome_line(&summary))?;
    }
    Ok(())
}

fn pct(m: lanesim::env::MeanSe) -> String {
    format!("{:.2}% ± {:.2}%", m.mean, m.se)
}

fn print_metrics(task: &str, eval: &Evaluation, format: Format, out: &mut dyn Write) -> io::Result<()> {
    let m = &eval.metrics;
    match format {
        Format::Table => {
            writeln!(out, "{:<22} {:<20} {:<20} {:<18}", "Task", "Success Rate", "Collision Rate", "Avg. Speed (m/s)")?;
            writeln!(
                out,
                "{:<22} {:<20} {:<20} {:<18}",
                task,
                pct(m.success_rate),
                pct(m.collision_rate),
                format!("{:.2} ± {:.2}", m.avg_speed.mean, m.avg_speed.se)
            )?;
            writeln!(
                out,
                "episodes {}, out of lane {}, timeout {}",
                m.episodes,
                pct(m.out_of_lane_rate),
                pct(m.timeout_rate)
            )
        }
        Format::Csv => {
            writeln!(out, "task,success_rate,success_se,collision_rate,collision_se,avg_speed,avg_speed_se")?;
            writeln!(
                out,
                "{task},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
                m.success_rate.mean,
                m.success_rate.se,
                m.collision_rate.mean,
                m.collision_rate.se,
                m.avg_speed.mean,
                m.avg_speed.se
            )
        }
        Format::Json => {
            let mut v = serde_json::to_value(m).map_err(io::Error::other)?;
            v["task"] = json!(task);
            writeln!(out, "{}", serde_json::to_string_pretty(&v).map_err(io::Error::other)?)
        }
    }
}

fn evaluate_cmd(args: EpisodeArgs, format: Format) -> Result<(), CliError> {
    let (mut env, mut agent) = setup(&args)?;
    let eval = evaluate(&mut env, agent.as_mut(), args.episodes, args.seed, &mut |_| {})?;
    let closure = eval.metrics.rate_sum();
    if (closure - 100.0).abs() > 1e-9 {
        return Err(CliError::Failed(format!("outcome rates sum to {closure}%")));
    }
    print_metrics(&args.task, &eval, format, &mut io::stdout().lock())?;
    Ok(())
}

fn record(args: EpisodeArgs, out: &Path) -> Result<(), CliError> {
    let (mut env, mut agent) = setup(&args)?;
    let mut sink = BufWriter::new(File::create(out)?);
    let logs = record_rollouts(&mut env, agent.as_mut(), args.episodes, args.seed, &mut sink)?;
    sink.flush()?;
    let steps: usize = logs.iter().map(|l| l.steps.len()).sum();
    println!("recorded {} episodes, {steps} steps to {}", logs.len(), out.display());
    Ok(())
}

fn replay_cmd(path: &Path) -> Result<(), CliError> {
    let logs = read_rollouts(BufReader::new(File::open(path)?))?;
    if logs.is_empty() {
        return Err(CliError::Failed(format!("{}: no episodes", path.display())));
    }
    for log in &logs {
        if let Some(m) = replay(log)? {
            return Err(CliError::Failed(format!("replay mismatch: {m}")));
        }
        println!("episode {} seed {}: {} steps match", log.header.episode, log.header.seed, log.steps.len());
    }
    Ok(())
}

fn map_validate(paths: &[PathBuf]) -> Result<(), CliError> {
    let mut docs: Vec<(String, String)> = Vec::new();
    if paths.is_empty() {
        for name in BUILTIN_MAPS {
            docs.push((name.to_string(), builtin_map_source(name).unwrap_or_default().to_string()));
        }
    } else {
        for p in paths {
            docs.push((p.display().to_string(), std::fs::read_to_string(p)?));
        }
    }
    let mut failed = 0;
    for (name, doc) in &docs {
        match load_map(doc) {
            Ok(map) => println!("ok {name}: {} lanes, {} signals", map.lanes().len(), map.signals().len()),
            Err(e) => {
                failed += 1;
                println!("invalid {name}: {e}");
            }
        }
    }
    if failed > 0 {
        return Err(CliError::Failed(format!("{failed} of {} maps invalid", docs.len())));
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { args, viz, serve } => run(args, viz, serve),
        Command::Evaluate { args, format } => evaluate_cmd(args, format),
        Command::Serve { addr } => {
            let listener = std::net::TcpListener::bind(addr)?;
            eprintln!("wire protocol on {}", listener.local_addr()?);
            wire::serve(listener, wire::registry_factory())?;
            Ok(())
        }
        Command::Record { args, out } => record(args, &out),
        Command::Replay { log } => replay_cmd(&log),
        Command::MapValidate { paths } => map_validate(&paths),
        Command::List => {
            println!("tasks: {}", TASK_NAMES.join(", "));
            println!("agents: {}, external", AGENT_NAMES.join(", "));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
