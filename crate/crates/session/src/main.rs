//! `cotrain`: host, batch-run, replay and check training scenarios.
//!
//! Exit codes: 0 on success, 1 when a replay diverges or a run fails,
//! 2 on invalid input (scenario, configs, arguments), 3 when the port
//! cannot be bound.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use cotrain_core::dsl::{parse, validate_static, Scenario};
use cotrain_core::repartition::CriteriaConfig;
use cotrain_session::batch::{run_batch, BatchConfig};
use cotrain_session::config::AgentsConfig;
use cotrain_session::log::replay_text;
use cotrain_session::server::{Server, ServerConfig};

#[derive(Parser)]
#[command(
    name = "cotrain",
    version,
    about = "Collaborative procedure training sessions"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Host a live session over TCP and WebSocket.
    Serve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        agents: Option<PathBuf>,
        #[arg(long)]
        criteria: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 7070)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 100)]
        tick_ms: u64,
        /// Shared secret every join must present.
        #[arg(long)]
        token: Option<String>,
        /// Event log to write (JSONL).
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        max_ticks: Option<u64>,
    },
    /// Run the scenario many times with virtual humans only.
    Batch {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        agents: Option<PathBuf>,
        #[arg(long)]
        criteria: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long)]
        max_ticks: Option<u64>,
        /// Report file; printed to stdout when absent.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Directory receiving one event log per run.
        #[arg(long)]
        logs: Option<PathBuf>,
    },
    /// Replay an event log and check its final state hash.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
    /// Parse and statically check a scenario.
    Check {
        #[arg(long)]
        scenario: PathBuf,
    },
}

/// Failure with its exit code.
struct Failure(u8, String);

fn invalid(message: impl Into<String>) -> Failure {
    Failure(2, message.into())
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

/// Parses and checks a scenario; errors abort, warnings go to stderr.
fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    let parsed = parse(&read(path)?).map_err(|e| invalid(format!("{}:\n{e}", path.display())))?;
    let diagnostics = validate_static(&parsed.scenario, Some(&parsed.source_map));
    for d in &diagnostics {
        eprintln!("{}: {d}", path.display());
    }
    if diagnostics.iter().any(|d| d.is_error()) {
        return Err(invalid(format!("{} has errors", path.display())));
    }
    Ok(parsed.scenario)
}

fn load_agents(path: Option<&PathBuf>) -> Result<AgentsConfig, Failure> {
    match path {
        Some(p) => {
            AgentsConfig::from_toml(&read(p)?).map_err(|e| invalid(format!("{}: {e}", p.display())))
        }
        None => Ok(AgentsConfig::default()),
    }
}

fn load_criteria(path: Option<&PathBuf>) -> Result<CriteriaConfig, Failure> {
    match path {
        Some(p) => CriteriaConfig::from_toml(&read(p)?)
            .map_err(|e| invalid(format!("{}: {e}", p.display()))),
        None => Ok(CriteriaConfig::default()),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Cmd::Check { scenario } => {
            let scenario = load_scenario(&scenario)?;
            println!(
                "ok: \"{}\" with {} roles, {} actions, {} steps",
                scenario.name,
                scenario.roles.len(),
                scenario.actions.len(),
                scenario.graph.steps.len()
            );
            Ok(())
        }
        Cmd::Replay { log } => {
            let report = replay_text(&read(&log)?).map_err(|e| Failure(1, e.to_string()))?;
            println!(
                "replayed {} events to tick {}{}",
                report.events,
                report.tick,
                if report.completed {
                    ", scenario completed"
                } else {
                    ""
                }
            );
            println!("final hash {}", report.final_hash);
            if report.truncated {
                println!("log has no footer: treated as truncated, hash not checked");
            } else {
                println!("matches the recorded hash");
            }
            Ok(())
        }
        Cmd::Batch {
            scenario,
            agents,
            criteria,
            seed,
            runs,
            max_ticks,
            report,
            logs,
        } => {
            let scenario = load_scenario(&scenario)?;
            let agents = load_agents(agents.as_ref())?;
            let criteria = load_criteria(criteria.as_ref())?;
            let config = BatchConfig {
                runs,
                seed,
                max_ticks,
            };
            let outcome = run_batch(&scenario, &criteria, &agents, &config)
                .map_err(|e| invalid(e.to_string()))?;
            if let Some(dir) = logs {
                std::fs::create_dir_all(&dir)
                    .map_err(|e| Failure(1, format!("{}: {e}", dir.display())))?;
                for run in &outcome.runs {
                    let path = dir.join(format!("run-{:03}.events", run.run));
                    std::fs::write(&path, run.log.to_jsonl())
                        .map_err(|e| Failure(1, format!("{}: {e}", path.display())))?;
                }
            }
            let text = outcome.render();
            match report {
                Some(path) => std::fs::write(&path, text)
                    .map_err(|e| Failure(1, format!("{}: {e}", path.display()))),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Cmd::Serve {
            scenario,
            agents,
            criteria,
            seed,
            port,
            host,
            tick_ms,
            token,
            log,
            max_ticks,
        } => {
            let scenario = load_scenario(&scenario)?;
            let agents = load_agents(agents.as_ref())?;
            let criteria = load_criteria(criteria.as_ref())?;
            agents
                .plans(&scenario)
                .map_err(|e| invalid(e.to_string()))?;
            criteria.validate().map_err(|e| invalid(e.to_string()))?;
            if tick_ms == 0 {
                return Err(invalid("--tick-ms must be positive"));
            }
            let server =
                Server::bind((host.as_str(), port)).map_err(|e| Failure(3, e.to_string()))?;
            eprintln!(
                "listening on {} (TCP frames and WebSocket)",
                server.local_addr()
            );
            let outcome = server
                .run(ServerConfig {
                    scenario,
                    criteria,
                    agents,
                    seed,
                    tick: Duration::from_millis(tick_ms),
                    token,
                    log_path: log,
                    max_ticks,
                })
                .map_err(|e| Failure(1, e.to_string()))?;
            println!(
                "finished at tick {}{}, {} events, final hash {}",
                outcome.tick,
                if outcome.completed {
                    " (completed)"
                } else {
                    ""
                },
                outcome.events,
                outcome.final_hash
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
