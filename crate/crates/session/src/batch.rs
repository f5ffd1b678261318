//! Batch mode: many all-virtual runs of one scenario and a summary report.
//!
//! Run `i` uses seed `seed + i`. Each run stops when the scenario completes
//! or after `max_ticks` ticks.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use cotrain_core::dsl::Scenario;
use cotrain_core::engine::Tick;
use cotrain_core::repartition::CriteriaConfig;
use cotrain_core::{ActionId, HumanoidId};
use serde::{Deserialize, Serialize};

use crate::config::AgentsConfig;
use crate::event::EventKind;
use crate::log::EventLog;
use crate::session::{Session, SetupError};

/// Tick budget per scenario step when none is given.
pub const TICKS_PER_STEP: Tick = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub runs: usize,
    pub seed: u64,
    /// Defaults to [`TICKS_PER_STEP`] times the number of steps.
    pub max_ticks: Option<Tick>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub completed: bool,
    pub final_tick: Tick,
    pub final_hash: String,
    pub log: EventLog,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionStats {
    /// Runs in which the action completed, by performer set.
    pub performers: BTreeMap<String, usize>,
    pub completions: usize,
    pub tick_sum: u64,
}

impl ActionStats {
    pub fn mean_tick(&self) -> Option<f64> {
        (self.completions > 0).then(|| self.tick_sum as f64 / self.completions as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchReport {
    pub scenario: String,
    pub runs: Vec<RunResult>,
    pub actions: BTreeMap<ActionId, ActionStats>,
}

pub fn run_batch(
    scenario: &Scenario,
    criteria: &CriteriaConfig,
    agents: &AgentsConfig,
    config: &BatchConfig,
) -> Result<BatchReport, SetupError> {
    let max_ticks = config
        .max_ticks
        .unwrap_or(TICKS_PER_STEP * scenario.graph.steps.len().max(1) as Tick);
    let mut actions: BTreeMap<ActionId, ActionStats> = scenario
        .actions
        .keys()
        .map(|a| (a.clone(), ActionStats::default()))
        .collect();
    let mut runs = Vec::with_capacity(config.runs);
    for run in 0..config.runs {
        let seed = config.seed.wrapping_add(run as u64);
        let mut session = Session::new(scenario.clone(), criteria.clone(), agents, seed, &[])?;
        let completed = session.run(max_ticks);
        for event in session.events() {
            if let EventKind::ActionCompleted { action, performers } = &event.kind {
                if let Some(stats) = actions.get_mut(action) {
                    *stats
                        .performers
                        .entry(performer_key(performers))
                        .or_default() += 1;
                    stats.completions += 1;
                    stats.tick_sum += event.tick;
                }
            }
        }
        runs.push(RunResult {
            run,
            seed,
            completed,
            final_tick: session.tick(),
            final_hash: session.hash(),
            log: EventLog::from_session(&session),
        });
    }
    Ok(BatchReport {
        scenario: scenario.name.clone(),
        runs,
        actions,
    })
}

fn performer_key(performers: &[HumanoidId]) -> String {
    performers
        .iter()
        .map(|h| h.as_str())
        .collect::<Vec<_>>()
        .join("+")
}

impl BatchReport {
    pub fn completed(&self) -> usize {
        self.runs.iter().filter(|r| r.completed).count()
    }

    /// Mean final tick over completed runs.
    pub fn mean_completion_tick(&self) -> Option<f64> {
        let done: Vec<_> = self.runs.iter().filter(|r| r.completed).collect();
        (!done.is_empty())
            .then(|| done.iter().map(|r| r.final_tick as f64).sum::<f64>() / done.len() as f64)
    }

    /// Plain-text tables: one summary line, then per-action performers.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scenario   {}", self.scenario);
        let _ = writeln!(out, "runs       {}", self.runs.len());
        let _ = writeln!(out, "completed  {}", self.completed());
        let _ = writeln!(
            out,
            "mean ticks {}",
            self.mean_completion_tick()
                .map_or("-".into(), |t| format!("{t:.2}"))
        );
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<28} {:>6} {:>10}  performers",
            "action", "done", "mean tick"
        );
        for (action, stats) in &self.actions {
            let performers = stats
                .performers
                .iter()
                .map(|(who, n)| format!("{who}={n}"))
                .collect::<Vec<_>>()
                .join(" ");
            let _ = writeln!(
                out,
                "{:<28} {:>6} {:>10}  {}",
                action.as_str(),
                stats.completions,
                stats.mean_tick().map_or("-".into(), |t| format!("{t:.2}")),
                performers
            );
        }
        out
    }
}
