//! JSONL event logs and their replay.
//!
//! A log is a header line, one line per event and a footer line:
//!
//! ```text
//! {"type":"header","format":"cotrain-events/1","scenario":"...","scenario_sha256":"...","seed":7,...}
//! {"type":"event","seq":0,"tick":0,"kind":"participant_joined",...}
//! {"type":"footer","final_hash":"...","tick":7,"events":28}
//! ```
//!
//! The header carries the scenario in canonical text form, so a log replays
//! without the original files. A log without a footer is treated as
//! truncated: its last line may be cut short, and replay reports the hash of
//! the state reached.

use cotrain_core::dsl::{parse, serialize, ParseError};
use cotrain_core::engine::Tick;
use cotrain_core::repartition::CriteriaConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::AgentsConfig;
use crate::event::SessionEvent;
use crate::session::Session;
use crate::state::{ApplyError, SessionState};

pub const LOG_FORMAT: &str = "cotrain-events/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    /// Canonical text of the scenario.
    pub scenario: String,
    pub scenario_sha256: String,
    pub seed: u64,
    pub criteria: CriteriaConfig,
    pub agents: AgentsConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogFooter {
    pub final_hash: String,
    pub tick: Tick,
    pub events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header(LogHeader),
    Event(SessionEvent),
    Footer(LogFooter),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub header: LogHeader,
    pub events: Vec<SessionEvent>,
    pub footer: Option<LogFooter>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LogError {
    #[error("log is empty")]
    Empty,
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line 1 is not a log header")]
    MissingHeader,
    #[error("unsupported log format `{0}`")]
    Format(String),
    #[error("line {0}: unexpected header")]
    ExtraHeader(usize),
    #[error("line {0}: content after the footer")]
    AfterFooter(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("embedded scenario does not parse: {0}")]
    Scenario(#[from] ParseError),
    #[error("scenario digest {recorded} does not match its text ({computed})")]
    ScenarioDigest { recorded: String, computed: String },
    #[error("diverged at event {seq}: {source}")]
    Divergence { seq: u64, source: ApplyError },
    #[error("footer counts {recorded} events, log has {found}")]
    EventCount { recorded: u64, found: u64 },
    #[error("final hash {computed} differs from recorded {recorded}")]
    HashMismatch { recorded: String, computed: String },
}

/// What a replay reached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub events: u64,
    pub tick: Tick,
    pub final_hash: String,
    pub completed: bool,
    /// No footer: the log stops early and the hash was not checked.
    pub truncated: bool,
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl EventLog {
    /// The full log of a session, footer included.
    pub fn from_session(session: &Session) -> Self {
        let scenario = serialize(session.scenario());
        EventLog {
            header: LogHeader {
                format: LOG_FORMAT.into(),
                scenario_sha256: sha256_hex(&scenario),
                scenario,
                seed: session.seed(),
                criteria: session.criteria().clone(),
                agents: session.agents_config().clone(),
            },
            events: session.events().to_vec(),
            footer: Some(LogFooter {
                final_hash: session.hash(),
                tick: session.tick(),
                events: session.events().len() as u64,
            }),
        }
    }

    pub fn header_line(header: &LogHeader) -> String {
        line(&Line::Header(header.clone()))
    }

    pub fn event_line(event: &SessionEvent) -> String {
        line(&Line::Event(event.clone()))
    }

    pub fn footer_line(footer: &LogFooter) -> String {
        line(&Line::Footer(footer.clone()))
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = Self::header_line(&self.header);
        for event in &self.events {
            out.push_str(&Self::event_line(event));
        }
        if let Some(footer) = &self.footer {
            out.push_str(&Self::footer_line(footer));
        }
        out
    }

    /// Parses a log. Without a footer, an unparseable last line is taken to
    /// be cut short and dropped.
    pub fn parse(text: &str) -> Result<Self, LogError> {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty())
            .collect();
        let Some(&(_, first)) = lines.first() else {
            return Err(LogError::Empty);
        };
        let header = match serde_json::from_str::<Line>(first) {
            Ok(Line::Header(h)) => h,
            Ok(_) => return Err(LogError::MissingHeader),
            Err(e) => {
                return Err(LogError::Syntax {
                    line: 1,
                    message: e.to_string(),
                })
            }
        };
        if header.format != LOG_FORMAT {
            return Err(LogError::Format(header.format));
        }
        let mut events = Vec::new();
        let mut footer = None;
        let last = lines.len() - 1;
        for (index, &(number, text)) in lines.iter().enumerate().skip(1) {
            if footer.is_some() {
                return Err(LogError::AfterFooter(number));
            }
            match serde_json::from_str::<Line>(text) {
                Ok(Line::Event(e)) => events.push(e),
                Ok(Line::Footer(f)) => footer = Some(f),
                Ok(Line::Header(_)) => return Err(LogError::ExtraHeader(number)),
                Err(_) if index == last => break,
                Err(e) => {
                    return Err(LogError::Syntax {
                        line: number,
                        message: e.to_string(),
                    })
                }
            }
        }
        Ok(EventLog {
            header,
            events,
            footer,
        })
    }

    /// Rebuilds the session state from the events alone.
    pub fn replay(&self) -> Result<(SessionState, ReplayReport), ReplayError> {
        let computed = sha256_hex(&self.header.scenario);
        if computed != self.header.scenario_sha256 {
            return Err(ReplayError::ScenarioDigest {
                recorded: self.header.scenario_sha256.clone(),
                computed,
            });
        }
        let scenario = parse(&self.header.scenario)?.scenario;
        let mut state = SessionState::new(scenario, self.header.criteria.clone());
        for event in &self.events {
            state
                .apply(event)
                .map_err(|source| ReplayError::Divergence {
                    seq: event.seq,
                    source,
                })?;
        }
        let count = self.events.len() as u64;
        let Some(footer) = &self.footer else {
            return Ok(report(state, count, true));
        };
        if footer.events != count {
            return Err(ReplayError::EventCount {
                recorded: footer.events,
                found: count,
            });
        }
        let owed = |state: &SessionState| match state.pending().next() {
            Some(kind) => Err(ReplayError::Divergence {
                seq: count,
                source: ApplyError::UnexpectedEvent {
                    expected: kind.name().into(),
                    found: "end of log".into(),
                },
            }),
            None => Ok(()),
        };
        owed(&state)?;
        state
            .advance_to(footer.tick)
            .map_err(|source| ReplayError::Divergence { seq: count, source })?;
        owed(&state)?;
        let computed = state.hash();
        if computed != footer.final_hash {
            return Err(ReplayError::HashMismatch {
                recorded: footer.final_hash.clone(),
                computed,
            });
        }
        Ok(report(state, count, false))
    }
}

fn report(state: SessionState, events: u64, truncated: bool) -> (SessionState, ReplayReport) {
    let report = ReplayReport {
        events,
        tick: state.tick,
        final_hash: state.hash(),
        completed: state.is_completed(),
        truncated,
    };
    (state, report)
}

fn line(value: &Line) -> String {
    let mut out = serde_json::to_string(value).expect("log lines serialize");
    out.push('\n');
    out
}

/// Parses and replays a log in one go.
pub fn replay_text(text: &str) -> Result<ReplayReport, ReplayError> {
    Ok(EventLog::parse(text)?.replay()?.1)
}
