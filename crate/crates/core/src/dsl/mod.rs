//! The scenario language.
//!
//! A scenario file is line oriented and split into four sections:
//!
//! ```text
//! scenario "dark screw"
//!
//! WORLD
//! object plate name="cover plate" abilities=holdable at=1,0
//! object screwdriver abilities=screwdriver-like at=0.5,0
//! relation unscrew actor=can-unscrew target=unscrewable tool=screwdriver-like effects=-screwed
//!
//! ROLES
//! role worker1 abilities=can-unscrew,can-hold at=0,0 hands=busy,free
//!
//! ACTIONS
//! action hold-plate interact relation=hold target=plate roles=worker1:1,ANYONE:2 hands=free,any->busy,any
//!
//! GRAPH
//! step s1 action=hold-plate initial
//! step done terminal
//! transition s1 -> done
//! ```
//!
//! Everything after `#` is a comment. Attribute values containing spaces
//! are double quoted, with `\"`, `\\` and `\n` escapes. Timeouts are in
//! engine ticks and a notification expires when the clock reaches
//! `notify tick + timeout`.

mod model;
mod parser;
mod serializer;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use model::{
    ActionKind, ActionSpec, HandReq, HandReqPair, HandRequirement, HoldSpec, RoleDecl, RoleRef,
    RoleSpec, Scenario, ScenarioGraph, Step, Transition,
};
pub use parser::{parse, ParseError, Parsed, SourceMap};
pub use serializer::serialize;
pub use validate::{check_structure, validate_static};

/// Role token standing for any participant with the required abilities.
pub const ANYONE: &str = "ANYONE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Location {
    pub line: usize,
    pub column: usize,
}

impl Location {
    pub fn new(line: usize, column: usize) -> Self {
        Self { line, column }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Code {
    EmptyScenario,
    Syntax,
    DuplicateId,
    UnknownObject,
    UnknownRelation,
    UnknownAction,
    UnknownStep,
    DanglingNotify,
    CollabArity,
    CollabJoin,
    BadTimeout,
    NoRoles,
    BadPriority,
    NoInitial,
    NoTerminal,
    TerminalStep,
    StepWithoutAction,
    DeadEnd,
    ActionReused,
    TransitionOverlap,
    StepConflict,
    UnreachableStep,
    UnboundRole,
    UnusedAction,
    BlockingSequence,
}

impl Code {
    pub fn as_str(self) -> &'static str {
        match self {
            Code::EmptyScenario => "E_EMPTY_SCENARIO",
            Code::Syntax => "E_SYNTAX",
            Code::DuplicateId => "E_DUPLICATE_ID",
            Code::UnknownObject => "E_UNKNOWN_OBJECT",
            Code::UnknownRelation => "E_UNKNOWN_RELATION",
            Code::UnknownAction => "E_UNKNOWN_ACTION",
            Code::UnknownStep => "E_UNKNOWN_STEP",
            Code::DanglingNotify => "E_DANGLING_NOTIFY",
            Code::CollabArity => "E_COLLAB_ARITY",
            Code::CollabJoin => "E_COLLAB_JOIN",
            Code::BadTimeout => "E_BAD_TIMEOUT",
            Code::NoRoles => "E_NO_ROLES",
            Code::BadPriority => "E_BAD_PRIORITY",
            Code::NoInitial => "E_NO_INITIAL",
            Code::NoTerminal => "E_NO_TERMINAL",
            Code::TerminalStep => "E_TERMINAL_STEP",
            Code::StepWithoutAction => "E_STEP_WITHOUT_ACTION",
            Code::DeadEnd => "E_DEAD_END",
            Code::ActionReused => "E_ACTION_REUSED",
            Code::TransitionOverlap => "E_TRANSITION_OVERLAP",
            Code::StepConflict => "E_STEP_CONFLICT",
            Code::UnreachableStep => "E_UNREACHABLE_STEP",
            Code::UnboundRole => "W_UNBOUND_ROLE",
            Code::UnusedAction => "W_UNUSED_ACTION",
            Code::BlockingSequence => "W_BLOCKING_SEQUENCE",
        }
    }

    pub fn severity(self) -> Severity {
        if self.as_str().starts_with("W_") {
            Severity::Warning
        } else {
            Severity::Error
        }
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: Code,
    pub severity: Severity,
    pub location: Option<Location>,
    pub message: String,
}

impl Diagnostic {
    pub fn new(code: Code, location: Option<Location>, message: impl Into<String>) -> Self {
        Self {
            code,
            severity: code.severity(),
            location,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

/// One tab-separated record: code, severity, location, message.
impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let location = self
            .location
            .map_or_else(|| "-".to_string(), |l| l.to_string());
        write!(
            f,
            "{}\t{}\t{}\t{}",
            self.code,
            self.severity,
            location,
            self.message.replace(['\t', '\n'], " ")
        )
    }
}

/// Orders diagnostics by location (unlocated last), then code, then message.
pub(crate) fn sort_diagnostics(diagnostics: &mut [Diagnostic]) {
    diagnostics.sort_by(|a, b| {
        let key = |d: &Diagnostic| (d.location.is_none(), d.location, d.code, d.message.clone());
        key(a).cmp(&key(b))
    });
}
