//! Session host for collaborative procedure training.
//!
//! - [`event`]: the event record and its JSON shape.
//! - [`state`]: session state as a checked fold over events.
//! - [`config`]: agents configuration and casting plans.
//! - [`session`]: casting, the tick loop and participant commands.
//! - [`log`]: JSONL event logs and replay.
//! - [`batch`]: many all-virtual runs and their report.
//! - [`protocol`]: client and server messages and their framing.
//! - [`server`]: the TCP and WebSocket host.

pub mod batch;
pub mod config;
pub mod event;
pub mod log;
pub mod protocol;
pub mod server;
pub mod session;
pub mod state;
