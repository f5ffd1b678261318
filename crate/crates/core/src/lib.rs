//! Core model for collaborative procedure training.
//!
//! A scenario is a Grafcet-style graph of steps whose actions list the roles
//! allowed to perform them. Humanoids (trainee avatars and virtual humans)
//! act inside a world of behavioral objects. The modules here cover the
//! whole pipeline that sits between a parsed scenario and a running session:
//!
//! - [`world`]: behavioral objects, relations and the interaction engine.
//! - [`dsl`]: the text scenario language, its serializer and static checks.
//! - [`engine`]: token marking, collaborative synchronization and timeouts.
//! - [`hands`]: hand states, implicit grasp/lay planning and blocking lookahead.
//! - [`repartition`]: weighted candidate scoring per enabled action.
//! - [`decision`]: the virtual human's collect / tag / select loop.

pub mod decision;
pub mod dsl;
pub mod engine;
pub mod hands;
pub mod ids;
pub mod repartition;
pub mod world;

pub use dsl::{parse, serialize, validate_static, Diagnostic, Scenario, Severity};
pub use engine::{EngineEvent, ScenarioState};
pub use ids::{Ability, ActionId, HumanoidId, ObjectId, RoleName, StepId};
pub use world::{Humanoid, HumanoidKind, Point, WorldState};

/// Default number of future actions explored by the blocking lookahead.
pub const DEFAULT_LOOKAHEAD_DEPTH: usize = 4;
