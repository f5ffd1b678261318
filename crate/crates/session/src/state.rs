//! Session state as a fold over events.
//!
//! Events come in two sorts. Primary events (a join, a grasp, a started or
//! finished interaction, a notification, a message, published scores) are
//! checked against the current state and applied. Applying one may make the
//! engine produce follow-up events, such as a collaborative start or the
//! scenario's completion; those are queued and the next events in the log
//! must match them exactly. Advancing the clock queues expirations the same
//! way. Live sessions and replay share this code path, so a log that replays
//! cleanly reproduces the live state.

use std::collections::{BTreeMap, VecDeque};

use cotrain_core::decision::{off_scenario_spec, PedagogicalProfile};
use cotrain_core::dsl::{ActionKind, Scenario};
use cotrain_core::engine::{EngineError, Tick};
use cotrain_core::hands::{apply_after, plan_hands, Hand, HandPlan, HandState};
use cotrain_core::repartition::{score_candidates, CriteriaConfig, Repartition};
use cotrain_core::world::{PossibleInteraction, WorldError};
use cotrain_core::{
    ActionId, Humanoid, HumanoidId, HumanoidKind, Point, RoleName, ScenarioState, WorldState,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::event::{EventKind, SessionEvent};

/// Why an event cannot be applied to the current state.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ApplyError {
    #[error("expected sequence number {expected}, got {found}")]
    Sequence { expected: u64, found: u64 },
    #[error("event at tick {found} precedes the clock at {clock}")]
    ClockRegression { clock: Tick, found: Tick },
    #[error("expected follow-up event {expected}, got {found}")]
    UnexpectedEvent { expected: String, found: String },
    #[error("{0} events cannot appear on their own")]
    DerivedOnly(&'static str),
    #[error("follow-up events missing before tick {0}")]
    MissingFollowUp(Tick),
    #[error("unknown humanoid `{0}`")]
    UnknownHumanoid(HumanoidId),
    #[error("humanoid `{0}` already joined")]
    DuplicateHumanoid(HumanoidId),
    #[error("unknown role `{0}`")]
    UnknownRole(RoleName),
    #[error("role `{role}` is already held by `{holder}`")]
    RoleTaken { role: RoleName, holder: HumanoidId },
    #[error("`{0}` is busy with another action")]
    Busy(HumanoidId),
    #[error("`{humanoid}` is not performing `{action}`")]
    NotPerforming {
        humanoid: HumanoidId,
        action: ActionId,
    },
    #[error("`{action}` is not due before tick {completes_at}")]
    NotDue {
        action: ActionId,
        completes_at: Tick,
    },
    #[error("`{0}` is already under way")]
    InProgress(ActionId),
    #[error("`{0}` cannot be started this way")]
    WrongKind(ActionId),
    #[error("hands of `{humanoid}` are not ready for `{action}`")]
    HandsNotReady {
        humanoid: HumanoidId,
        action: ActionId,
    },
    #[error("completion tick {completes_at} must follow tick {tick}")]
    BadCompletion { tick: Tick, completes_at: Tick },
    #[error("recorded field `{field}` disagrees with the state")]
    Mismatch { field: &'static str },
    #[error("published scores differ from the state's repartition")]
    ScoresDiffer,
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Participant {
    pub kind: HumanoidKind,
    pub profile: Option<PedagogicalProfile>,
}

#[derive(Debug, Clone)]
pub struct SessionState {
    pub scenario: Scenario,
    pub criteria: CriteriaConfig,
    pub world: WorldState,
    pub engine: ScenarioState,
    pub participants: BTreeMap<HumanoidId, Participant>,
    /// Off-scenario interactions under way, by performer.
    pub off_scenario: BTreeMap<HumanoidId, PossibleInteraction>,
    pub tick: Tick,
    pub next_seq: u64,
    pending: VecDeque<EventKind>,
}

#[derive(Serialize)]
struct HashedView<'a> {
    world: &'a WorldState,
    engine: &'a ScenarioState,
    off_scenario: &'a BTreeMap<HumanoidId, PossibleInteraction>,
}

impl SessionState {
    pub fn new(scenario: Scenario, criteria: CriteriaConfig) -> Self {
        Self {
            world: scenario.world.clone(),
            engine: ScenarioState::new(&scenario),
            scenario,
            criteria,
            participants: BTreeMap::new(),
            off_scenario: BTreeMap::new(),
            tick: 0,
            next_seq: 0,
            pending: VecDeque::new(),
        }
    }

    /// Follow-up events the log still owes.
    pub fn pending(&self) -> impl Iterator<Item = &EventKind> {
        self.pending.iter()
    }

    pub fn has_pending(&self) -> bool {
        !self.pending.is_empty()
    }

    /// SHA-256 over the canonical JSON of world, marking and off-scenario
    /// work, hex encoded.
    pub fn hash(&self) -> String {
        let view = HashedView {
            world: &self.world,
            engine: &self.engine,
            off_scenario: &self.off_scenario,
        };
        let bytes = serde_json::to_vec(&view).expect("state serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn is_completed(&self) -> bool {
        self.engine.completed
    }

    /// Humanoid currently performing the action, if any.
    pub fn performer_of(&self, action: &ActionId) -> Option<&HumanoidId> {
        self.world
            .humanoids
            .values()
            .find(|h| {
                h.current_action
                    .as_ref()
                    .is_some_and(|c| &c.action == action)
            })
            .map(|h| &h.id)
    }

    /// Scores of the enabled actions nobody has started yet.
    pub fn available_scores(&self) -> Repartition {
        let mut scores =
            score_candidates(&self.scenario, &self.engine, &self.world, &self.criteria);
        scores.retain(|action, _| self.performer_of(action).is_none());
        scores
    }

    pub fn holder_of(&self, role: &RoleName) -> Option<&HumanoidId> {
        self.world
            .humanoids
            .values()
            .find(|h| h.roles.contains(role))
            .map(|h| &h.id)
    }

    /// Moves the clock forward, queueing the expirations it causes.
    pub fn advance_to(&mut self, tick: Tick) -> Result<(), ApplyError> {
        if tick < self.tick {
            return Err(ApplyError::ClockRegression {
                clock: self.tick,
                found: tick,
            });
        }
        if tick == self.tick {
            return Ok(());
        }
        if !self.pending.is_empty() {
            return Err(ApplyError::MissingFollowUp(tick));
        }
        let events = self.engine.advance_clock(&self.scenario, tick)?;
        self.pending.extend(events.into_iter().map(EventKind::from));
        self.tick = tick;
        Ok(())
    }

    /// Checks and applies one logged event.
    pub fn apply(&mut self, event: &SessionEvent) -> Result<(), ApplyError> {
        if event.seq != self.next_seq {
            return Err(ApplyError::Sequence {
                expected: self.next_seq,
                found: event.seq,
            });
        }
        self.advance_to(event.tick)?;
        if let Some(expected) = self.pending.front() {
            if expected != &event.kind {
                return Err(ApplyError::UnexpectedEvent {
                    expected: expected.name().into(),
                    found: event.kind.name().into(),
                });
            }
            self.pending.pop_front();
        } else {
            let mut trial = self.clone();
            let follow_ups = trial.execute(&event.kind)?;
            trial.pending.extend(follow_ups);
            *self = trial;
        }
        self.next_seq += 1;
        Ok(())
    }

    fn humanoid(&self, id: &HumanoidId) -> Result<&Humanoid, ApplyError> {
        self.world
            .humanoids
            .get(id)
            .ok_or_else(|| ApplyError::UnknownHumanoid(id.clone()))
    }

    fn idle(&self, id: &HumanoidId) -> Result<&Humanoid, ApplyError> {
        let h = self.humanoid(id)?;
        if h.is_idle() {
            Ok(h)
        } else {
            Err(ApplyError::Busy(id.clone()))
        }
    }

    /// The scenario communication a message completes: enabled, not under
    /// way, performable by the sender, same recipient and same words.
    pub fn matching_communication(
        &self,
        from: &HumanoidId,
        to: &RoleName,
        message: &str,
    ) -> Option<ActionId> {
        self.scenario
            .actions
            .values()
            .find_map(|action| match &action.kind {
                ActionKind::Communication {
                    recipient,
                    message: m,
                } if recipient == to
                    && m == message
                    && self.performer_of(&action.id).is_none()
                    && self
                        .engine
                        .check_perform(
                            &self.scenario,
                            &self.world,
                            &action.id,
                            std::slice::from_ref(from),
                        )
                        .is_ok() =>
                {
                    Some(action.id.clone())
                }
                _ => None,
            })
    }

    /// Whether the performer stands in for a role holder listed first.
    pub fn is_assisted(&self, humanoid: &HumanoidId, action: &ActionId) -> bool {
        let (Some(spec), Some(h)) = (
            self.scenario.action(action),
            self.world.humanoids.get(humanoid),
        ) else {
            return false;
        };
        !spec.is_mandatory_for(h)
    }

    fn engine_follow_ups(
        &mut self,
        action: &ActionId,
        performer: &HumanoidId,
    ) -> Result<Vec<EventKind>, ApplyError> {
        let events = self.engine.perform(
            &self.scenario,
            &self.world,
            action,
            std::slice::from_ref(performer),
            self.tick,
        )?;
        Ok(events.into_iter().map(EventKind::from).collect())
    }

    /// Applies a primary event and returns the follow-ups it causes.
    fn execute(&mut self, kind: &EventKind) -> Result<Vec<EventKind>, ApplyError> {
        match kind {
            EventKind::ParticipantJoined {
                humanoid,
                participant,
                abilities,
                profile,
            } => {
                if self.world.humanoids.contains_key(humanoid) {
                    return Err(ApplyError::DuplicateHumanoid(humanoid.clone()));
                }
                let h = Humanoid::new(humanoid.clone(), *participant)
                    .with_abilities(abilities.iter().cloned());
                self.world.add_humanoid(h)?;
                self.participants.insert(
                    humanoid.clone(),
                    Participant {
                        kind: *participant,
                        profile: *profile,
                    },
                );
                Ok(Vec::new())
            }
            EventKind::RoleClaimed { humanoid, role } => {
                let decl = self
                    .scenario
                    .roles
                    .get(role)
                    .ok_or_else(|| ApplyError::UnknownRole(role.clone()))?
                    .clone();
                if let Some(holder) = self.holder_of(role) {
                    return Err(ApplyError::RoleTaken {
                        role: role.clone(),
                        holder: holder.clone(),
                    });
                }
                self.humanoid(humanoid)?;
                let h = self.world.humanoid_mut(humanoid)?;
                h.roles.insert(role.clone());
                h.abilities.extend(decl.abilities.iter().cloned());
                if let Some(position) = decl.position {
                    if h.position == Point::default() {
                        h.position = position;
                    }
                }
                if let Some(hands) = &decl.hands {
                    for hand in Hand::BOTH {
                        if hands.get(hand) == &HandState::Busy
                            && h.hands.get(hand) == &HandState::Free
                        {
                            h.hands.set(hand, HandState::Busy);
                        }
                    }
                }
                Ok(Vec::new())
            }
            EventKind::ImplicitGrasp {
                humanoid,
                hand,
                object,
            } => {
                self.idle(humanoid)?;
                self.world.grasp(humanoid, *hand, object)?;
                Ok(Vec::new())
            }
            EventKind::ImplicitLay {
                humanoid,
                hand,
                object,
            } => {
                self.idle(humanoid)?;
                let laid = self.world.lay(humanoid, *hand)?;
                if &laid != object {
                    return Err(ApplyError::Mismatch { field: "object" });
                }
                Ok(Vec::new())
            }
            EventKind::ActionStarted {
                humanoid,
                action,
                interaction,
                completes_at,
                assisted,
            } => {
                self.idle(humanoid)?;
                if *completes_at <= self.tick {
                    return Err(ApplyError::BadCompletion {
                        tick: self.tick,
                        completes_at: *completes_at,
                    });
                }
                let spec = match interaction {
                    None => {
                        let spec = self
                            .scenario
                            .action(action)
                            .ok_or_else(|| EngineError::UnknownAction(action.clone()))?
                            .clone();
                        let ActionKind::Interaction { relation, target } = &spec.kind else {
                            return Err(ApplyError::WrongKind(action.clone()));
                        };
                        if self.performer_of(action).is_some() {
                            return Err(ApplyError::InProgress(action.clone()));
                        }
                        self.engine.check_perform(
                            &self.scenario,
                            &self.world,
                            action,
                            std::slice::from_ref(humanoid),
                        )?;
                        if *assisted != self.is_assisted(humanoid, action) {
                            return Err(ApplyError::Mismatch { field: "assisted" });
                        }
                        if !self.world.is_possible(relation, humanoid, target) {
                            return Err(WorldError::IllegalInteraction {
                                relation: relation.clone(),
                                actor: humanoid.clone(),
                                target: target.clone(),
                            }
                            .into());
                        }
                        spec.clone()
                    }
                    Some(p) => {
                        let spec = off_scenario_spec(p);
                        if &spec.id != action || *assisted {
                            return Err(ApplyError::Mismatch { field: "action" });
                        }
                        if !self.world.is_possible(&p.relation, humanoid, &p.target) {
                            return Err(WorldError::IllegalInteraction {
                                relation: p.relation.clone(),
                                actor: humanoid.clone(),
                                target: p.target.clone(),
                            }
                            .into());
                        }
                        spec
                    }
                };
                let ready = matches!(plan_hands(&self.world, humanoid, &spec), HandPlan::Feasible(p) if p.steps.is_empty());
                if !ready {
                    return Err(ApplyError::HandsNotReady {
                        humanoid: humanoid.clone(),
                        action: action.clone(),
                    });
                }
                if let Some(p) = interaction {
                    self.off_scenario.insert(humanoid.clone(), p.clone());
                }
                self.world.humanoid_mut(humanoid)?.current_action =
                    Some(cotrain_core::world::CurrentAction {
                        action: action.clone(),
                        completes_at: *completes_at,
                    });
                Ok(Vec::new())
            }
            EventKind::ActionCompleted { action, performers } => {
                let [performer] = performers.as_slice() else {
                    return Err(ApplyError::Mismatch {
                        field: "performers",
                    });
                };
                let current = self.humanoid(performer)?.current_action.clone();
                let Some(current) = current.filter(|c| &c.action == action) else {
                    return Err(ApplyError::NotPerforming {
                        humanoid: performer.clone(),
                        action: action.clone(),
                    });
                };
                if current.completes_at > self.tick {
                    return Err(ApplyError::NotDue {
                        action: action.clone(),
                        completes_at: current.completes_at,
                    });
                }
                let off = self.off_scenario.remove(performer);
                let spec = match &off {
                    Some(p) => off_scenario_spec(p),
                    None => self.scenario.actions[action].clone(),
                };
                if let ActionKind::Interaction { relation, target } = &spec.kind {
                    self.world = self.world.apply_effects(relation, performer, target)?;
                }
                let mirrored = match plan_hands(&self.world, performer, &spec) {
                    HandPlan::Feasible(p) => p.mirrored,
                    HandPlan::Infeasible => false,
                };
                apply_after(&mut self.world, performer, &spec, mirrored)?;
                self.world.humanoid_mut(performer)?.current_action = None;
                if off.is_some() {
                    return Ok(Vec::new());
                }
                let mut follow_ups = self.engine_follow_ups(action, performer)?;
                // The first engine event is this completion itself.
                follow_ups.remove(0);
                Ok(follow_ups)
            }
            EventKind::NotifyIntentRecorded {
                collaborative,
                slot,
                humanoid,
                expires_at,
            } => {
                self.idle(humanoid)?;
                let mut follow_ups = self.engine_follow_ups(slot, humanoid)?;
                let recorded = follow_ups.remove(0);
                let expected = EventKind::NotifyIntentRecorded {
                    collaborative: collaborative.clone(),
                    slot: slot.clone(),
                    humanoid: humanoid.clone(),
                    expires_at: *expires_at,
                };
                if recorded != expected {
                    return Err(ApplyError::Mismatch {
                        field: "notification",
                    });
                }
                Ok(follow_ups)
            }
            EventKind::CommunicationSent {
                from,
                to,
                message,
                action,
            } => {
                self.idle(from)?;
                if !self.scenario.roles.contains_key(to) {
                    return Err(ApplyError::UnknownRole(to.clone()));
                }
                if action != &self.matching_communication(from, to, message) {
                    return Err(ApplyError::Mismatch { field: "action" });
                }
                match action {
                    Some(action) => self.engine_follow_ups(action, from),
                    None => Ok(Vec::new()),
                }
            }
            EventKind::ScoresPublished { scores } => {
                if scores != &self.available_scores() {
                    return Err(ApplyError::ScoresDiffer);
                }
                Ok(Vec::new())
            }
            EventKind::NotificationExpired { .. }
            | EventKind::CollaborativeStarted { .. }
            | EventKind::ScenarioCompleted {} => Err(ApplyError::DerivedOnly(kind.name())),
        }
    }
}
