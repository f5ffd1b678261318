//! Token-marking execution of a scenario graph.
//!
//! A marked step whose action is not yet done offers that action. Once the
//! action completes, the step is flagged done; a transition fires when all
//! of its from-steps are marked and done, moving the tokens to its to-steps.
//!
//! Collaborative actions are never performed directly. Each participant
//! performs one notification slot; the notification steps join into the
//! collaborative step, so the last notification fires the join and the
//! collaborative action starts and completes in the same tick. A pending
//! notification expires when the clock reaches `notify tick + timeout`,
//! which clears only that notification and offers its slot again.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{ActionKind, RoleSpec, Scenario};
use crate::ids::{ActionId, HumanoidId, StepId};
use crate::world::WorldState;

pub type Tick = u64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("action `{0}` is not enabled")]
    ActionNotEnabled(ActionId),
    #[error("unknown action `{0}`")]
    UnknownAction(ActionId),
    #[error("`{humanoid}` may not perform `{action}`")]
    RoleNotAllowed {
        action: ActionId,
        humanoid: HumanoidId,
    },
    #[error("`{0}` needs exactly one performer")]
    PerformerCount(ActionId),
    #[error("`{humanoid}` already notified for `{collaborative}`")]
    AlreadyNotified {
        collaborative: ActionId,
        humanoid: HumanoidId,
    },
    #[error("clock cannot go back from {current} to {requested}")]
    ClockRegression { current: Tick, requested: Tick },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingNotification {
    pub slot: ActionId,
    pub humanoid: HumanoidId,
    pub notified_at: Tick,
    pub expires_at: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletedAction {
    pub tick: Tick,
    pub seq: u64,
    pub action: ActionId,
    pub performers: Vec<HumanoidId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EngineEvent {
    NotificationRecorded {
        tick: Tick,
        collaborative: ActionId,
        slot: ActionId,
        humanoid: HumanoidId,
        expires_at: Tick,
    },
    NotificationExpired {
        tick: Tick,
        collaborative: ActionId,
        slot: ActionId,
        humanoid: HumanoidId,
    },
    CollaborativeStarted {
        tick: Tick,
        action: ActionId,
        performers: Vec<HumanoidId>,
    },
    ActionCompleted {
        tick: Tick,
        action: ActionId,
        performers: Vec<HumanoidId>,
    },
    ScenarioCompleted {
        tick: Tick,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScenarioState {
    pub marked_steps: BTreeSet<StepId>,
    /// Marked steps whose action completed while their outgoing transition
    /// still waits on other branches.
    pub done_steps: BTreeSet<StepId>,
    /// Collaborative action id to its pending notifications, keyed by slot.
    pub pending_notifications: BTreeMap<ActionId, BTreeMap<ActionId, PendingNotification>>,
    pub completed_actions: Vec<CompletedAction>,
    pub clock: Tick,
    pub completed: bool,
}

/// Actions offered by the current marking, sorted by action id, with the
/// roles allowed to perform them.
pub fn enabled_actions(
    state: &ScenarioState,
    scenario: &Scenario,
) -> Vec<(ActionId, Vec<RoleSpec>)> {
    let mut out: Vec<(ActionId, Vec<RoleSpec>)> = state
        .marked_steps
        .iter()
        .filter(|s| !state.done_steps.contains(*s))
        .filter_map(|s| scenario.action_at(s))
        .filter(|a| !matches!(a.kind, ActionKind::Collaborative { .. }))
        .map(|a| (a.id.clone(), a.roles.clone()))
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

impl ScenarioState {
    pub fn new(scenario: &Scenario) -> Self {
        Self {
            marked_steps: scenario.graph.initial_steps(),
            ..Self::default()
        }
    }

    pub fn is_enabled(&self, scenario: &Scenario, action: &ActionId) -> bool {
        let Some(step) = scenario.graph.step_of(action) else {
            return false;
        };
        self.marked_steps.contains(step)
            && !self.done_steps.contains(step)
            && !matches!(
                scenario.action(action).map(|a| &a.kind),
                Some(ActionKind::Collaborative { .. }) | None
            )
    }

    /// Every check `perform` makes, without changing anything.
    pub fn check_perform(
        &self,
        scenario: &Scenario,
        world: &WorldState,
        action: &ActionId,
        performers: &[HumanoidId],
    ) -> Result<(), EngineError> {
        let spec = scenario
            .action(action)
            .ok_or_else(|| EngineError::UnknownAction(action.clone()))?;
        if !self.is_enabled(scenario, action) {
            return Err(EngineError::ActionNotEnabled(action.clone()));
        }
        if performers.len() != 1 {
            return Err(EngineError::PerformerCount(action.clone()));
        }
        let humanoid = &performers[0];
        let allowed = world
            .humanoids
            .get(humanoid)
            .is_some_and(|h| spec.priority_for(h, world).is_some());
        if !allowed {
            return Err(EngineError::RoleNotAllowed {
                action: action.clone(),
                humanoid: humanoid.clone(),
            });
        }
        if let ActionKind::NotifyIntent { collaborative } = &spec.kind {
            let already = self
                .pending_notifications
                .get(collaborative)
                .is_some_and(|p| p.values().any(|n| &n.humanoid == humanoid));
            if already {
                return Err(EngineError::AlreadyNotified {
                    collaborative: collaborative.clone(),
                    humanoid: humanoid.clone(),
                });
            }
        }
        Ok(())
    }

    /// Moves the clock to `tick`, expiring every notification whose expiry
    /// is at or before it.
    pub fn advance_clock(
        &mut self,
        scenario: &Scenario,
        tick: Tick,
    ) -> Result<Vec<EngineEvent>, EngineError> {
        if tick < self.clock {
            return Err(EngineError::ClockRegression {
                current: self.clock,
                requested: tick,
            });
        }
        self.clock = tick;
        let mut events = Vec::new();
        for (collaborative, pending) in &mut self.pending_notifications {
            let expired: Vec<ActionId> = pending
                .values()
                .filter(|n| n.expires_at <= tick)
                .map(|n| n.slot.clone())
                .collect();
            for slot in expired {
                let notification = pending.remove(&slot).expect("listed above");
                if let Some(step) = scenario.graph.step_of(&slot) {
                    self.done_steps.remove(step);
                }
                events.push(EngineEvent::NotificationExpired {
                    tick,
                    collaborative: collaborative.clone(),
                    slot,
                    humanoid: notification.humanoid,
                });
            }
        }
        self.pending_notifications.retain(|_, p| !p.is_empty());
        Ok(events)
    }

    /// Completes an action: the step is flagged done, transitions fire and
    /// collaborative actions whose notifications are all in start at once.
    pub fn perform(
        &mut self,
        scenario: &Scenario,
        world: &WorldState,
        action: &ActionId,
        performers: &[HumanoidId],
        tick: Tick,
    ) -> Result<Vec<EngineEvent>, EngineError> {
        if tick < self.clock {
            return Err(EngineError::ClockRegression {
                current: self.clock,
                requested: tick,
            });
        }
        let mut trial = self.clone();
        let mut events = trial.advance_clock(scenario, tick)?;
        trial.check_perform(scenario, world, action, performers)?;

        let spec = &scenario.actions[action];
        if let ActionKind::NotifyIntent { collaborative } = &spec.kind {
            let timeout = match scenario.action(collaborative).map(|a| &a.kind) {
                Some(ActionKind::Collaborative { timeout_ticks, .. }) => Tick::from(*timeout_ticks),
                _ => 0,
            };
            let expires_at = tick + timeout.max(1);
            trial
                .pending_notifications
                .entry(collaborative.clone())
                .or_default()
                .insert(
                    action.clone(),
                    PendingNotification {
                        slot: action.clone(),
                        humanoid: performers[0].clone(),
                        notified_at: tick,
                        expires_at,
                    },
                );
            events.push(EngineEvent::NotificationRecorded {
                tick,
                collaborative: collaborative.clone(),
                slot: action.clone(),
                humanoid: performers[0].clone(),
                expires_at,
            });
        }
        trial.complete(scenario, action, performers.to_vec(), &mut events);
        *self = trial;
        Ok(events)
    }

    fn complete(
        &mut self,
        scenario: &Scenario,
        action: &ActionId,
        performers: Vec<HumanoidId>,
        events: &mut Vec<EngineEvent>,
    ) {
        let tick = self.clock;
        let step = scenario
            .graph
            .step_of(action)
            .expect("enabled action has a step")
            .clone();
        self.done_steps.insert(step);
        self.completed_actions.push(CompletedAction {
            tick,
            seq: self.completed_actions.len() as u64,
            action: action.clone(),
            performers: performers.clone(),
        });
        events.push(EngineEvent::ActionCompleted {
            tick,
            action: action.clone(),
            performers,
        });
        self.fire_transitions(scenario, events);
    }

    fn fire_transitions(&mut self, scenario: &Scenario, events: &mut Vec<EngineEvent>) {
        loop {
            let ready = scenario.graph.transitions.iter().find(|t| {
                t.from
                    .iter()
                    .all(|s| self.marked_steps.contains(s) && self.done_steps.contains(s))
            });
            let Some(transition) = ready else { break };
            for step in &transition.from {
                self.marked_steps.remove(step);
                self.done_steps.remove(step);
            }
            self.marked_steps.extend(transition.to.iter().cloned());

            let started: Vec<ActionId> = transition
                .to
                .iter()
                .filter_map(|s| scenario.action_at(s))
                .filter(|a| matches!(a.kind, ActionKind::Collaborative { .. }))
                .map(|a| a.id.clone())
                .collect();
            for collaborative in started {
                let performers: Vec<HumanoidId> = self
                    .pending_notifications
                    .remove(&collaborative)
                    .map(|p| p.into_values().map(|n| n.humanoid).collect())
                    .unwrap_or_default();
                events.push(EngineEvent::CollaborativeStarted {
                    tick: self.clock,
                    action: collaborative.clone(),
                    performers: performers.clone(),
                });
                self.complete(scenario, &collaborative, performers, events);
            }
        }
        let all_terminal = !self.marked_steps.is_empty()
            && self
                .marked_steps
                .iter()
                .all(|s| scenario.graph.steps.get(s).is_some_and(|s| s.terminal));
        if all_terminal && !self.completed {
            self.completed = true;
            events.push(EngineEvent::ScenarioCompleted { tick: self.clock });
        }
    }

    /// Notifications pending for one collaborative action.
    pub fn pending_for(
        &self,
        collaborative: &ActionId,
    ) -> impl Iterator<Item = &PendingNotification> {
        self.pending_notifications
            .get(collaborative)
            .into_iter()
            .flat_map(|p| p.values())
    }
}
