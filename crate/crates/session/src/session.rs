//! A running session: casting, the tick loop and participant commands.
//!
//! Each tick runs in a fixed order: clock advance and expirations, score
//! publication, avatar commands in arrival order, virtual human decisions,
//! then completions of actions that are due. Every change is recorded as an
//! event and applied through [`SessionState::apply`].

use std::collections::{BTreeMap, BTreeSet};

use cotrain_core::decision::{
    decide, off_scenario_spec, Candidate, Decision, DecisionContext, PedagogicalProfile,
};
use cotrain_core::dsl::{ActionKind, ActionSpec, Scenario};
use cotrain_core::engine::Tick;
use cotrain_core::hands::{plan_hands, HandPlan, ImplicitStep};
use cotrain_core::ids::is_valid_token;
use cotrain_core::repartition::{self, CandidateScore, CriteriaConfig, Repartition};
use cotrain_core::world::PossibleInteraction;
use cotrain_core::{ActionId, HumanoidId, HumanoidKind, RoleName, ScenarioState, WorldState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{AgentsConfig, ConfigError};
use crate::event::{EventKind, SessionEvent};
use crate::state::{ApplyError, Participant, SessionState};

/// Ticks an interaction takes from start to completion.
pub const ACTION_TICKS: Tick = 1;

/// First RNG stream of auto-cast virtual humans, clear of configured ones.
pub const AUTO_CAST_STREAMS: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SetupError {
    #[error(transparent)]
    Agents(#[from] ConfigError),
    #[error("criteria: {0}")]
    Criteria(#[from] repartition::ConfigError),
    #[error("participant id `{0}` is not a valid identifier")]
    BadId(String),
    #[error("participant `{0}` joins twice")]
    DuplicateParticipant(HumanoidId),
    #[error("role `{0}` is not declared by the scenario")]
    UnknownRole(RoleName),
    #[error("role `{role}` is claimed by both `{first}` and `{second}`")]
    RoleTaken {
        role: RoleName,
        first: HumanoidId,
        second: HumanoidId,
    },
    #[error("casting failed: {0}")]
    Apply(#[from] ApplyError),
}

/// A human participant and the roles they claimed in the lobby.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Avatar {
    pub id: HumanoidId,
    pub roles: Vec<RoleName>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    PerformAction { action: ActionId },
    Communicate { to: RoleName, message: String },
    NotifyIntent { slot: ActionId },
    QueryAllowed,
}

/// A command from an avatar, queued until the next tick.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandRequest {
    pub humanoid: HumanoidId,
    pub request: u64,
    /// Number of events the client had seen when it sent the command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seen_seq: Option<u64>,
    #[serde(flatten)]
    pub command: Command,
}

/// An action the asking avatar may start now.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllowedAction {
    pub action: ActionId,
    pub kind: ActionKind,
    /// Implicit grasps and lays can bring the hands to the requirement.
    pub hands_ready: bool,
    pub best_candidate: Option<HumanoidId>,
    pub candidates: Vec<CandidateScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reply", rename_all = "snake_case")]
pub enum Reply {
    Accepted,
    Rejected {
        reason: String,
    },
    Allowed {
        seq: u64,
        actions: Vec<AllowedAction>,
    },
}

/// Everything a client needs to redraw the session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    /// Number of events so far; the next event carries this sequence number.
    pub seq: u64,
    pub tick: Tick,
    pub completed: bool,
    pub hash: String,
    pub world: WorldState,
    pub marking: ScenarioState,
    pub participants: BTreeMap<HumanoidId, Participant>,
    pub scores: Repartition,
}

#[derive(Debug, Clone)]
struct Agent {
    profile: PedagogicalProfile,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone)]
pub struct Session {
    state: SessionState,
    events: Vec<SessionEvent>,
    agents: BTreeMap<HumanoidId, Agent>,
    agents_config: AgentsConfig,
    seed: u64,
    started: bool,
    published: Option<Repartition>,
}

impl Session {
    /// Casts the session at tick 0: avatars first, then configured agents for
    /// the roles left over, then one auto-cast virtual human per remaining
    /// role.
    pub fn new(
        scenario: Scenario,
        criteria: CriteriaConfig,
        agents: &AgentsConfig,
        seed: u64,
        avatars: &[Avatar],
    ) -> Result<Self, SetupError> {
        criteria.validate()?;
        let plans = agents.plans(&scenario)?;
        let auto_profile = agents.auto_cast()?;

        let mut claimed: BTreeMap<RoleName, HumanoidId> = BTreeMap::new();
        let mut ids: BTreeSet<HumanoidId> = BTreeSet::new();
        for avatar in avatars {
            if !is_valid_token(avatar.id.as_str()) {
                return Err(SetupError::BadId(avatar.id.to_string()));
            }
            if !ids.insert(avatar.id.clone()) {
                return Err(SetupError::DuplicateParticipant(avatar.id.clone()));
            }
            for role in &avatar.roles {
                if !scenario.roles.contains_key(role) {
                    return Err(SetupError::UnknownRole(role.clone()));
                }
                if let Some(first) = claimed.insert(role.clone(), avatar.id.clone()) {
                    return Err(SetupError::RoleTaken {
                        role: role.clone(),
                        first,
                        second: avatar.id.clone(),
                    });
                }
            }
        }

        let mut session = Session {
            state: SessionState::new(scenario, criteria),
            events: Vec::new(),
            agents: BTreeMap::new(),
            agents_config: agents.clone(),
            seed,
            started: false,
            published: None,
        };

        for avatar in avatars {
            session.join(
                &avatar.id,
                HumanoidKind::Avatar,
                Default::default(),
                None,
                &avatar.roles,
            )?;
        }
        for plan in plans {
            let roles: Vec<RoleName> = plan
                .roles
                .iter()
                .filter(|r| !claimed.contains_key(*r))
                .cloned()
                .collect();
            if roles.is_empty() {
                continue;
            }
            if !ids.insert(plan.id.clone()) {
                return Err(SetupError::DuplicateParticipant(plan.id));
            }
            for role in &roles {
                claimed.insert(role.clone(), plan.id.clone());
            }
            session.join(
                &plan.id,
                HumanoidKind::Virtual,
                plan.abilities.clone(),
                Some(plan.profile),
                &roles,
            )?;
            session.add_agent(&plan.id, plan.profile, plan.stream);
        }
        let leftover: Vec<RoleName> = session
            .state
            .scenario
            .roles
            .keys()
            .filter(|r| !claimed.contains_key(*r))
            .cloned()
            .collect();
        for (stream, role) in (AUTO_CAST_STREAMS..).zip(leftover) {
            let mut id = HumanoidId::from(format!("auto-{role}").as_str());
            let mut n = 2;
            while ids.contains(&id) {
                id = HumanoidId::from(format!("auto-{role}-{n}").as_str());
                n += 1;
            }
            ids.insert(id.clone());
            session.join(
                &id,
                HumanoidKind::Virtual,
                Default::default(),
                Some(auto_profile),
                &[role],
            )?;
            session.add_agent(&id, auto_profile, stream);
        }
        Ok(session)
    }

    fn join(
        &mut self,
        id: &HumanoidId,
        kind: HumanoidKind,
        abilities: BTreeSet<cotrain_core::Ability>,
        profile: Option<PedagogicalProfile>,
        roles: &[RoleName],
    ) -> Result<(), ApplyError> {
        let mut kinds = vec![EventKind::ParticipantJoined {
            humanoid: id.clone(),
            participant: kind,
            abilities,
            profile,
        }];
        kinds.extend(roles.iter().map(|role| EventKind::RoleClaimed {
            humanoid: id.clone(),
            role: role.clone(),
        }));
        self.record(kinds)
    }

    fn add_agent(&mut self, id: &HumanoidId, profile: PedagogicalProfile, stream: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        self.agents.insert(id.clone(), Agent { profile, rng });
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn scenario(&self) -> &Scenario {
        &self.state.scenario
    }

    pub fn criteria(&self) -> &CriteriaConfig {
        &self.state.criteria
    }

    pub fn agents_config(&self) -> &AgentsConfig {
        &self.agents_config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    pub fn tick(&self) -> Tick {
        self.state.tick
    }

    pub fn is_completed(&self) -> bool {
        self.state.is_completed()
    }

    pub fn hash(&self) -> String {
        self.state.hash()
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            seq: self.state.next_seq,
            tick: self.state.tick,
            completed: self.state.is_completed(),
            hash: self.state.hash(),
            world: self.state.world.clone(),
            marking: self.state.engine.clone(),
            participants: self.state.participants.clone(),
            scores: self.state.available_scores(),
        }
    }

    fn push(&mut self, kind: EventKind) -> Result<(), ApplyError> {
        let event = SessionEvent {
            seq: self.state.next_seq,
            tick: self.state.tick,
            kind,
        };
        self.state.apply(&event)?;
        self.events.push(event);
        Ok(())
    }

    fn flush(&mut self) {
        loop {
            let Some(kind) = self.state.pending().next().cloned() else {
                break;
            };
            self.push(kind).expect("queued follow-ups always apply");
        }
    }

    /// Records primary events as one unit: all of them or none.
    fn record(&mut self, kinds: Vec<EventKind>) -> Result<(), ApplyError> {
        let saved = self.state.clone();
        let len = self.events.len();
        for kind in kinds {
            if let Err(e) = self.push(kind) {
                self.state = saved;
                self.events.truncate(len);
                return Err(e);
            }
            self.flush();
        }
        Ok(())
    }

    /// Runs one tick with the commands received since the previous one and
    /// returns one reply per command.
    pub fn step(&mut self, commands: &[CommandRequest]) -> Vec<Reply> {
        let tick = if self.started {
            self.state.tick + 1
        } else {
            self.state.tick
        };
        self.started = true;
        self.state
            .advance_to(tick)
            .expect("clock only moves forward");
        self.flush();
        self.publish_scores();
        let replies = commands.iter().map(|c| self.handle(c)).collect();
        self.run_agents();
        self.complete_due();
        replies
    }

    /// Steps without commands until the scenario completes or `max_ticks`
    /// ticks have run. Returns whether it completed.
    pub fn run(&mut self, max_ticks: Tick) -> bool {
        while !self.is_completed() && (!self.started || self.state.tick + 1 < max_ticks) {
            self.step(&[]);
        }
        self.is_completed()
    }

    fn publish_scores(&mut self) {
        if self.is_completed() {
            return;
        }
        let scores = self.state.available_scores();
        if self.published.as_ref() != Some(&scores) {
            self.published = Some(scores.clone());
            self.record(vec![EventKind::ScoresPublished { scores }])
                .expect("freshly computed scores apply");
        }
    }

    /// Actions the avatar may start now, by action id.
    pub fn allowed_for(&self, humanoid: &HumanoidId) -> Vec<AllowedAction> {
        let Some(h) = self.state.world.humanoids.get(humanoid) else {
            return Vec::new();
        };
        if !h.is_idle() || self.is_completed() {
            return Vec::new();
        }
        let scores = self.state.available_scores();
        scores
            .into_iter()
            .filter(|(action, list)| {
                list.iter().any(|c| &c.humanoid == humanoid)
                    && self
                        .state
                        .engine
                        .check_perform(
                            &self.state.scenario,
                            &self.state.world,
                            action,
                            std::slice::from_ref(humanoid),
                        )
                        .is_ok()
            })
            .filter_map(|(action, list)| {
                let spec = self.state.scenario.action(&action)?;
                if matches!(spec.kind, ActionKind::Collaborative { .. }) {
                    return None;
                }
                Some(AllowedAction {
                    hands_ready: plan_hands(&self.state.world, humanoid, spec).is_feasible(),
                    kind: spec.kind.clone(),
                    best_candidate: list.first().map(|c| c.humanoid.clone()),
                    candidates: list,
                    action,
                })
            })
            .collect()
    }

    fn handle(&mut self, request: &CommandRequest) -> Reply {
        match self.try_handle(request) {
            Ok(reply) => reply,
            Err(e) => {
                let stale = request
                    .seen_seq
                    .is_some_and(|seen| seen < self.state.next_seq);
                let reason = if stale {
                    format!("stale: {e}")
                } else {
                    e.to_string()
                };
                Reply::Rejected { reason }
            }
        }
    }

    fn try_handle(&mut self, request: &CommandRequest) -> Result<Reply, CommandError> {
        let humanoid = &request.humanoid;
        match self.state.participants.get(humanoid) {
            Some(p) if p.kind == HumanoidKind::Avatar => {}
            Some(_) => return Err(CommandError::NotAnAvatar(humanoid.clone())),
            None => return Err(ApplyError::UnknownHumanoid(humanoid.clone()).into()),
        }
        if let Command::QueryAllowed = request.command {
            return Ok(Reply::Allowed {
                seq: self.state.next_seq,
                actions: self.allowed_for(humanoid),
            });
        }
        if self.is_completed() {
            return Err(CommandError::Completed);
        }
        match &request.command {
            Command::PerformAction { action } => {
                let spec = self
                    .state
                    .scenario
                    .action(action)
                    .ok_or_else(|| CommandError::UnknownAction(action.clone()))?
                    .clone();
                match &spec.kind {
                    ActionKind::Interaction { .. } => {
                        self.start_interaction(humanoid, &spec, None)?
                    }
                    ActionKind::Communication { recipient, message } => {
                        self.communicate(humanoid, recipient, message, Some(action))?
                    }
                    ActionKind::NotifyIntent { .. } => self.notify(humanoid, action)?,
                    ActionKind::Collaborative { .. } => {
                        return Err(CommandError::Collaborative(action.clone()))
                    }
                }
            }
            Command::Communicate { to, message } => {
                self.communicate(humanoid, to, message, None)?
            }
            Command::NotifyIntent { slot } => {
                match self.state.scenario.action(slot).map(|s| &s.kind) {
                    Some(ActionKind::NotifyIntent { .. }) => self.notify(humanoid, slot)?,
                    _ => return Err(CommandError::NotASlot(slot.clone())),
                }
            }
            Command::QueryAllowed => unreachable!("answered above"),
        }
        Ok(Reply::Accepted)
    }

    /// Records implicit hand steps and the start of an interaction.
    fn start_interaction(
        &mut self,
        humanoid: &HumanoidId,
        spec: &ActionSpec,
        off: Option<&PossibleInteraction>,
    ) -> Result<(), CommandError> {
        let HandPlan::Feasible(plan) = plan_hands(&self.state.world, humanoid, spec) else {
            return Err(CommandError::HandsUnreachable(spec.id.clone()));
        };
        let mut kinds: Vec<EventKind> = plan
            .steps
            .iter()
            .map(|step| match step {
                ImplicitStep::Grasp { hand, object } => EventKind::ImplicitGrasp {
                    humanoid: humanoid.clone(),
                    hand: *hand,
                    object: object.clone(),
                },
                ImplicitStep::Lay { hand, object } => EventKind::ImplicitLay {
                    humanoid: humanoid.clone(),
                    hand: *hand,
                    object: object.clone(),
                },
            })
            .collect();
        kinds.push(EventKind::ActionStarted {
            humanoid: humanoid.clone(),
            action: spec.id.clone(),
            interaction: off.cloned(),
            completes_at: self.state.tick + ACTION_TICKS,
            assisted: off.is_none() && self.state.is_assisted(humanoid, &spec.id),
        });
        Ok(self.record(kinds)?)
    }

    /// Sends a message; it completes the scenario communication it matches.
    /// With `expected` set, the message must complete that action.
    fn communicate(
        &mut self,
        from: &HumanoidId,
        to: &RoleName,
        message: &str,
        expected: Option<&ActionId>,
    ) -> Result<(), CommandError> {
        let action = self.state.matching_communication(from, to, message);
        if let Some(expected) = expected {
            if action.as_ref() != Some(expected) {
                self.state.engine.check_perform(
                    &self.state.scenario,
                    &self.state.world,
                    expected,
                    std::slice::from_ref(from),
                )?;
                return Err(CommandError::InProgress(expected.clone()));
            }
        }
        Ok(self.record(vec![EventKind::CommunicationSent {
            from: from.clone(),
            to: to.clone(),
            message: message.to_string(),
            action,
        }])?)
    }

    fn notify(&mut self, humanoid: &HumanoidId, slot: &ActionId) -> Result<(), CommandError> {
        let (collaborative, timeout) = self
            .collaborative_of(slot)
            .ok_or_else(|| CommandError::NotASlot(slot.clone()))?;
        Ok(self.record(vec![EventKind::NotifyIntentRecorded {
            collaborative,
            slot: slot.clone(),
            humanoid: humanoid.clone(),
            expires_at: self.state.tick + Tick::from(timeout.max(1)),
        }])?)
    }

    fn collaborative_of(&self, slot: &ActionId) -> Option<(ActionId, u32)> {
        let ActionKind::NotifyIntent { collaborative } = &self.state.scenario.action(slot)?.kind
        else {
            return None;
        };
        match &self.state.scenario.action(collaborative)?.kind {
            ActionKind::Collaborative { timeout_ticks, .. } => {
                Some((collaborative.clone(), *timeout_ticks))
            }
            _ => None,
        }
    }

    /// Every idle virtual human decides on the same snapshot; contested
    /// scenario actions go to the best-ranked claimant, and the rest apply
    /// in id order, skipping any that the earlier ones made invalid.
    fn run_agents(&mut self) {
        if self.is_completed() {
            return;
        }
        let scores = self.state.available_scores();
        let ctx = DecisionContext {
            scenario: &self.state.scenario,
            state: &self.state.engine,
            world: &self.state.world,
            repartition: &scores,
            demands: &[],
        };
        let mut decisions: Vec<(HumanoidId, Decision)> = Vec::new();
        for (id, agent) in self.agents.iter_mut() {
            if ctx.world.humanoids.get(id).is_some_and(|h| h.is_idle()) {
                decisions.push((id.clone(), decide(&ctx, id, &agent.profile, &mut agent.rng)));
            }
        }
        let rank = |action: &ActionId, id: &HumanoidId| {
            scores
                .get(action)
                .and_then(|list| list.iter().position(|c| &c.humanoid == id))
                .unwrap_or(usize::MAX)
        };
        let mut winners: BTreeMap<ActionId, (usize, HumanoidId)> = BTreeMap::new();
        for (id, decision) in &decisions {
            if let Some(action) = claimed_action(decision) {
                let entry = (rank(action, id), id.clone());
                winners
                    .entry(action.clone())
                    .and_modify(|best| {
                        if entry < *best {
                            *best = entry.clone();
                        }
                    })
                    .or_insert(entry);
            }
        }
        for (id, decision) in decisions {
            if self.is_completed() {
                break;
            }
            if let Some(action) = claimed_action(&decision) {
                if winners[action].1 != id {
                    continue;
                }
            }
            // A decision made invalid by an earlier one is dropped.
            let _ = self.apply_decision(&id, decision);
        }
    }

    fn apply_decision(&mut self, id: &HumanoidId, decision: Decision) -> Result<(), CommandError> {
        match decision {
            Decision::Idle => Ok(()),
            Decision::NotifyIntent { slot, .. } => self.notify(id, &slot),
            Decision::Perform {
                candidate: Candidate::Scenario(action),
            } => {
                let spec = self
                    .state
                    .scenario
                    .action(&action)
                    .ok_or_else(|| CommandError::UnknownAction(action.clone()))?
                    .clone();
                match &spec.kind {
                    ActionKind::Interaction { .. } => self.start_interaction(id, &spec, None),
                    ActionKind::Communication { recipient, message } => {
                        self.communicate(id, recipient, message, Some(&action))
                    }
                    ActionKind::NotifyIntent { .. } => self.notify(id, &action),
                    ActionKind::Collaborative { .. } => Err(CommandError::Collaborative(action)),
                }
            }
            Decision::Perform {
                candidate: Candidate::OffScenario(interaction),
            } => {
                let spec = off_scenario_spec(&interaction);
                self.start_interaction(id, &spec, Some(&interaction))
            }
        }
    }

    fn complete_due(&mut self) {
        let due: Vec<(HumanoidId, ActionId)> = self
            .state
            .world
            .humanoids
            .values()
            .filter_map(|h| {
                let current = h.current_action.as_ref()?;
                (current.completes_at <= self.state.tick)
                    .then(|| (h.id.clone(), current.action.clone()))
            })
            .collect();
        for (humanoid, action) in due {
            if self.is_completed() {
                break;
            }
            self.record(vec![EventKind::ActionCompleted {
                action,
                performers: vec![humanoid],
            }])
            .expect("due actions complete");
        }
    }
}

fn claimed_action(decision: &Decision) -> Option<&ActionId> {
    match decision {
        Decision::Perform {
            candidate: Candidate::Scenario(action),
        } => Some(action),
        Decision::NotifyIntent { slot, .. } => Some(slot),
        _ => None,
    }
}

/// Why a command was refused.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CommandError {
    #[error("`{0}` is not an avatar")]
    NotAnAvatar(HumanoidId),
    #[error("the scenario is already completed")]
    Completed,
    #[error("unknown action `{0}`")]
    UnknownAction(ActionId),
    #[error("collaborative action `{0}` starts once every slot has notified")]
    Collaborative(ActionId),
    #[error("`{0}` is not a notify-intent slot")]
    NotASlot(ActionId),
    #[error("hands cannot be brought to the requirement of `{0}`")]
    HandsUnreachable(ActionId),
    #[error("`{0}` is already under way")]
    InProgress(ActionId),
    #[error(transparent)]
    Engine(#[from] cotrain_core::engine::EngineError),
    #[error(transparent)]
    Apply(#[from] ApplyError),
}
