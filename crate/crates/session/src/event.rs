//! Session events: the append-only record every state change goes through.

use std::collections::BTreeSet;

use cotrain_core::decision::PedagogicalProfile;
use cotrain_core::engine::{EngineEvent, Tick};
use cotrain_core::hands::Hand;
use cotrain_core::repartition::Repartition;
use cotrain_core::world::PossibleInteraction;
use cotrain_core::{Ability, ActionId, HumanoidId, HumanoidKind, ObjectId, RoleName};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub tick: Tick,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    ParticipantJoined {
        humanoid: HumanoidId,
        participant: HumanoidKind,
        #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
        abilities: BTreeSet<Ability>,
        /// Decision profile of a virtual human; absent for avatars.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        profile: Option<PedagogicalProfile>,
    },
    RoleClaimed {
        humanoid: HumanoidId,
        role: RoleName,
    },
    ImplicitGrasp {
        humanoid: HumanoidId,
        hand: Hand,
        object: ObjectId,
    },
    ImplicitLay {
        humanoid: HumanoidId,
        hand: Hand,
        object: ObjectId,
    },
    ActionStarted {
        humanoid: HumanoidId,
        action: ActionId,
        /// Set for interactions outside the scenario.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        interaction: Option<PossibleInteraction>,
        completes_at: Tick,
        /// The performer stands in for a higher-priority role holder.
        #[serde(default)]
        assisted: bool,
    },
    ActionCompleted {
        action: ActionId,
        performers: Vec<HumanoidId>,
    },
    NotifyIntentRecorded {
        collaborative: ActionId,
        slot: ActionId,
        humanoid: HumanoidId,
        expires_at: Tick,
    },
    NotificationExpired {
        collaborative: ActionId,
        slot: ActionId,
        humanoid: HumanoidId,
    },
    CollaborativeStarted {
        action: ActionId,
        performers: Vec<HumanoidId>,
    },
    CommunicationSent {
        from: HumanoidId,
        to: RoleName,
        message: String,
        /// The scenario communication this message completed, if any.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        action: Option<ActionId>,
    },
    ScenarioCompleted {},
    ScoresPublished {
        scores: Repartition,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::ParticipantJoined { .. } => "participant_joined",
            EventKind::RoleClaimed { .. } => "role_claimed",
            EventKind::ImplicitGrasp { .. } => "implicit_grasp",
            EventKind::ImplicitLay { .. } => "implicit_lay",
            EventKind::ActionStarted { .. } => "action_started",
            EventKind::ActionCompleted { .. } => "action_completed",
            EventKind::NotifyIntentRecorded { .. } => "notify_intent_recorded",
            EventKind::NotificationExpired { .. } => "notification_expired",
            EventKind::CollaborativeStarted { .. } => "collaborative_started",
            EventKind::CommunicationSent { .. } => "communication_sent",
            EventKind::ScenarioCompleted {} => "scenario_completed",
            EventKind::ScoresPublished { .. } => "scores_published",
        }
    }
}

impl From<EngineEvent> for EventKind {
    fn from(event: EngineEvent) -> Self {
        match event {
            EngineEvent::NotificationRecorded {
                collaborative,
                slot,
                humanoid,
                expires_at,
                ..
            } => EventKind::NotifyIntentRecorded {
                collaborative,
                slot,
                humanoid,
                expires_at,
            },
            EngineEvent::NotificationExpired {
                collaborative,
                slot,
                humanoid,
                ..
            } => EventKind::NotificationExpired {
                collaborative,
                slot,
                humanoid,
            },
            EngineEvent::CollaborativeStarted {
                action, performers, ..
            } => EventKind::CollaborativeStarted { action, performers },
            EngineEvent::ActionCompleted {
                action, performers, ..
            } => EventKind::ActionCompleted { action, performers },
            EngineEvent::ScenarioCompleted { .. } => EventKind::ScenarioCompleted {},
        }
    }
}
