use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::hands::{Hand, HandState, Hands};
use crate::ids::{Ability, ActionId, HumanoidId, ObjectId, RoleName, StepId};
use crate::world::{Humanoid, Point, WorldState};

/// A role allowed to perform an action. `Anyone` stands for every
/// participant owning the abilities the action needs.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RoleRef {
    Named(RoleName),
    Anyone,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleSpec {
    pub role: RoleRef,
    /// 1 is the highest priority.
    pub priority: u32,
}

impl RoleSpec {
    pub fn named(role: impl Into<RoleName>, priority: u32) -> Self {
        Self {
            role: RoleRef::Named(role.into()),
            priority,
        }
    }

    pub fn anyone(priority: u32) -> Self {
        Self {
            role: RoleRef::Anyone,
            priority,
        }
    }
}

/// What a held object must be.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HoldSpec {
    /// Any object carrying this ability, typically a tool.
    Ability(Ability),
    /// The interaction target itself.
    Target,
}

/// Requirement on one hand, before or after an action.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HandReq {
    Free,
    Holding(HoldSpec),
    Busy,
    Indifferent,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HandReqPair {
    pub left: HandReq,
    pub right: HandReq,
}

impl HandReqPair {
    pub fn new(left: HandReq, right: HandReq) -> Self {
        Self { left, right }
    }

    pub fn indifferent() -> Self {
        Self::new(HandReq::Indifferent, HandReq::Indifferent)
    }

    pub fn get(&self, hand: Hand) -> &HandReq {
        match hand {
            Hand::Left => &self.left,
            Hand::Right => &self.right,
        }
    }

    /// The requirement as seen with left and right swapped.
    pub fn mirrored(&self) -> Self {
        Self::new(self.right.clone(), self.left.clone())
    }
}

/// Hand states required before an interaction and produced after it.
///
/// Left and right are interchangeable: a humanoid may satisfy the pair in
/// either orientation, and the same orientation is then used for `after`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HandRequirement {
    pub before: HandReqPair,
    pub after: HandReqPair,
}

impl Default for HandRequirement {
    fn default() -> Self {
        Self {
            before: HandReqPair::indifferent(),
            after: HandReqPair::indifferent(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionKind {
    Interaction {
        relation: String,
        target: ObjectId,
    },
    Communication {
        recipient: RoleName,
        message: String,
    },
    NotifyIntent {
        collaborative: ActionId,
    },
    Collaborative {
        slots: Vec<ActionId>,
        timeout_ticks: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub id: ActionId,
    pub kind: ActionKind,
    pub roles: Vec<RoleSpec>,
    /// Only meaningful for interactions.
    pub hands: HandRequirement,
    pub urgent: bool,
}

impl ActionSpec {
    pub fn new(id: impl Into<ActionId>, kind: ActionKind, roles: Vec<RoleSpec>) -> Self {
        Self {
            id: id.into(),
            kind,
            roles,
            hands: HandRequirement::default(),
            urgent: false,
        }
    }

    pub fn target(&self) -> Option<&ObjectId> {
        match &self.kind {
            ActionKind::Interaction { target, .. } => Some(target),
            _ => None,
        }
    }

    pub fn is_collaborative(&self) -> bool {
        matches!(
            self.kind,
            ActionKind::NotifyIntent { .. } | ActionKind::Collaborative { .. }
        )
    }

    /// Best-priority match for the humanoid, if the humanoid may perform
    /// this action at all. `Anyone` requires the relation's actor abilities.
    pub fn priority_for(&self, humanoid: &Humanoid, world: &WorldState) -> Option<u32> {
        self.roles
            .iter()
            .filter(|spec| match &spec.role {
                RoleRef::Named(role) => humanoid.roles.contains(role),
                RoleRef::Anyone => self
                    .required_abilities(world)
                    .is_subset(&humanoid.abilities),
            })
            .map(|spec| spec.priority)
            .min()
    }

    /// True when the humanoid holds one of the named roles listed at the
    /// action's best priority, i.e. nobody is expected before them.
    pub fn is_mandatory_for(&self, humanoid: &Humanoid) -> bool {
        let Some(best) = self.roles.iter().map(|spec| spec.priority).min() else {
            return false;
        };
        self.roles.iter().any(|spec| {
            spec.priority == best
                && matches!(&spec.role, RoleRef::Named(role) if humanoid.roles.contains(role))
        })
    }

    pub fn required_abilities(&self, world: &WorldState) -> BTreeSet<Ability> {
        match &self.kind {
            ActionKind::Interaction { relation, .. } => world
                .relations
                .get(relation)
                .map(|r| r.actor_abilities.clone())
                .unwrap_or_default(),
            _ => BTreeSet::new(),
        }
    }
}

/// Role slot declared by the scenario: abilities granted to whoever plays
/// it, where they start, and their initial hands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleDecl {
    pub name: RoleName,
    pub abilities: BTreeSet<Ability>,
    pub position: Option<Point>,
    /// Only `Free` and `Busy` are allowed as initial states.
    pub hands: Option<Hands>,
}

impl RoleDecl {
    pub fn new(name: impl Into<RoleName>) -> Self {
        Self {
            name: name.into(),
            abilities: BTreeSet::new(),
            position: None,
            hands: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub id: StepId,
    pub action: Option<ActionId>,
    pub initial: bool,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: BTreeSet<StepId>,
    pub to: BTreeSet<StepId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScenarioGraph {
    pub steps: BTreeMap<StepId, Step>,
    pub transitions: Vec<Transition>,
}

impl ScenarioGraph {
    pub fn initial_steps(&self) -> BTreeSet<StepId> {
        self.steps
            .values()
            .filter(|s| s.initial)
            .map(|s| s.id.clone())
            .collect()
    }

    pub fn terminal_steps(&self) -> BTreeSet<StepId> {
        self.steps
            .values()
            .filter(|s| s.terminal)
            .map(|s| s.id.clone())
            .collect()
    }

    /// The transition consuming this step's token, if any.
    pub fn outgoing(&self, step: &StepId) -> Option<&Transition> {
        self.transitions.iter().find(|t| t.from.contains(step))
    }

    pub fn incoming<'a>(&'a self, step: &'a StepId) -> impl Iterator<Item = &'a Transition> + 'a {
        self.transitions.iter().filter(move |t| t.to.contains(step))
    }

    pub fn successors(&self, step: &StepId) -> Vec<StepId> {
        self.outgoing(step)
            .map(|t| t.to.iter().cloned().collect())
            .unwrap_or_default()
    }

    pub fn step_of(&self, action: &ActionId) -> Option<&StepId> {
        self.steps
            .values()
            .find(|s| s.action.as_ref() == Some(action))
            .map(|s| &s.id)
    }
}

/// A parsed and validated scenario: world declaration, role slots,
/// actions and the step graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    /// Objects and relations only; humanoids join at session time.
    pub world: WorldState,
    pub roles: BTreeMap<RoleName, RoleDecl>,
    pub actions: BTreeMap<ActionId, ActionSpec>,
    pub graph: ScenarioGraph,
}

impl Scenario {
    pub fn action(&self, id: &ActionId) -> Option<&ActionSpec> {
        self.actions.get(id)
    }

    pub fn action_at(&self, step: &StepId) -> Option<&ActionSpec> {
        self.graph
            .steps
            .get(step)
            .and_then(|s| s.action.as_ref())
            .and_then(|a| self.actions.get(a))
    }

    /// Builds a humanoid carrying the role's declared abilities, position
    /// and initial hands. Used for static checks and for casting.
    pub fn humanoid_for_roles(
        &self,
        id: impl Into<HumanoidId>,
        kind: crate::world::HumanoidKind,
        roles: &[RoleName],
    ) -> Humanoid {
        let mut humanoid = Humanoid::new(id, kind).with_roles(roles.iter().cloned());
        for role in roles {
            if let Some(decl) = self.roles.get(role) {
                humanoid.abilities.extend(decl.abilities.iter().cloned());
                if let Some(position) = decl.position {
                    if humanoid.position == Point::default() {
                        humanoid.position = position;
                    }
                }
                if let Some(hands) = &decl.hands {
                    for hand in Hand::BOTH {
                        if hands.get(hand) == &HandState::Busy {
                            humanoid.hands.set(hand, HandState::Busy);
                        }
                    }
                }
            }
        }
        humanoid
    }
}
