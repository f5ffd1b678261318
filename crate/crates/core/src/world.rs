//! Behavioral objects, relations and the interaction engine.
//!
//! The world is an informed scene flattened onto a 2D floor plane. Objects
//! expose abilities; relations consume abilities on both the actor and the
//! target side and describe tag effects. The interaction engine answers the
//! question "what could this humanoid do right now" by plain set inclusion.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hands::{Hand, HandState, Hands};
use crate::ids::{Ability, ActionId, HumanoidId, ObjectId, RoleName};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorldError {
    #[error("unknown {kind} `{id}`")]
    NotFound { kind: &'static str, id: String },
    #[error("duplicate {kind} `{id}`")]
    Duplicate { kind: &'static str, id: String },
    #[error("interaction `{relation}` on `{target}` is not possible for `{actor}`")]
    IllegalInteraction {
        relation: String,
        actor: HumanoidId,
        target: ObjectId,
    },
    #[error("{humanoid} cannot grasp `{object}` with the {hand} hand: {reason}")]
    CannotGrasp {
        humanoid: HumanoidId,
        hand: Hand,
        object: ObjectId,
        reason: &'static str,
    },
    #[error("{humanoid} holds nothing in the {hand} hand")]
    NothingHeld { humanoid: HumanoidId, hand: Hand },
    #[error("world invariant violated: {0}")]
    Invariant(String),
}

/// Position on the abstract floor plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Back-reference from a held object to the hand holding it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Holder {
    pub humanoid: HumanoidId,
    pub hand: Hand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldObject {
    pub id: ObjectId,
    pub name: String,
    pub abilities: BTreeSet<Ability>,
    pub position: Point,
    pub held_by: Option<Holder>,
    pub tags: BTreeSet<String>,
}

impl WorldObject {
    pub fn new(id: impl Into<ObjectId>) -> Self {
        let id = id.into();
        Self {
            name: id.to_string(),
            id,
            abilities: BTreeSet::new(),
            position: Point::default(),
            held_by: None,
            tags: BTreeSet::new(),
        }
    }

    pub fn with_abilities<I, A>(mut self, abilities: I) -> Self
    where
        I: IntoIterator<Item = A>,
        A: Into<Ability>,
    {
        self.abilities = abilities.into_iter().map(Into::into).collect();
        self
    }

    pub fn at(mut self, position: Point) -> Self {
        self.position = position;
        self
    }

    pub fn with_tags<I, S>(mut self, tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.tags = tags.into_iter().map(Into::into).collect();
        self
    }
}

/// Tag operation applied to the target of a relation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateEffect {
    AddTag(String),
    RemoveTag(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub name: String,
    pub actor_abilities: BTreeSet<Ability>,
    pub target_abilities: BTreeSet<Ability>,
    pub tool: Option<Ability>,
    pub effects: Vec<StateEffect>,
}

impl Relation {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            actor_abilities: BTreeSet::new(),
            target_abilities: BTreeSet::new(),
            tool: None,
            effects: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanoidKind {
    /// Driven by a real user over a session connection.
    Avatar,
    /// Driven by the decision module.
    Virtual,
}

/// Action a humanoid is busy with, and the tick at which it completes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurrentAction {
    pub action: ActionId,
    pub completes_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Humanoid {
    pub id: HumanoidId,
    pub kind: HumanoidKind,
    pub roles: BTreeSet<RoleName>,
    pub abilities: BTreeSet<Ability>,
    pub position: Point,
    pub hands: Hands,
    pub current_action: Option<CurrentAction>,
}

impl Humanoid {
    pub fn new(id: impl Into<HumanoidId>, kind: HumanoidKind) -> Self {
        Self {
            id: id.into(),
            kind,
            roles: BTreeSet::new(),
            abilities: BTreeSet::new(),
            position: Point::default(),
            hands: Hands::default(),
            current_action: None,
        }
    }

    pub fn with_roles<I, R>(mut self, roles: I) -> Self
    where
        I: IntoIterator<Item = R>,
        R: Into<RoleName>,
    {
        self.roles = roles.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_abilities<I, A>(mut self, abilities: I) -> Self
    where
        I: IntoIterator<Item = A>,
        A: Into<Ability>,
    {
        self.abilities = abilities.into_iter().map(Into::into).collect();
        self
    }

    pub fn at(mut self, position: Point) -> Self {
        self.position = position;
        self
    }

    pub fn with_hands(mut self, hands: Hands) -> Self {
        self.hands = hands;
        self
    }

    pub fn is_idle(&self) -> bool {
        self.current_action.is_none()
    }
}

/// An interaction the interaction engine reports as currently possible.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PossibleInteraction {
    pub relation: String,
    pub target: ObjectId,
    /// Reported only; whether a matching tool is at hand is the resource
    /// manager's business.
    pub tool: Option<Ability>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WorldState {
    pub objects: BTreeMap<ObjectId, WorldObject>,
    pub humanoids: BTreeMap<HumanoidId, Humanoid>,
    pub relations: BTreeMap<String, Relation>,
}

impl WorldState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_object(&mut self, object: WorldObject) -> Result<(), WorldError> {
        if self.objects.contains_key(&object.id) {
            return Err(WorldError::Duplicate {
                kind: "object",
                id: object.id.to_string(),
            });
        }
        self.objects.insert(object.id.clone(), object);
        Ok(())
    }

    pub fn add_relation(&mut self, relation: Relation) -> Result<(), WorldError> {
        if self.relations.contains_key(&relation.name) {
            return Err(WorldError::Duplicate {
                kind: "relation",
                id: relation.name,
            });
        }
        self.relations.insert(relation.name.clone(), relation);
        Ok(())
    }

    /// Adds a humanoid. Hands holding objects must reference objects that
    /// are free in this world; their back-references are set here.
    pub fn add_humanoid(&mut self, humanoid: Humanoid) -> Result<(), WorldError> {
        if self.humanoids.contains_key(&humanoid.id) {
            return Err(WorldError::Duplicate {
                kind: "humanoid",
                id: humanoid.id.to_string(),
            });
        }
        for hand in Hand::BOTH {
            if let HandState::Holding(object) = humanoid.hands.get(hand) {
                let obj = self.object_mut(object)?;
                if obj.held_by.is_some() {
                    return Err(WorldError::CannotGrasp {
                        humanoid: humanoid.id.clone(),
                        hand,
                        object: object.clone(),
                        reason: "already held",
                    });
                }
                obj.held_by = Some(Holder {
                    humanoid: humanoid.id.clone(),
                    hand,
                });
            }
        }
        self.humanoids.insert(humanoid.id.clone(), humanoid);
        Ok(())
    }

    pub fn object(&self, id: &ObjectId) -> Result<&WorldObject, WorldError> {
        self.objects.get(id).ok_or_else(|| WorldError::NotFound {
            kind: "object",
            id: id.to_string(),
        })
    }

    fn object_mut(&mut self, id: &ObjectId) -> Result<&mut WorldObject, WorldError> {
        self.objects
            .get_mut(id)
            .ok_or_else(|| WorldError::NotFound {
                kind: "object",
                id: id.to_string(),
            })
    }

    pub fn humanoid(&self, id: &HumanoidId) -> Result<&Humanoid, WorldError> {
        self.humanoids.get(id).ok_or_else(|| WorldError::NotFound {
            kind: "humanoid",
            id: id.to_string(),
        })
    }

    pub fn humanoid_mut(&mut self, id: &HumanoidId) -> Result<&mut Humanoid, WorldError> {
        self.humanoids
            .get_mut(id)
            .ok_or_else(|| WorldError::NotFound {
                kind: "humanoid",
                id: id.to_string(),
            })
    }

    pub fn relation(&self, name: &str) -> Result<&Relation, WorldError> {
        self.relations
            .get(name)
            .ok_or_else(|| WorldError::NotFound {
                kind: "relation",
                id: name.to_string(),
            })
    }

    /// Where an object currently is: its holder's position when held.
    pub fn object_position(&self, id: &ObjectId) -> Result<Point, WorldError> {
        let object = self.object(id)?;
        Ok(match &object.held_by {
            Some(holder) => self
                .humanoids
                .get(&holder.humanoid)
                .map_or(object.position, |h| h.position),
            None => object.position,
        })
    }

    /// Every (relation, target) pair the actor's abilities allow, sorted by
    /// relation name then target id.
    pub fn possible_interactions(
        &self,
        actor: &HumanoidId,
    ) -> Result<Vec<PossibleInteraction>, WorldError> {
        let actor = self.humanoid(actor)?;
        let mut out = Vec::new();
        // BTreeMap iteration already yields relation-name then object-id order.
        for relation in self.relations.values() {
            if !relation.actor_abilities.is_subset(&actor.abilities) {
                continue;
            }
            for object in self.objects.values() {
                if relation.target_abilities.is_subset(&object.abilities) {
                    out.push(PossibleInteraction {
                        relation: relation.name.clone(),
                        target: object.id.clone(),
                        tool: relation.tool.clone(),
                    });
                }
            }
        }
        Ok(out)
    }

    pub fn is_possible(&self, relation: &str, actor: &HumanoidId, target: &ObjectId) -> bool {
        let (Some(rel), Some(actor), Some(object)) = (
            self.relations.get(relation),
            self.humanoids.get(actor),
            self.objects.get(target),
        ) else {
            return false;
        };
        rel.actor_abilities.is_subset(&actor.abilities)
            && rel.target_abilities.is_subset(&object.abilities)
    }

    /// Applies the relation's tag effects to the target and returns the new
    /// world. The receiver is left untouched.
    pub fn apply_effects(
        &self,
        relation: &str,
        actor: &HumanoidId,
        target: &ObjectId,
    ) -> Result<WorldState, WorldError> {
        if !self.is_possible(relation, actor, target) {
            return Err(WorldError::IllegalInteraction {
                relation: relation.to_string(),
                actor: actor.clone(),
                target: target.clone(),
            });
        }
        let effects = self.relations[relation].effects.clone();
        let mut next = self.clone();
        let object = next.object_mut(target)?;
        for effect in effects {
            match effect {
                StateEffect::AddTag(tag) => {
                    object.tags.insert(tag);
                }
                StateEffect::RemoveTag(tag) => {
                    object.tags.remove(&tag);
                }
            }
        }
        Ok(next)
    }

    /// Puts `object` into the given (free) hand.
    pub fn grasp(
        &mut self,
        humanoid: &HumanoidId,
        hand: Hand,
        object: &ObjectId,
    ) -> Result<(), WorldError> {
        let state = self.humanoid(humanoid)?.hands.get(hand).clone();
        let fail = |reason| WorldError::CannotGrasp {
            humanoid: humanoid.clone(),
            hand,
            object: object.clone(),
            reason,
        };
        if state != HandState::Free {
            return Err(fail("hand is not free"));
        }
        let obj = self.object_mut(object)?;
        if obj.held_by.is_some() {
            return Err(fail("object already held"));
        }
        obj.held_by = Some(Holder {
            humanoid: humanoid.clone(),
            hand,
        });
        self.humanoid_mut(humanoid)?
            .hands
            .set(hand, HandState::Holding(object.clone()));
        Ok(())
    }

    /// Lays whatever the hand holds on the floor at the humanoid's feet.
    pub fn lay(&mut self, humanoid: &HumanoidId, hand: Hand) -> Result<ObjectId, WorldError> {
        let h = self.humanoid(humanoid)?;
        let HandState::Holding(object) = h.hands.get(hand).clone() else {
            return Err(WorldError::NothingHeld {
                humanoid: humanoid.clone(),
                hand,
            });
        };
        let position = h.position;
        let obj = self.object_mut(&object)?;
        obj.held_by = None;
        obj.position = position;
        self.humanoid_mut(humanoid)?
            .hands
            .set(hand, HandState::Free);
        Ok(object)
    }

    /// Checks referential integrity and the hand/held_by correspondence.
    pub fn check_invariants(&self) -> Result<(), WorldError> {
        for object in self.objects.values() {
            if let Some(holder) = &object.held_by {
                let h = self
                    .humanoids
                    .get(&holder.humanoid)
                    .ok_or_else(|| WorldError::Invariant(format!("{} held by ghost", object.id)))?;
                if h.hands.get(holder.hand) != &HandState::Holding(object.id.clone()) {
                    return Err(WorldError::Invariant(format!(
                        "{} claims to be in {}'s {} hand",
                        object.id, h.id, holder.hand
                    )));
                }
            }
        }
        for h in self.humanoids.values() {
            for hand in Hand::BOTH {
                if let HandState::Holding(object) = h.hands.get(hand) {
                    let obj = self.objects.get(object).ok_or_else(|| {
                        WorldError::Invariant(format!("{} holds unknown {}", h.id, object))
                    })?;
                    let expected = Holder {
                        humanoid: h.id.clone(),
                        hand,
                    };
                    if obj.held_by.as_ref() != Some(&expected) {
                        return Err(WorldError::Invariant(format!(
                            "{}'s {} hand holds {} without back-reference",
                            h.id, hand, object
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
