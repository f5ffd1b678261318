//! Hand states, implicit grasp/lay planning and blocking lookahead.
//!
//! Scenarios do not spell out "take the screwdriver" or "put the wrench
//! down". Each interaction states what both hands must be doing before it
//! runs and what they do afterwards; the planner derives the implicit
//! grasps and lays that bridge the current hands to that requirement.
//!
//! Rules the planner follows:
//! - Busy is sticky. Only an explicit scenario action (an `after` of Free)
//!   releases it; implicit steps never touch a busy hand.
//! - Tools are matched by ability, so any `screwdriver-like` object will do.
//!   The nearest reachable one is chosen, ties broken by object id.
//! - Implicit lays put the object on the floor at the humanoid's position,
//!   where it stays graspable.
//! - Left and right are interchangeable. The plan in the declared
//!   orientation wins ties against the mirrored one.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dsl::{ActionKind, ActionSpec, HandReq, HandReqPair, HoldSpec, Scenario};
use crate::engine::{self, ScenarioState};
use crate::ids::{ActionId, HumanoidId, ObjectId, StepId};
use crate::world::{WorldError, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hand {
    Left,
    Right,
}

impl Hand {
    pub const BOTH: [Hand; 2] = [Hand::Left, Hand::Right];

    pub fn other(self) -> Hand {
        match self {
            Hand::Left => Hand::Right,
            Hand::Right => Hand::Left,
        }
    }
}

impl fmt::Display for Hand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Hand::Left => "left",
            Hand::Right => "right",
        })
    }
}

/// Actual state of a hand. `Indifferent` exists only in requirements.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum HandState {
    #[default]
    Free,
    Holding(ObjectId),
    Busy,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Hands {
    pub left: HandState,
    pub right: HandState,
}

impl Hands {
    pub fn new(left: HandState, right: HandState) -> Self {
        Self { left, right }
    }

    pub fn get(&self, hand: Hand) -> &HandState {
        match hand {
            Hand::Left => &self.left,
            Hand::Right => &self.right,
        }
    }

    pub fn set(&mut self, hand: Hand, state: HandState) {
        match hand {
            Hand::Left => self.left = state,
            Hand::Right => self.right = state,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ImplicitStep {
    Grasp { hand: Hand, object: ObjectId },
    Lay { hand: Hand, object: ObjectId },
}

impl ImplicitStep {
    /// The step undoing this one.
    pub fn reversed(&self) -> ImplicitStep {
        match self {
            ImplicitStep::Grasp { hand, object } => ImplicitStep::Lay {
                hand: *hand,
                object: object.clone(),
            },
            ImplicitStep::Lay { hand, object } => ImplicitStep::Grasp {
                hand: *hand,
                object: object.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedHands {
    pub steps: Vec<ImplicitStep>,
    /// Hand states once the implicit steps have run.
    pub hands: Hands,
    /// The requirement was matched with left and right swapped.
    pub mirrored: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum HandPlan {
    Feasible(PlannedHands),
    Infeasible,
}

impl HandPlan {
    pub fn is_feasible(&self) -> bool {
        matches!(self, HandPlan::Feasible(_))
    }

    pub fn steps(&self) -> &[ImplicitStep] {
        match self {
            HandPlan::Feasible(plan) => &plan.steps,
            HandPlan::Infeasible => &[],
        }
    }
}

/// The `before` requirement with the relation's tool folded in: an
/// interaction whose relation needs a tool that no hand is asked to hold
/// gets the tool in its first indifferent hand. `None` when both hands are
/// constrained otherwise, leaving no hand for the tool.
pub fn effective_before(action: &ActionSpec, world: &WorldState) -> Option<HandReqPair> {
    let mut req = action.hands.before.clone();
    let ActionKind::Interaction { relation, .. } = &action.kind else {
        return Some(req);
    };
    let Some(tool) = world.relations.get(relation).and_then(|r| r.tool.clone()) else {
        return Some(req);
    };
    let wanted = HandReq::Holding(HoldSpec::Ability(tool));
    if req.left == wanted || req.right == wanted {
        return Some(req);
    }
    if req.left == HandReq::Indifferent {
        req.left = wanted;
    } else if req.right == HandReq::Indifferent {
        req.right = wanted;
    } else {
        return None;
    }
    Some(req)
}

/// Shortest implicit grasp/lay sequence bringing the humanoid's hands to the
/// action's `before` requirement, or `Infeasible`.
pub fn plan_hands(world: &WorldState, humanoid: &HumanoidId, action: &ActionSpec) -> HandPlan {
    let Some(h) = world.humanoids.get(humanoid) else {
        return HandPlan::Infeasible;
    };
    if !matches!(action.kind, ActionKind::Interaction { .. }) {
        return HandPlan::Feasible(PlannedHands {
            steps: Vec::new(),
            hands: h.hands.clone(),
            mirrored: false,
        });
    }
    let Some(req) = effective_before(action, world) else {
        return HandPlan::Infeasible;
    };
    let straight = plan_orientation(world, humanoid, &req, action.target());
    let mirrored = plan_orientation(world, humanoid, &req.mirrored(), action.target());
    match (straight, mirrored) {
        (Some(a), Some(b)) if b.steps.len() < a.steps.len() => HandPlan::Feasible(PlannedHands {
            mirrored: true,
            ..b
        }),
        (Some(a), _) => HandPlan::Feasible(a),
        (None, Some(b)) => HandPlan::Feasible(PlannedHands {
            mirrored: true,
            ..b
        }),
        (None, None) => HandPlan::Infeasible,
    }
}

fn satisfies(
    world: &WorldState,
    state: &HandState,
    spec: &HoldSpec,
    target: Option<&ObjectId>,
) -> bool {
    let HandState::Holding(object) = state else {
        return false;
    };
    match spec {
        HoldSpec::Target => target == Some(object),
        HoldSpec::Ability(ability) => world
            .objects
            .get(object)
            .is_some_and(|o| o.abilities.contains(ability)),
    }
}

fn plan_orientation(
    world: &WorldState,
    humanoid: &HumanoidId,
    req: &HandReqPair,
    target: Option<&ObjectId>,
) -> Option<PlannedHands> {
    let h = world.humanoids.get(humanoid)?;
    let mut hands = h.hands.clone();
    let mut lays = Vec::new();
    let mut grasps: Vec<(Hand, &HoldSpec)> = Vec::new();

    for hand in Hand::BOTH {
        let state = h.hands.get(hand);
        match (req.get(hand), state) {
            (HandReq::Indifferent, _) => {}
            (HandReq::Busy, HandState::Busy) => {}
            (HandReq::Busy, _) => return None,
            (_, HandState::Busy) => return None,
            (HandReq::Free, HandState::Free) => {}
            (HandReq::Free, HandState::Holding(object)) => {
                lays.push((hand, object.clone()));
            }
            (HandReq::Holding(spec), state) => {
                if satisfies(world, state, spec, target) {
                    continue;
                }
                if let HandState::Holding(object) = state {
                    lays.push((hand, object.clone()));
                }
                grasps.push((hand, spec));
            }
        }
    }

    let laid: BTreeSet<ObjectId> = lays.iter().map(|(_, o)| o.clone()).collect();
    let mut steps = Vec::new();
    for (hand, object) in &lays {
        hands.set(*hand, HandState::Free);
        steps.push(ImplicitStep::Lay {
            hand: *hand,
            object: object.clone(),
        });
    }
    let mut taken: BTreeSet<ObjectId> = BTreeSet::new();
    for (hand, spec) in grasps {
        let reachable = |id: &ObjectId| {
            !taken.contains(id)
                && world
                    .objects
                    .get(id)
                    .is_some_and(|o| o.held_by.is_none() || laid.contains(id))
        };
        let object = match spec {
            HoldSpec::Target => target.filter(|t| reachable(t))?.clone(),
            HoldSpec::Ability(ability) => {
                world
                    .objects
                    .values()
                    .filter(|o| o.abilities.contains(ability) && reachable(&o.id))
                    .map(|o| {
                        // Laid objects end up at the humanoid's feet.
                        let distance = if laid.contains(&o.id) {
                            0.0
                        } else {
                            o.position.distance(&h.position)
                        };
                        (distance, o.id.clone())
                    })
                    .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)))?
                    .1
            }
        };
        taken.insert(object.clone());
        hands.set(hand, HandState::Holding(object.clone()));
        steps.push(ImplicitStep::Grasp { hand, object });
    }
    Some(PlannedHands {
        steps,
        hands,
        mirrored: false,
    })
}

/// Runs implicit steps against the world, in order.
pub fn execute_steps(
    world: &mut WorldState,
    humanoid: &HumanoidId,
    steps: &[ImplicitStep],
) -> Result<(), WorldError> {
    for step in steps {
        match step {
            ImplicitStep::Grasp { hand, object } => world.grasp(humanoid, *hand, object)?,
            ImplicitStep::Lay { hand, object } => {
                let laid = world.lay(humanoid, *hand)?;
                if &laid != object {
                    return Err(WorldError::Invariant(format!(
                        "expected to lay {object}, hand held {laid}"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Applies the action's `after` hand states. Returns the objects laid down
/// explicitly by the action.
pub fn apply_after(
    world: &mut WorldState,
    humanoid: &HumanoidId,
    action: &ActionSpec,
    mirrored: bool,
) -> Result<Vec<(Hand, ObjectId)>, WorldError> {
    let after = if mirrored {
        action.hands.after.mirrored()
    } else {
        action.hands.after.clone()
    };
    let mut laid = Vec::new();
    for hand in Hand::BOTH {
        let current = world.humanoid(humanoid)?.hands.get(hand).clone();
        match after.get(hand) {
            HandReq::Indifferent | HandReq::Holding(HoldSpec::Ability(_)) => {}
            HandReq::Free => match current {
                HandState::Holding(_) => laid.push((hand, world.lay(humanoid, hand)?)),
                HandState::Busy => world
                    .humanoid_mut(humanoid)?
                    .hands
                    .set(hand, HandState::Free),
                HandState::Free => {}
            },
            HandReq::Busy => {
                if let HandState::Holding(_) = current {
                    laid.push((hand, world.lay(humanoid, hand)?));
                }
                world
                    .humanoid_mut(humanoid)?
                    .hands
                    .set(hand, HandState::Busy);
            }
            HandReq::Holding(HoldSpec::Target) => {
                let Some(target) = action.target() else {
                    continue;
                };
                if current == HandState::Holding(target.clone()) {
                    continue;
                }
                // Someone else took the target in the meantime: hand unchanged.
                if world.object(target)?.held_by.is_some() || current == HandState::Busy {
                    continue;
                }
                if let HandState::Holding(_) = current {
                    laid.push((hand, world.lay(humanoid, hand)?));
                }
                world.grasp(humanoid, hand, target)?;
            }
        }
    }
    Ok(laid)
}

/// Runs plan and `after` for a hypothetical execution of `action`.
fn simulate(world: &mut WorldState, humanoid: &HumanoidId, action: &ActionSpec) -> bool {
    let HandPlan::Feasible(plan) = plan_hands(world, humanoid, action) else {
        return false;
    };
    execute_steps(world, humanoid, &plan.steps).is_ok()
        && apply_after(world, humanoid, action, plan.mirrored).is_ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockVerdict {
    Feasible,
    /// Doable now, but every continuation this humanoid is expected to
    /// carry out runs into hands it cannot free alone.
    RequiresCollaboration,
    /// The hands cannot be brought to the requirement at all.
    Infeasible,
}

impl BlockVerdict {
    pub fn label(self) -> &'static str {
        match self {
            BlockVerdict::Feasible => "feasible",
            BlockVerdict::RequiresCollaboration => "requires-collaboration",
            BlockVerdict::Infeasible => "infeasible",
        }
    }
}

/// Verdict for every currently enabled action the humanoid may perform,
/// sorted by action id.
///
/// A path starts at the candidate action and follows graph successors
/// whose actions the humanoid may perform, up to `depth` actions in total.
/// Hands evolve along the path as if the humanoid did everything alone. A
/// path is blocked when it reaches an action that is mandatory for the
/// humanoid (named role at the best priority) and whose hands plan is
/// infeasible; an infeasible action others may take simply ends the path.
/// The candidate requires collaboration when every maximal path is blocked.
pub fn lookahead_blocking(
    world: &WorldState,
    humanoid: &HumanoidId,
    scenario: &Scenario,
    state: &ScenarioState,
    depth: usize,
) -> Vec<(ActionId, BlockVerdict)> {
    let depth = depth.max(1);
    let Some(h) = world.humanoids.get(humanoid) else {
        return Vec::new();
    };
    engine::enabled_actions(state, scenario)
        .into_iter()
        .filter_map(|(id, _)| {
            let action = scenario.action(&id)?;
            action.priority_for(h, world)?;
            Some((
                id.clone(),
                verdict_from(world, humanoid, scenario, &id, depth),
            ))
        })
        .collect()
}

/// Verdict for one action starting from the world's current hands, ignoring
/// whether the action is enabled. Used by static checks.
pub fn verdict_from(
    world: &WorldState,
    humanoid: &HumanoidId,
    scenario: &Scenario,
    action: &ActionId,
    depth: usize,
) -> BlockVerdict {
    let (Some(spec), Some(step)) = (scenario.action(action), scenario.graph.step_of(action)) else {
        return BlockVerdict::Infeasible;
    };
    let mut sim = world.clone();
    if !simulate(&mut sim, humanoid, spec) {
        return BlockVerdict::Infeasible;
    }
    if all_paths_blocked(&sim, humanoid, scenario, step, 1, depth.max(1)) {
        BlockVerdict::RequiresCollaboration
    } else {
        BlockVerdict::Feasible
    }
}

fn all_paths_blocked(
    world: &WorldState,
    humanoid: &HumanoidId,
    scenario: &Scenario,
    step: &StepId,
    len: usize,
    depth: usize,
) -> bool {
    if len >= depth {
        return false;
    }
    let h = &world.humanoids[humanoid];
    let next: Vec<&ActionSpec> = scenario
        .graph
        .successors(step)
        .iter()
        .filter_map(|s| scenario.action_at(s))
        .filter(|a| a.priority_for(h, world).is_some())
        .collect();
    if next.is_empty() {
        return false;
    }
    next.into_iter().all(|action| {
        let mut sim = world.clone();
        if !simulate(&mut sim, humanoid, action) {
            return action.is_mandatory_for(h);
        }
        let step = scenario
            .graph
            .step_of(&action.id)
            .expect("successor action belongs to a step");
        all_paths_blocked(&sim, humanoid, scenario, step, len + 1, depth)
    })
}
