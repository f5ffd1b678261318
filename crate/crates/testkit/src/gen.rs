//! Random scenario, world and criteria generators.
//!
//! Generators take an explicit RNG so that proptest only has to supply a
//! seed. Every generated scenario is structurally valid; warnings (unbound
//! roles, unused actions) are produced on purpose now and then.

use std::collections::{BTreeMap, BTreeSet};

use cotrain_core::dsl::{
    ActionKind, ActionSpec, HandReq, HandReqPair, HandRequirement, HoldSpec, RoleDecl, RoleRef,
    RoleSpec, Scenario, ScenarioGraph, Step, Transition,
};
use cotrain_core::hands::{Hand, HandState, Hands};
use cotrain_core::repartition::{criterion_values, CriteriaConfig, Criterion};
use cotrain_core::world::{CurrentAction, Relation, StateEffect, WorldObject, WorldState};
use cotrain_core::{ActionId, Humanoid, HumanoidKind, ObjectId, Point, RoleName, StepId};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

pub const OBJECT_ABILITIES: [&str; 3] = ["grip", "heavy", "tool-like"];
pub const ACTOR_ABILITIES: [&str; 2] = ["skilled", "strong"];
pub const UNDECLARED_ROLE: &str = "ghost";
const MESSAGES: [&str; 4] = ["go", "turn on the right", "say \"stop\" now", "wait\\hold"];

#[derive(Debug, Clone, Copy)]
pub struct GenOptions {
    /// Upper bound on the number of steps carrying an action.
    pub max_steps: usize,
    pub max_initial: usize,
    pub collaborative: bool,
    pub hands: bool,
    /// Allow warnings-only oddities: undeclared roles and unused actions.
    pub oddities: bool,
}

impl Default for GenOptions {
    fn default() -> Self {
        Self {
            max_steps: 10,
            max_initial: 2,
            collaborative: true,
            hands: true,
            oddities: true,
        }
    }
}

fn subset<'a, R: Rng>(rng: &mut R, items: &[&'a str], p: f64) -> BTreeSet<&'a str> {
    items.iter().copied().filter(|_| rng.gen_bool(p)).collect()
}

fn grid_point<R: Rng>(rng: &mut R) -> Point {
    Point::new(
        f64::from(rng.gen_range(-10..=10)) / 2.0,
        f64::from(rng.gen_range(-10..=10)) / 2.0,
    )
}

fn random_world<R: Rng>(rng: &mut R) -> WorldState {
    let mut world = WorldState::new();
    for i in 0..rng.gen_range(1..=4) {
        let mut object = WorldObject::new(format!("obj{i}"))
            .with_abilities(subset(rng, &OBJECT_ABILITIES, 0.5))
            .at(grid_point(rng));
        if rng.gen_bool(0.3) {
            object.name = format!("object number {i}");
        }
        if rng.gen_bool(0.3) {
            object.tags.insert("dirty".into());
        }
        world.add_object(object).expect("fresh id");
    }
    // A tool every world has, so tool relations are satisfiable.
    world
        .add_object(
            WorldObject::new("tool0")
                .with_abilities(["tool-like"])
                .at(grid_point(rng)),
        )
        .expect("fresh id");
    for i in 0..rng.gen_range(1..=3) {
        let mut relation = Relation::new(format!("rel{i}"));
        relation.actor_abilities = subset(rng, &ACTOR_ABILITIES, 0.4)
            .into_iter()
            .map(Into::into)
            .collect();
        relation.target_abilities = subset(rng, &OBJECT_ABILITIES[..2], 0.3)
            .into_iter()
            .map(Into::into)
            .collect();
        if rng.gen_bool(0.3) {
            relation.tool = Some("tool-like".into());
        }
        if rng.gen_bool(0.4) {
            relation.effects.push(StateEffect::AddTag("done".into()));
        }
        if rng.gen_bool(0.2) {
            relation
                .effects
                .push(StateEffect::RemoveTag("dirty".into()));
        }
        world.add_relation(relation).expect("fresh name");
    }
    world
}

fn random_roles<R: Rng>(rng: &mut R) -> BTreeMap<RoleName, RoleDecl> {
    let mut roles = BTreeMap::new();
    for i in 0..rng.gen_range(1..=3) {
        let mut decl = RoleDecl::new(format!("role{i}"));
        decl.abilities = subset(rng, &ACTOR_ABILITIES, 0.5)
            .into_iter()
            .map(Into::into)
            .collect();
        if rng.gen_bool(0.5) {
            decl.position = Some(grid_point(rng));
        }
        if rng.gen_bool(0.3) {
            let state = |busy: bool| {
                if busy {
                    HandState::Busy
                } else {
                    HandState::Free
                }
            };
            decl.hands = Some(Hands::new(
                state(rng.gen_bool(0.5)),
                state(rng.gen_bool(0.3)),
            ));
        }
        roles.insert(decl.name.clone(), decl);
    }
    roles
}

fn random_hand_req<R: Rng>(rng: &mut R) -> HandReq {
    match rng.gen_range(0..6) {
        0 => HandReq::Free,
        1 => HandReq::Busy,
        2 => HandReq::Holding(HoldSpec::Ability("tool-like".into())),
        3 => HandReq::Holding(HoldSpec::Target),
        4 => HandReq::Holding(HoldSpec::Ability("grip".into())),
        _ => HandReq::Indifferent,
    }
}

fn random_after<R: Rng>(rng: &mut R) -> HandReq {
    match rng.gen_range(0..5) {
        0 => HandReq::Free,
        1 => HandReq::Busy,
        2 => HandReq::Holding(HoldSpec::Target),
        _ => HandReq::Indifferent,
    }
}

struct Builder<'a, R: Rng> {
    rng: &'a mut R,
    options: GenOptions,
    world: &'a WorldState,
    role_names: Vec<String>,
    actions: BTreeMap<ActionId, ActionSpec>,
    graph: ScenarioGraph,
    next_step: usize,
    next_action: usize,
}

impl<R: Rng> Builder<'_, R> {
    fn role_specs(&mut self) -> Vec<RoleSpec> {
        let count = self.rng.gen_range(1..=2);
        let mut specs = Vec::new();
        for _ in 0..count {
            let priority = self.rng.gen_range(1..=3);
            let pick = self.rng.gen_range(0..self.role_names.len() + 2);
            let role = if pick < self.role_names.len() {
                RoleRef::Named(self.role_names[pick].as_str().into())
            } else if pick == self.role_names.len()
                && self.options.oddities
                && self.rng.gen_bool(0.2)
            {
                RoleRef::Named(UNDECLARED_ROLE.into())
            } else {
                RoleRef::Anyone
            };
            if !specs.iter().any(|s: &RoleSpec| s.role == role) {
                specs.push(RoleSpec { role, priority });
            }
        }
        specs
    }

    fn fresh_action_id(&mut self) -> ActionId {
        self.next_action += 1;
        ActionId::from(format!("act{}", self.next_action - 1))
    }

    fn plain_action(&mut self) -> ActionId {
        let id = self.fresh_action_id();
        let kind = if self.rng.gen_bool(0.7) {
            let relations: Vec<&String> = self.world.relations.keys().collect();
            let objects: Vec<&ObjectId> = self.world.objects.keys().collect();
            ActionKind::Interaction {
                relation: relations.choose(self.rng).expect("relations").to_string(),
                target: (*objects.choose(self.rng).expect("objects")).clone(),
            }
        } else {
            let recipient = self
                .role_names
                .choose(self.rng)
                .expect("roles")
                .as_str()
                .into();
            ActionKind::Communication {
                recipient,
                message: MESSAGES.choose(self.rng).expect("messages").to_string(),
            }
        };
        let is_interaction = matches!(kind, ActionKind::Interaction { .. });
        let mut action = ActionSpec::new(id.clone(), kind, self.role_specs());
        if is_interaction && self.options.hands && self.rng.gen_bool(0.6) {
            action.hands = HandRequirement {
                before: HandReqPair::new(random_hand_req(self.rng), random_hand_req(self.rng)),
                after: HandReqPair::new(random_after(self.rng), random_after(self.rng)),
            };
        }
        action.urgent = self.rng.gen_bool(0.15);
        self.actions.insert(id.clone(), action);
        id
    }

    fn step(&mut self, action: Option<ActionId>, initial: bool) -> StepId {
        let id = StepId::from(format!("s{}", self.next_step));
        self.next_step += 1;
        let terminal = action.is_none();
        self.graph.steps.insert(
            id.clone(),
            Step {
                id: id.clone(),
                action,
                initial,
                terminal,
            },
        );
        id
    }

    fn action_step(&mut self) -> StepId {
        let action = self.plain_action();
        self.step(Some(action), false)
    }

    fn link(&mut self, from: &[StepId], to: &[StepId]) {
        self.graph.transitions.push(Transition {
            from: from.iter().cloned().collect(),
            to: to.iter().cloned().collect(),
        });
    }

    /// `from -> n1,n2 ; n1,n2 -> collab`, returning the collaborative step.
    fn collaborative(&mut self, from: StepId) -> StepId {
        let collab = self.fresh_action_id();
        let arity = self.rng.gen_range(2..=3);
        let mut slots = Vec::new();
        let mut notify_steps = Vec::new();
        for _ in 0..arity {
            let slot = self.fresh_action_id();
            let roles = self.role_specs();
            self.actions.insert(
                slot.clone(),
                ActionSpec::new(
                    slot.clone(),
                    ActionKind::NotifyIntent {
                        collaborative: collab.clone(),
                    },
                    roles,
                ),
            );
            notify_steps.push(self.step(Some(slot.clone()), false));
            slots.push(slot);
        }
        let roles = self.role_specs();
        self.actions.insert(
            collab.clone(),
            ActionSpec::new(
                collab.clone(),
                ActionKind::Collaborative {
                    slots,
                    timeout_ticks: self.rng.gen_range(1..=10),
                },
                roles,
            ),
        );
        let collab_step = self.step(Some(collab), false);
        self.link(&[from], &notify_steps);
        self.link(&notify_steps, std::slice::from_ref(&collab_step));
        collab_step
    }
}

/// A structurally valid scenario.
pub fn random_scenario<R: Rng>(rng: &mut R, options: GenOptions) -> Scenario {
    let world = random_world(rng);
    let roles = random_roles(rng);
    let role_names: Vec<String> = roles.keys().map(|r| r.to_string()).collect();
    let mut b = Builder {
        rng,
        options,
        world: &world,
        role_names,
        actions: BTreeMap::new(),
        graph: ScenarioGraph::default(),
        next_step: 0,
        next_action: 0,
    };

    let mut frontier = Vec::new();
    let initial = b.rng.gen_range(1..=options.max_initial.max(1));
    for _ in 0..initial {
        let action = b.plain_action();
        frontier.push(b.step(Some(action), true));
    }
    let mut budget = options.max_steps.saturating_sub(initial);
    while budget > 0 {
        let op = b.rng.gen_range(0..10);
        let pick = b.rng.gen_range(0..frontier.len());
        match op {
            0..=3 => {
                let from = frontier.swap_remove(pick);
                let to = b.action_step();
                b.link(&[from], std::slice::from_ref(&to));
                frontier.push(to);
                budget -= 1;
            }
            4 | 5 if budget >= 2 => {
                let from = frontier.swap_remove(pick);
                let (x, y) = (b.action_step(), b.action_step());
                b.link(&[from], &[x.clone(), y.clone()]);
                frontier.extend([x, y]);
                budget -= 2;
            }
            6 | 7 if frontier.len() >= 2 => {
                let x = frontier.swap_remove(pick);
                let y = frontier.swap_remove(b.rng.gen_range(0..frontier.len()));
                let to = b.action_step();
                b.link(&[x, y], std::slice::from_ref(&to));
                frontier.push(to);
                budget -= 1;
            }
            8 | 9 if options.collaborative && budget >= 4 => {
                let from = frontier.swap_remove(pick);
                let collab = b.collaborative(from);
                frontier.push(collab);
                budget -= 4;
            }
            _ => {
                let from = frontier.swap_remove(pick);
                let to = b.action_step();
                b.link(&[from], std::slice::from_ref(&to));
                frontier.push(to);
                budget -= 1;
            }
        }
    }
    if b.rng.gen_bool(0.5) {
        let end = b.step(None, false);
        b.link(&frontier, &[end]);
    } else {
        for from in frontier {
            let end = b.step(None, false);
            b.link(&[from], &[end]);
        }
    }
    if options.oddities && b.rng.gen_bool(0.2) {
        b.plain_action();
    }

    Scenario {
        name: format!("generated {}", b.next_step),
        actions: b.actions,
        graph: b.graph,
        world,
        roles,
    }
}

/// Humanoids with random roles, abilities, hands and positions. About one
/// in five is mid-action.
pub fn random_humanoids<R: Rng>(rng: &mut R, scenario: &Scenario, count: usize) -> Vec<Humanoid> {
    let mut roles: Vec<String> = scenario.roles.keys().map(|r| r.to_string()).collect();
    roles.push(UNDECLARED_ROLE.into());
    let mut free_objects: Vec<ObjectId> = scenario.world.objects.keys().cloned().collect();
    free_objects.shuffle(rng);
    (0..count)
        .map(|i| {
            let kind = if rng.gen_bool(0.5) {
                HumanoidKind::Avatar
            } else {
                HumanoidKind::Virtual
            };
            let mine: Vec<&str> = roles
                .iter()
                .map(String::as_str)
                .filter(|_| rng.gen_bool(0.5))
                .collect();
            let mut h = Humanoid::new(format!("h{i}"), kind)
                .with_roles(mine)
                .with_abilities(subset(rng, &ACTOR_ABILITIES, 0.5))
                .at(grid_point(rng));
            for hand in Hand::BOTH {
                let state = match rng.gen_range(0..4) {
                    0 => HandState::Busy,
                    1 => free_objects
                        .pop()
                        .map_or(HandState::Free, HandState::Holding),
                    _ => HandState::Free,
                };
                h.hands.set(hand, state);
            }
            if rng.gen_bool(0.2) {
                h.current_action = Some(CurrentAction {
                    action: "elsewhere".into(),
                    completes_at: 99,
                });
            }
            h
        })
        .collect()
}

/// Scenario world plus the given humanoids.
pub fn populate(scenario: &Scenario, humanoids: &[Humanoid]) -> WorldState {
    let mut world = scenario.world.clone();
    for h in humanoids {
        world
            .add_humanoid(h.clone())
            .expect("generated humanoids are consistent");
    }
    world
}

/// Criteria over a random subset of the built-ins, with integer weights in
/// 0..=4 and integer coefficients in -5..=5 so that sums are exact.
pub fn random_integer_criteria<R: Rng>(rng: &mut R) -> CriteriaConfig {
    let mut names = [
        "role_priority",
        "proximity",
        "easiness",
        "tool_in_hand",
        "participant_kind",
    ];
    names.shuffle(rng);
    let count = rng.gen_range(1..=names.len());
    let criteria = names[..count]
        .iter()
        .map(|name| Criterion {
            name: name.to_string(),
            weight: f64::from(rng.gen_range(0..=4)),
            coefficients: criterion_values(name)
                .expect("built-in")
                .iter()
                .map(|v| (v.to_string(), f64::from(rng.gen_range(-5..=5))))
                .collect(),
        })
        .collect();
    CriteriaConfig {
        lookahead_depth: rng.gen_range(1..=4),
        criteria,
    }
}

/// Proptest strategy yielding scenarios from seeds.
pub fn scenarios(options: GenOptions) -> impl Strategy<Value = Scenario> {
    any::<u64>().prop_map(move |seed| random_scenario(&mut StdRng::seed_from_u64(seed), options))
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}
