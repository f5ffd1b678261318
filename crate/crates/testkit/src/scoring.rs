//! Integer re-computation of candidate scores and ranks.

use std::collections::BTreeMap;

use cotrain_core::dsl::{ActionKind, ActionSpec, RoleRef, Scenario};
use cotrain_core::engine::enabled_actions;
use cotrain_core::hands::{Hand, HandState};
use cotrain_core::repartition::CriteriaConfig;
use cotrain_core::{ActionId, Humanoid, HumanoidId, HumanoidKind, ScenarioState, WorldState};

use crate::hands_oracle::verdict_by_paths;

fn best_priority(action: &ActionSpec, h: &Humanoid, world: &WorldState) -> Option<u32> {
    let mut best: Option<u32> = None;
    for spec in &action.roles {
        let allowed = match &spec.role {
            RoleRef::Named(role) => h.roles.contains(role),
            RoleRef::Anyone => match &action.kind {
                ActionKind::Interaction { relation, .. } => world
                    .relations
                    .get(relation)
                    .is_none_or(|r| r.actor_abilities.iter().all(|a| h.abilities.contains(a))),
                _ => true,
            },
        };
        if allowed && best.is_none_or(|b| spec.priority < b) {
            best = Some(spec.priority);
        }
    }
    best
}

fn value(
    name: &str,
    scenario: &Scenario,
    world: &WorldState,
    action: &ActionSpec,
    h: &Humanoid,
    depth: usize,
) -> String {
    match name {
        "role_priority" => match best_priority(action, h, world) {
            None => "none".into(),
            Some(p) if p >= 3 => "3+".into(),
            Some(p) => p.to_string(),
        },
        "proximity" => {
            let distance = match &action.kind {
                ActionKind::Interaction { target, .. } => {
                    let object = &world.objects[target];
                    let at = match &object.held_by {
                        Some(holder) => world.humanoids[&holder.humanoid].position,
                        None => object.position,
                    };
                    ((at.x - h.position.x).powi(2) + (at.y - h.position.y).powi(2)).sqrt()
                }
                _ => 0.0,
            };
            [(1.0, "<1m"), (3.0, "<3m"), (10.0, "<10m")]
                .iter()
                .find(|(limit, _)| distance < *limit)
                .map_or(">=10m", |(_, label)| label)
                .into()
        }
        "easiness" => verdict_by_paths(world, &h.id, scenario, &action.id, depth)
            .label()
            .into(),
        "tool_in_hand" => {
            let tool = match &action.kind {
                ActionKind::Interaction { relation, .. } => world.relations[relation].tool.clone(),
                _ => None,
            };
            match tool {
                None => "no-tool".into(),
                Some(t) => {
                    let held =
                        [Hand::Left, Hand::Right]
                            .iter()
                            .any(|hand| match h.hands.get(*hand) {
                                HandState::Holding(o) => world.objects[o].abilities.contains(&t),
                                _ => false,
                            });
                    if held {
                        "in-hand".into()
                    } else {
                        "not-in-hand".into()
                    }
                }
            }
        }
        "participant_kind" => match h.kind {
            HumanoidKind::Avatar => "avatar".into(),
            HumanoidKind::Virtual => "virtual".into(),
        },
        other => panic!("unknown criterion {other}"),
    }
}

fn as_int(x: f64) -> i64 {
    assert_eq!(
        x.fract(),
        0.0,
        "oracle needs integer weights and coefficients"
    );
    x as i64
}

/// Exact integer score of every candidate of every enabled action, ranked
/// by descending score then humanoid id.
pub fn ranked(
    scenario: &Scenario,
    state: &ScenarioState,
    world: &WorldState,
    config: &CriteriaConfig,
) -> BTreeMap<ActionId, Vec<(HumanoidId, i64)>> {
    let mut out = BTreeMap::new();
    for (id, _) in enabled_actions(state, scenario) {
        let action = &scenario.actions[&id];
        let mut list: Vec<(HumanoidId, i64)> = world
            .humanoids
            .values()
            .filter(|h| h.current_action.is_none() && best_priority(action, h, world).is_some())
            .map(|h| {
                let score = config
                    .criteria
                    .iter()
                    .map(|c| {
                        let v = value(&c.name, scenario, world, action, h, config.lookahead_depth);
                        as_int(c.weight) * as_int(c.coefficients[&v])
                    })
                    .sum();
                (h.id.clone(), score)
            })
            .collect();
        list.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out.insert(id, list);
    }
    out
}
