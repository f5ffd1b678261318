use std::fmt::Write;

use super::model::{
    ActionKind, ActionSpec, HandReq, HandReqPair, HandRequirement, HoldSpec, RoleRef, Scenario,
};
use super::ANYONE;
use crate::hands::{Hand, HandState, Hands};
use crate::world::{Point, StateEffect};

/// Canonical text for a scenario. Items come out sorted by id within each
/// section, transitions keep their declaration order, optional attributes
/// are omitted when they hold their default value.
pub fn serialize(scenario: &Scenario) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario {}", quote(&scenario.name));

    out.push_str("\nWORLD\n");
    for object in scenario.world.objects.values() {
        let _ = write!(out, "object {}", object.id);
        if object.name != object.id.as_str() {
            let _ = write!(out, " name={}", quote(&object.name));
        }
        if !object.abilities.is_empty() {
            let _ = write!(out, " abilities={}", join(&object.abilities));
        }
        let _ = write!(out, " at={}", point(&object.position));
        if !object.tags.is_empty() {
            let _ = write!(out, " tags={}", join(&object.tags));
        }
        out.push('\n');
    }
    for relation in scenario.world.relations.values() {
        let _ = write!(out, "relation {}", relation.name);
        if !relation.actor_abilities.is_empty() {
            let _ = write!(out, " actor={}", join(&relation.actor_abilities));
        }
        if !relation.target_abilities.is_empty() {
            let _ = write!(out, " target={}", join(&relation.target_abilities));
        }
        if let Some(tool) = &relation.tool {
            let _ = write!(out, " tool={tool}");
        }
        if !relation.effects.is_empty() {
            let effects: Vec<String> = relation
                .effects
                .iter()
                .map(|e| match e {
                    StateEffect::AddTag(tag) => format!("+{tag}"),
                    StateEffect::RemoveTag(tag) => format!("-{tag}"),
                })
                .collect();
            let _ = write!(out, " effects={}", effects.join(","));
        }
        out.push('\n');
    }

    out.push_str("\nROLES\n");
    for role in scenario.roles.values() {
        let _ = write!(out, "role {}", role.name);
        if !role.abilities.is_empty() {
            let _ = write!(out, " abilities={}", join(&role.abilities));
        }
        if let Some(position) = &role.position {
            let _ = write!(out, " at={}", point(position));
        }
        if let Some(hands) = &role.hands {
            let _ = write!(out, " hands={}", initial_hands(hands));
        }
        out.push('\n');
    }

    out.push_str("\nACTIONS\n");
    for action in scenario.actions.values() {
        write_action(&mut out, action);
    }

    out.push_str("\nGRAPH\n");
    for step in scenario.graph.steps.values() {
        let _ = write!(out, "step {}", step.id);
        if let Some(action) = &step.action {
            let _ = write!(out, " action={action}");
        }
        if step.initial {
            out.push_str(" initial");
        }
        if step.terminal {
            out.push_str(" terminal");
        }
        out.push('\n');
    }
    for transition in &scenario.graph.transitions {
        let _ = writeln!(
            out,
            "transition {} -> {}",
            join(&transition.from),
            join(&transition.to)
        );
    }
    out
}

fn write_action(out: &mut String, action: &ActionSpec) {
    let _ = write!(out, "action {} ", action.id);
    match &action.kind {
        ActionKind::Interaction { relation, target } => {
            let _ = write!(out, "interact relation={relation} target={target}");
        }
        ActionKind::Communication { recipient, message } => {
            let _ = write!(out, "communicate to={recipient} message={}", quote(message));
        }
        ActionKind::NotifyIntent { collaborative } => {
            let _ = write!(out, "notify collaborative={collaborative}");
        }
        ActionKind::Collaborative {
            slots,
            timeout_ticks,
        } => {
            let _ = write!(
                out,
                "collaborative slots={} timeout={timeout_ticks}",
                join(slots)
            );
        }
    }
    let roles: Vec<String> = action
        .roles
        .iter()
        .map(|spec| match &spec.role {
            RoleRef::Named(role) => format!("{role}:{}", spec.priority),
            RoleRef::Anyone => format!("{ANYONE}:{}", spec.priority),
        })
        .collect();
    let _ = write!(out, " roles={}", roles.join(","));
    if action.hands != HandRequirement::default() {
        let _ = write!(
            out,
            " hands={}->{}",
            hand_pair(&action.hands.before),
            hand_pair(&action.hands.after)
        );
    }
    if action.urgent {
        out.push_str(" urgent");
    }
    out.push('\n');
}

fn join<T: std::fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    items
        .into_iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn quote(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for c in text.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn point(p: &Point) -> String {
    format!("{},{}", p.x, p.y)
}

fn hand_req(req: &HandReq) -> String {
    match req {
        HandReq::Free => "free".into(),
        HandReq::Busy => "busy".into(),
        HandReq::Indifferent => "any".into(),
        HandReq::Holding(HoldSpec::Target) => "hold:target".into(),
        HandReq::Holding(HoldSpec::Ability(ability)) => format!("hold:{ability}"),
    }
}

fn hand_pair(pair: &HandReqPair) -> String {
    format!("{},{}", hand_req(&pair.left), hand_req(&pair.right))
}

fn initial_hands(hands: &Hands) -> String {
    let state = |hand| match hands.get(hand) {
        HandState::Busy => "busy",
        _ => "free",
    };
    format!("{},{}", state(Hand::Left), state(Hand::Right))
}
