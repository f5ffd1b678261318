use std::collections::{BTreeMap, BTreeSet};

use super::model::{ActionKind, RoleRef, Scenario};
use super::parser::SourceMap;
use super::{sort_diagnostics, Code, Diagnostic, Location};
use crate::hands::{verdict_from, BlockVerdict};
use crate::ids::{ActionId, HumanoidId, RoleName, StepId};
use crate::world::HumanoidKind;
use crate::DEFAULT_LOOKAHEAD_DEPTH;

struct Sink<'a> {
    map: Option<&'a SourceMap>,
    out: Vec<Diagnostic>,
}

impl Sink<'_> {
    fn action(&mut self, code: Code, id: &ActionId, message: String) {
        let at = self.map.and_then(|m| m.actions.get(id).copied());
        self.out.push(Diagnostic::new(code, at, message));
    }

    fn step(&mut self, code: Code, id: &StepId, message: String) {
        let at = self.map.and_then(|m| m.steps.get(id).copied());
        self.out.push(Diagnostic::new(code, at, message));
    }

    fn transition(&mut self, code: Code, index: usize, message: String) {
        let at = self.map.and_then(|m| m.transitions.get(index).copied());
        self.out.push(Diagnostic::new(code, at, message));
    }

    fn at(&mut self, code: Code, at: Option<Location>, message: String) {
        self.out.push(Diagnostic::new(code, at, message));
    }
}

/// Structural errors: dangling references, collaborative wiring, graph
/// shape and reachability. Empty for every scenario `parse` accepts.
pub fn check_structure(scenario: &Scenario, map: Option<&SourceMap>) -> Vec<Diagnostic> {
    let mut sink = Sink {
        map,
        out: Vec::new(),
    };
    check_actions(scenario, &mut sink);
    check_graph(scenario, &mut sink);
    let mut out = sink.out;
    sort_diagnostics(&mut out);
    out
}

fn check_actions(scenario: &Scenario, sink: &mut Sink<'_>) {
    let world = &scenario.world;
    for action in scenario.actions.values() {
        let id = &action.id;
        if action.roles.is_empty() {
            sink.action(Code::NoRoles, id, format!("action `{id}` lists no roles"));
        }
        if action.roles.iter().any(|r| r.priority == 0) {
            sink.action(
                Code::BadPriority,
                id,
                format!("action `{id}` has a priority below 1"),
            );
        }
        match &action.kind {
            ActionKind::Interaction { relation, target } => {
                if !world.relations.contains_key(relation) {
                    sink.action(
                        Code::UnknownRelation,
                        id,
                        format!("action `{id}` uses unknown relation `{relation}`"),
                    );
                }
                if !world.objects.contains_key(target) {
                    sink.action(
                        Code::UnknownObject,
                        id,
                        format!("action `{id}` targets unknown object `{target}`"),
                    );
                }
            }
            ActionKind::Communication { .. } => {}
            ActionKind::NotifyIntent { collaborative } => {
                let wired = matches!(
                    scenario.actions.get(collaborative).map(|a| &a.kind),
                    Some(ActionKind::Collaborative { slots, .. }) if slots.contains(id)
                );
                if !wired {
                    sink.action(
                        Code::DanglingNotify,
                        id,
                        format!("notification `{id}` does not feed collaborative action `{collaborative}`"),
                    );
                }
            }
            ActionKind::Collaborative {
                slots,
                timeout_ticks,
            } => {
                if *timeout_ticks == 0 {
                    sink.action(
                        Code::BadTimeout,
                        id,
                        format!("collaborative `{id}` has a zero timeout"),
                    );
                }
                let distinct: BTreeSet<&ActionId> = slots.iter().collect();
                if slots.len() < 2 || distinct.len() != slots.len() {
                    sink.action(
                        Code::CollabArity,
                        id,
                        format!("collaborative `{id}` needs at least two distinct notifications"),
                    );
                }
                for slot in distinct {
                    match scenario.actions.get(slot).map(|a| &a.kind) {
                        None => sink.action(
                            Code::UnknownAction,
                            id,
                            format!("collaborative `{id}` lists unknown notification `{slot}`"),
                        ),
                        Some(ActionKind::NotifyIntent { collaborative }) if collaborative == id => {
                        }
                        Some(_) => sink.action(
                            Code::CollabArity,
                            id,
                            format!("slot `{slot}` of `{id}` is not a notification for it"),
                        ),
                    }
                }
                check_join(scenario, id, slots, sink);
            }
        }
    }
}

/// The collaborative step must be entered by exactly one transition whose
/// from-set is the steps of its notifications.
fn check_join(scenario: &Scenario, id: &ActionId, slots: &[ActionId], sink: &mut Sink<'_>) {
    let graph = &scenario.graph;
    let Some(step) = graph.step_of(id) else {
        return;
    };
    let expected: Option<BTreeSet<StepId>> =
        slots.iter().map(|s| graph.step_of(s).cloned()).collect();
    let incoming: Vec<_> = graph.incoming(step).collect();
    let ok = match (expected, incoming.as_slice()) {
        (Some(expected), [only]) => only.from == expected,
        _ => false,
    };
    if !ok {
        sink.step(
            Code::CollabJoin,
            step,
            format!(
                "step `{step}` must be entered by one join of the steps of {}",
                list(slots)
            ),
        );
    }
}

fn list<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|i| format!("`{i}`"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn check_graph(scenario: &Scenario, sink: &mut Sink<'_>) {
    let graph = &scenario.graph;
    if graph.initial_steps().is_empty() {
        sink.at(Code::NoInitial, None, "no initial step".into());
    }
    if graph.terminal_steps().is_empty() {
        sink.at(Code::NoTerminal, None, "no terminal step".into());
    }

    let mut users: BTreeMap<&ActionId, Vec<&StepId>> = BTreeMap::new();
    for step in graph.steps.values() {
        let id = &step.id;
        match (&step.action, step.terminal) {
            (Some(_), true) => sink.step(
                Code::TerminalStep,
                id,
                format!("terminal step `{id}` carries an action"),
            ),
            (None, false) => sink.step(
                Code::StepWithoutAction,
                id,
                format!("step `{id}` has no action"),
            ),
            _ => {}
        }
        if step.initial && step.terminal {
            sink.step(
                Code::StepConflict,
                id,
                format!("step `{id}` is both initial and terminal"),
            );
        }
        if let Some(action) = &step.action {
            if scenario.actions.contains_key(action) {
                users.entry(action).or_default().push(id);
            } else {
                sink.step(
                    Code::UnknownAction,
                    id,
                    format!("step `{id}` runs unknown action `{action}`"),
                );
            }
        }
    }
    for (action, steps) in users {
        if steps.len() > 1 {
            for step in &steps[1..] {
                sink.step(
                    Code::ActionReused,
                    step,
                    format!("action `{action}` already runs at step `{}`", steps[0]),
                );
            }
        }
    }

    let mut consumer: BTreeMap<&StepId, usize> = BTreeMap::new();
    for (index, transition) in graph.transitions.iter().enumerate() {
        for step in transition.from.iter().chain(&transition.to) {
            if !graph.steps.contains_key(step) {
                sink.transition(
                    Code::UnknownStep,
                    index,
                    format!("transition refers to unknown step `{step}`"),
                );
            }
        }
        if let Some(shared) = transition.from.intersection(&transition.to).next() {
            sink.transition(
                Code::StepConflict,
                index,
                format!("step `{shared}` is both consumed and produced by one transition"),
            );
        }
        for step in &transition.from {
            if graph.steps.get(step).is_some_and(|s| s.terminal) {
                sink.transition(
                    Code::TerminalStep,
                    index,
                    format!("terminal step `{step}` has an outgoing transition"),
                );
            }
            if let Some(previous) = consumer.insert(step, index) {
                if previous != index {
                    sink.transition(
                        Code::TransitionOverlap,
                        index,
                        format!(
                            "step `{step}` already leaves through transition {}",
                            previous + 1
                        ),
                    );
                }
            }
        }
    }
    for step in graph.steps.values() {
        if !step.terminal && !consumer.contains_key(&step.id) {
            sink.step(
                Code::DeadEnd,
                &step.id,
                format!("step `{}` has no outgoing transition", step.id),
            );
        }
    }

    for step in unreachable_steps(scenario) {
        sink.step(
            Code::UnreachableStep,
            &step,
            format!("step `{step}` can never be marked"),
        );
    }
}

/// Steps that no firing sequence can mark, computed as a fixpoint: a
/// transition can fire once all its from-steps can be marked.
pub(crate) fn unreachable_steps(scenario: &Scenario) -> Vec<StepId> {
    let graph = &scenario.graph;
    let mut reached = graph.initial_steps();
    loop {
        let before = reached.len();
        for transition in &graph.transitions {
            if transition.from.is_subset(&reached) {
                reached.extend(transition.to.iter().cloned());
            }
        }
        if reached.len() == before {
            break;
        }
    }
    graph
        .steps
        .keys()
        .filter(|s| !reached.contains(*s))
        .cloned()
        .collect()
}

/// Structural errors plus warnings: roles nobody declares, actions no step
/// runs, and role sequences that cannot be carried out with the role's
/// initial hands alone.
pub fn validate_static(scenario: &Scenario, map: Option<&SourceMap>) -> Vec<Diagnostic> {
    let mut sink = Sink {
        map,
        out: check_structure(scenario, map),
    };

    let mut referenced: BTreeMap<&RoleName, &ActionId> = BTreeMap::new();
    for action in scenario.actions.values() {
        for spec in &action.roles {
            if let RoleRef::Named(role) = &spec.role {
                referenced.entry(role).or_insert(&action.id);
            }
        }
        if let ActionKind::Communication { recipient, .. } = &action.kind {
            referenced.entry(recipient).or_insert(&action.id);
        }
    }
    for (role, action) in referenced {
        if !scenario.roles.contains_key(role) {
            sink.action(
                Code::UnboundRole,
                action,
                format!("role `{role}` is used by `{action}` but no role slot declares it"),
            );
        }
    }

    let used: BTreeSet<&ActionId> = scenario
        .graph
        .steps
        .values()
        .filter_map(|s| s.action.as_ref())
        .collect();
    for id in scenario.actions.keys() {
        if !used.contains(id) {
            sink.action(
                Code::UnusedAction,
                id,
                format!("action `{id}` is not run by any step"),
            );
        }
    }

    if sink.out.iter().all(|d| !d.is_error()) {
        for (role, action) in blocking_sequences(scenario) {
            sink.action(
                Code::BlockingSequence,
                &action,
                format!(
                    "role `{role}` cannot carry on alone after `{action}` with its initial hands"
                ),
            );
        }
    }

    let mut out = sink.out;
    sort_diagnostics(&mut out);
    out
}

/// (role, action) pairs where a participant playing only that role, with
/// the role's initial hands, would be stuck after doing the action alone.
fn blocking_sequences(scenario: &Scenario) -> Vec<(RoleName, ActionId)> {
    let probe = HumanoidId::from("role-probe");
    let mut out = Vec::new();
    for role in scenario.roles.keys() {
        let humanoid = scenario.humanoid_for_roles(
            probe.clone(),
            HumanoidKind::Virtual,
            std::slice::from_ref(role),
        );
        let mut world = scenario.world.clone();
        if world.add_humanoid(humanoid.clone()).is_err() {
            continue;
        }
        for step in scenario.graph.steps.values() {
            let Some(action) = step.action.as_ref().and_then(|a| scenario.action(a)) else {
                continue;
            };
            if !action.is_mandatory_for(&humanoid) {
                continue;
            }
            let verdict = verdict_from(
                &world,
                &probe,
                scenario,
                &action.id,
                DEFAULT_LOOKAHEAD_DEPTH,
            );
            if verdict == BlockVerdict::RequiresCollaboration {
                out.push((role.clone(), action.id.clone()));
            }
        }
    }
    out
}
