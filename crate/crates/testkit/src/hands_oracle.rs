//! Exhaustive references for hand planning and blocking lookahead.

use std::collections::{BTreeSet, VecDeque};

use cotrain_core::dsl::{ActionKind, ActionSpec, HandReq, HoldSpec, Scenario};
use cotrain_core::hands::{
    apply_after, execute_steps, plan_hands, BlockVerdict, Hand, HandPlan, HandState,
};
use cotrain_core::{ActionId, HumanoidId, ObjectId, WorldState};

/// Whether one hand's state meets one requirement.
fn meets(world: &WorldState, state: &HandState, req: &HandReq, target: Option<&ObjectId>) -> bool {
    match (req, state) {
        (HandReq::Indifferent, _) => true,
        (HandReq::Free, HandState::Free) | (HandReq::Busy, HandState::Busy) => true,
        (HandReq::Holding(HoldSpec::Target), HandState::Holding(o)) => Some(o) == target,
        (HandReq::Holding(HoldSpec::Ability(a)), HandState::Holding(o)) => world
            .objects
            .get(o)
            .is_some_and(|o| o.abilities.contains(a)),
        _ => false,
    }
}

/// Goal test for the BFS, written from the rules rather than from the
/// planner: in some orientation both hands meet the declared requirement,
/// and if the relation needs a tool no hand is asked for, one of the hands
/// left indifferent holds such a tool.
pub fn hands_ready(world: &WorldState, humanoid: &HumanoidId, action: &ActionSpec) -> bool {
    let Some(h) = world.humanoids.get(humanoid) else {
        return false;
    };
    let ActionKind::Interaction { relation, target } = &action.kind else {
        return true;
    };
    let tool = world.relations.get(relation).and_then(|r| r.tool.clone());
    let req = &action.hands.before;
    let tool_req = tool.map(|t| HandReq::Holding(HoldSpec::Ability(t)));
    let tool_named = tool_req
        .as_ref()
        .is_some_and(|t| &req.left == t || &req.right == t);
    for (for_left, for_right) in [(&req.left, &req.right), (&req.right, &req.left)] {
        let left = h.hands.get(Hand::Left);
        let right = h.hands.get(Hand::Right);
        if !meets(world, left, for_left, Some(target))
            || !meets(world, right, for_right, Some(target))
        {
            continue;
        }
        match &tool_req {
            Some(t) if !tool_named => {
                let in_left =
                    for_left == &HandReq::Indifferent && meets(world, left, t, Some(target));
                let in_right =
                    for_right == &HandReq::Indifferent && meets(world, right, t, Some(target));
                if in_left || in_right {
                    return true;
                }
            }
            _ => return true,
        }
    }
    false
}

/// Length of the shortest grasp/lay sequence reaching `hands_ready`, if
/// one of at most `max_len` steps exists. Any free object may be grasped.
pub fn bfs_plan_len(
    world: &WorldState,
    humanoid: &HumanoidId,
    action: &ActionSpec,
    max_len: usize,
) -> Option<usize> {
    if !matches!(action.kind, ActionKind::Interaction { .. }) {
        return Some(0);
    }
    // Hand contents fully determine what can happen next.
    let key = |w: &WorldState| format!("{:?}", w.humanoids[humanoid].hands);
    let mut seen = BTreeSet::from([key(world)]);
    let mut queue = VecDeque::from([(world.clone(), 0usize)]);
    while let Some((w, len)) = queue.pop_front() {
        if hands_ready(&w, humanoid, action) {
            return Some(len);
        }
        if len == max_len {
            continue;
        }
        for hand in Hand::BOTH {
            match w.humanoids[humanoid].hands.get(hand) {
                HandState::Holding(_) => {
                    let mut next = w.clone();
                    next.lay(humanoid, hand).expect("holding hand can lay");
                    if seen.insert(key(&next)) {
                        queue.push_back((next, len + 1));
                    }
                }
                HandState::Free => {
                    for object in w.objects.values().filter(|o| o.held_by.is_none()) {
                        let mut next = w.clone();
                        next.grasp(humanoid, hand, &object.id)
                            .expect("free hand, free object");
                        if seen.insert(key(&next)) {
                            queue.push_back((next, len + 1));
                        }
                    }
                }
                HandState::Busy => {}
            }
        }
    }
    None
}

/// Runs the planner's steps and the action's after-state on a copy.
pub fn simulate(world: &mut WorldState, humanoid: &HumanoidId, action: &ActionSpec) -> bool {
    let HandPlan::Feasible(plan) = plan_hands(world, humanoid, action) else {
        return false;
    };
    execute_steps(world, humanoid, &plan.steps).is_ok()
        && apply_after(world, humanoid, action, plan.mirrored).is_ok()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub actions: Vec<ActionId>,
    pub blocked: bool,
}

/// Every maximal path from `start`, listed explicitly.
pub fn enumerate_paths(
    world: &WorldState,
    humanoid: &HumanoidId,
    scenario: &Scenario,
    start: &ActionId,
    depth: usize,
) -> Option<Vec<Path>> {
    let spec = scenario.action(start)?;
    scenario.graph.step_of(start)?;
    let mut sim = world.clone();
    if !simulate(&mut sim, humanoid, spec) {
        return None;
    }
    let mut out = Vec::new();
    let mut stack = vec![(vec![start.clone()], sim)];
    let h = world.humanoids.get(humanoid)?.clone();
    while let Some((path, w)) = stack.pop() {
        if path.len() >= depth {
            out.push(Path {
                actions: path,
                blocked: false,
            });
            continue;
        }
        let last = scenario.graph.step_of(path.last().expect("non-empty"))?;
        let next: Vec<&ActionSpec> = scenario
            .graph
            .successors(last)
            .iter()
            .filter_map(|s| scenario.action_at(s))
            .filter(|a| a.priority_for(&h, &w).is_some())
            .collect();
        if next.is_empty() {
            out.push(Path {
                actions: path,
                blocked: false,
            });
            continue;
        }
        for action in next {
            let mut extended = path.clone();
            extended.push(action.id.clone());
            let mut w2 = w.clone();
            if simulate(&mut w2, humanoid, action) {
                stack.push((extended, w2));
            } else {
                let blocked = action.is_mandatory_for(&h);
                out.push(Path {
                    actions: extended,
                    blocked,
                });
            }
        }
    }
    Some(out)
}

pub fn verdict_by_paths(
    world: &WorldState,
    humanoid: &HumanoidId,
    scenario: &Scenario,
    start: &ActionId,
    depth: usize,
) -> BlockVerdict {
    match enumerate_paths(world, humanoid, scenario, start, depth.max(1)) {
        None => BlockVerdict::Infeasible,
        Some(paths) if !paths.is_empty() && paths.iter().all(|p| p.blocked) => {
            BlockVerdict::RequiresCollaboration
        }
        Some(_) => BlockVerdict::Feasible,
    }
}
