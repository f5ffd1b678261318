//! Set-algebra and need-intersection references for the decision loop.

use std::collections::{BTreeSet, HashSet};

use cotrain_core::decision::{off_scenario_spec, Candidate, DecisionContext};
use cotrain_core::dsl::{ActionKind, ActionSpec, HandReq, HoldSpec};
use cotrain_core::hands::{execute_steps, plan_hands, Hand, HandPlan, HandState};
use cotrain_core::{ActionId, HumanoidId, ObjectId, WorldState};

fn performable(ctx: &DecisionContext<'_>, humanoid: &HumanoidId, action: &ActionId) -> bool {
    let listed = ctx
        .repartition
        .get(action)
        .is_some_and(|l| l.iter().any(|c| &c.humanoid == humanoid));
    listed
        && ctx
            .state
            .check_perform(
                ctx.scenario,
                ctx.world,
                action,
                std::slice::from_ref(humanoid),
            )
            .is_ok()
}

/// allowed ∪ (demanded ∩ performable) ∪ (possible \ allowed-interactions).
pub fn collect(ctx: &DecisionContext<'_>, humanoid: &HumanoidId) -> BTreeSet<Candidate> {
    let h = &ctx.world.humanoids[humanoid];
    if h.current_action.is_some() {
        return BTreeSet::new();
    }
    let enabled: HashSet<&ActionId> = ctx.repartition.keys().collect();
    let demanded: HashSet<&ActionId> = ctx.demands.iter().collect();
    let allowed: HashSet<&ActionId> = enabled
        .union(&demanded)
        .copied()
        .filter(|a| performable(ctx, humanoid, a))
        .collect();
    let allowed_pairs: HashSet<(String, ObjectId)> = allowed
        .iter()
        .filter_map(|a| match &ctx.scenario.actions[*a].kind {
            ActionKind::Interaction { relation, target } => {
                Some((relation.clone(), target.clone()))
            }
            _ => None,
        })
        .collect();
    let mut out: BTreeSet<Candidate> = allowed
        .into_iter()
        .map(|a| Candidate::Scenario(a.clone()))
        .collect();
    for p in ctx
        .world
        .possible_interactions(humanoid)
        .unwrap_or_default()
    {
        if !allowed_pairs.contains(&(p.relation.clone(), p.target.clone())) {
            out.insert(Candidate::OffScenario(p));
        }
    }
    out
}

fn in_hands(world: &WorldState, humanoid: &HumanoidId) -> BTreeSet<ObjectId> {
    Hand::BOTH
        .iter()
        .filter_map(|hand| match world.humanoids[humanoid].hands.get(*hand) {
            HandState::Holding(o) => Some(o.clone()),
            _ => None,
        })
        .collect()
}

/// Objects newly in the humanoid's hands after running its plan for the
/// action on a copy of the world.
fn newly_held(
    world: &WorldState,
    humanoid: &HumanoidId,
    action: &ActionSpec,
) -> BTreeSet<ObjectId> {
    let HandPlan::Feasible(plan) = plan_hands(world, humanoid, action) else {
        return BTreeSet::new();
    };
    let before = in_hands(world, humanoid);
    let mut w = world.clone();
    execute_steps(&mut w, humanoid, &plan.steps).expect("planned steps execute");
    in_hands(&w, humanoid)
        .difference(&before)
        .cloned()
        .collect()
}

/// Brute-force Hindering tag: for every object, does the candidate take it
/// while some other enabled action, whose best candidate is someone else,
/// needs it?
pub fn hindering(ctx: &DecisionContext<'_>, humanoid: &HumanoidId, candidate: &Candidate) -> bool {
    let (own, taken): (Option<&ActionId>, BTreeSet<ObjectId>) = match candidate {
        Candidate::Scenario(id) => {
            let action = &ctx.scenario.actions[id];
            let mut taken = newly_held(ctx.world, humanoid, action);
            let keeps_target = action.hands.after.left == HandReq::Holding(HoldSpec::Target)
                || action.hands.after.right == HandReq::Holding(HoldSpec::Target);
            if keeps_target {
                taken.extend(action.target().cloned());
            }
            (Some(id), taken)
        }
        Candidate::OffScenario(p) => {
            let mut taken = newly_held(ctx.world, humanoid, &off_scenario_spec(p));
            taken.insert(p.target.clone());
            (None, taken)
        }
    };
    for object in ctx.world.objects.keys() {
        if !taken.contains(object) {
            continue;
        }
        for (other, list) in ctx.repartition {
            if Some(other) == own {
                continue;
            }
            let Some(best) = list.first() else { continue };
            if &best.humanoid == humanoid {
                continue;
            }
            let spec = &ctx.scenario.actions[other];
            let needs = spec.target() == Some(object)
                || newly_held(ctx.world, &best.humanoid, spec).contains(object);
            if needs {
                return true;
            }
        }
    }
    false
}
