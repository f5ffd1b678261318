use cotrain_core::dsl::{ActionKind, ActionSpec, HandReq, HandReqPair, HoldSpec, RoleSpec};
use cotrain_core::hands::{
    execute_steps, plan_hands, verdict_from, BlockVerdict, Hand, HandPlan, HandState, Hands,
};
use cotrain_core::world::{Relation, WorldObject};
use cotrain_core::{Humanoid, HumanoidKind, Point, WorldState};
use cotrain_testkit::gen::{populate, random_humanoids, random_scenario, rng, GenOptions};
use cotrain_testkit::hands_oracle::{bfs_plan_len, hands_ready, simulate, verdict_by_paths};
use proptest::prelude::*;
use rand::Rng;

fn requirements() -> Vec<HandReq> {
    vec![
        HandReq::Free,
        HandReq::Busy,
        HandReq::Indifferent,
        HandReq::Holding(HoldSpec::Target),
        HandReq::Holding(HoldSpec::Ability("tool-like".into())),
        HandReq::Holding(HoldSpec::Ability("grip".into())),
    ]
}

fn hand_states(with_spanner: bool) -> Vec<HandState> {
    let mut states = vec![
        HandState::Free,
        HandState::Busy,
        HandState::Holding("part".into()),
        HandState::Holding("junk".into()),
    ];
    if with_spanner {
        states.push(HandState::Holding("spanner".into()));
    }
    states
}

struct Setup {
    spanner: bool,
    spare: bool,
    part_taken: bool,
    tool_relation: bool,
}

fn build_world(setup: &Setup, hands: Hands) -> Option<WorldState> {
    let mut world = WorldState::new();
    world
        .add_object(
            WorldObject::new("part")
                .with_abilities(["grip"])
                .at(Point::new(1.0, 0.0)),
        )
        .unwrap();
    world
        .add_object(WorldObject::new("junk").at(Point::new(0.0, 1.0)))
        .unwrap();
    if setup.spanner {
        world
            .add_object(
                WorldObject::new("spanner")
                    .with_abilities(["tool-like"])
                    .at(Point::new(2.0, 0.0)),
            )
            .unwrap();
    }
    if setup.spare {
        world
            .add_object(
                WorldObject::new("spare")
                    .with_abilities(["tool-like", "grip"])
                    .at(Point::new(5.0, 0.0)),
            )
            .unwrap();
    }
    let mut relation = Relation::new("fix");
    if setup.tool_relation {
        relation.tool = Some("tool-like".into());
    }
    world.add_relation(relation).unwrap();
    if setup.part_taken {
        let other = Humanoid::new("other", HumanoidKind::Virtual).with_hands(Hands::new(
            HandState::Holding("part".into()),
            HandState::Free,
        ));
        world.add_humanoid(other).ok()?;
    }
    world
        .add_humanoid(Humanoid::new("me", HumanoidKind::Virtual).with_hands(hands))
        .ok()?;
    Some(world)
}

#[test]
fn planner_matches_exhaustive_search() {
    let mut checked = 0;
    for bits in 0..16u8 {
        let setup = Setup {
            spanner: bits & 1 != 0,
            spare: bits & 2 != 0,
            part_taken: bits & 4 != 0,
            tool_relation: bits & 8 != 0,
        };
        for left in hand_states(setup.spanner) {
            for right in hand_states(setup.spanner) {
                let Some(world) = build_world(&setup, Hands::new(left.clone(), right.clone()))
                else {
                    continue;
                };
                for req_l in requirements() {
                    for req_r in requirements() {
                        let mut action = ActionSpec::new(
                            "act",
                            ActionKind::Interaction {
                                relation: "fix".into(),
                                target: "part".into(),
                            },
                            vec![RoleSpec::anyone(1)],
                        );
                        action.hands.before = HandReqPair::new(req_l.clone(), req_r.clone());
                        let me = "me".into();
                        let plan = plan_hands(&world, &me, &action);
                        let shortest = bfs_plan_len(&world, &me, &action, 4);
                        let context =
                            format!("{left:?}/{right:?} needs {req_l:?}/{req_r:?} bits {bits}");
                        assert_eq!(plan.is_feasible(), shortest.is_some(), "{context}");
                        if let HandPlan::Feasible(p) = plan {
                            assert_eq!(Some(p.steps.len()), shortest, "{context}");
                            let mut after = world.clone();
                            execute_steps(&mut after, &me, &p.steps).expect(&context);
                            after.check_invariants().expect(&context);
                            assert!(hands_ready(&after, &me, &action), "{context}");
                            assert_eq!(after.humanoids[&me].hands, p.hands, "{context}");
                        }
                        checked += 1;
                    }
                }
            }
        }
    }
    assert!(checked > 5000, "{checked}");
}

#[test]
fn lookahead_matches_path_enumeration() {
    for seed in 0..300 {
        let mut r = rng(seed);
        let scenario = random_scenario(
            &mut r,
            GenOptions {
                max_steps: 8,
                ..GenOptions::default()
            },
        );
        let count = r.gen_range(1..=3);
        let humanoids = random_humanoids(&mut r, &scenario, count);
        let world = populate(&scenario, &humanoids);
        for h in &humanoids {
            for action in scenario.actions.keys() {
                if scenario.graph.step_of(action).is_none() {
                    continue;
                }
                for depth in 1..=4 {
                    assert_eq!(
                        verdict_from(&world, &h.id, &scenario, action, depth),
                        verdict_by_paths(&world, &h.id, &scenario, action, depth),
                        "seed {seed} {} {action} depth {depth}",
                        h.id
                    );
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn requiring_collaboration_persists_with_deeper_lookahead(seed in any::<u64>()) {
        let mut r = rng(seed);
        let scenario = random_scenario(&mut r, GenOptions::default());
        let humanoids = random_humanoids(&mut r, &scenario, 2);
        let world = populate(&scenario, &humanoids);
        for h in &humanoids {
            for action in scenario.actions.keys() {
                for depth in 1..5 {
                    if verdict_from(&world, &h.id, &scenario, action, depth) == BlockVerdict::RequiresCollaboration {
                        prop_assert_eq!(
                            verdict_from(&world, &h.id, &scenario, action, depth + 1),
                            BlockVerdict::RequiresCollaboration
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn reversed_steps_restore_the_hands(seed in any::<u64>()) {
        let mut r = rng(seed);
        let scenario = random_scenario(&mut r, GenOptions::default());
        let humanoids = random_humanoids(&mut r, &scenario, 3);
        let world = populate(&scenario, &humanoids);
        for h in &humanoids {
            for action in scenario.actions.values() {
                let HandPlan::Feasible(plan) = plan_hands(&world, &h.id, action) else { continue };
                let mut w = world.clone();
                execute_steps(&mut w, &h.id, &plan.steps).unwrap();
                let undo: Vec<_> = plan.steps.iter().rev().map(|s| s.reversed()).collect();
                execute_steps(&mut w, &h.id, &undo).unwrap();
                prop_assert_eq!(&w.humanoids[&h.id].hands, &world.humanoids[&h.id].hands);
                for (id, object) in &world.objects {
                    prop_assert_eq!(&w.objects[id].held_by, &object.held_by);
                }
            }
        }
    }

    #[test]
    fn simulated_actions_keep_world_invariants(seed in any::<u64>()) {
        let mut r = rng(seed);
        let scenario = random_scenario(&mut r, GenOptions::default());
        let humanoids = random_humanoids(&mut r, &scenario, 3);
        let mut world = populate(&scenario, &humanoids);
        for _ in 0..10 {
            let h = &humanoids[r.gen_range(0..humanoids.len())].id;
            let actions: Vec<&ActionSpec> = scenario.actions.values().collect();
            let action = actions[r.gen_range(0..actions.len())];
            let mut next = world.clone();
            if simulate(&mut next, h, action) {
                world = next;
            }
            prop_assert!(world.check_invariants().is_ok());
            for hand in Hand::BOTH {
                if let HandState::Holding(o) = world.humanoids[h].hands.get(hand) {
                    prop_assert_eq!(world.objects[o].held_by.as_ref().map(|x| &x.humanoid), Some(h));
                }
            }
        }
    }
}
