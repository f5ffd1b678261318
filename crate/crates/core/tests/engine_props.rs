use cotrain_core::dsl::Scenario;
use cotrain_core::engine::{enabled_actions, EngineError, EngineEvent};
use cotrain_core::{ActionId, Humanoid, HumanoidId, HumanoidKind, ScenarioState, WorldState};
use cotrain_testkit::collab::{
    collab_fixture, run_engine, simulate, starts_single_shot, NotifyAttempt,
};
use cotrain_testkit::gen::{random_scenario, rng, GenOptions, ACTOR_ABILITIES, UNDECLARED_ROLE};
use cotrain_testkit::marking::{ModelError, TokenModel};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

const PERFORMERS: usize = 4;

/// Scenario world plus humanoids allowed to perform anything.
fn omnipotent_world(scenario: &Scenario) -> WorldState {
    let mut world = scenario.world.clone();
    let mut roles: Vec<String> = scenario.roles.keys().map(|r| r.to_string()).collect();
    roles.push(UNDECLARED_ROLE.into());
    for i in 0..PERFORMERS {
        world
            .add_humanoid(
                Humanoid::new(format!("any{i}"), HumanoidKind::Virtual)
                    .with_roles(roles.clone())
                    .with_abilities(ACTOR_ABILITIES),
            )
            .unwrap();
    }
    world
}

/// First performer the engine accepts for the action.
fn perform_with_anyone(
    state: &mut ScenarioState,
    scenario: &Scenario,
    world: &WorldState,
    action: &ActionId,
    tick: u64,
) -> Result<Vec<EngineEvent>, EngineError> {
    let mut last = None;
    for i in 0..PERFORMERS {
        let who = HumanoidId::from(format!("any{i}"));
        match state.perform(scenario, world, action, &[who], tick) {
            Ok(events) => return Ok(events),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one performer"))
}

fn enabled_ids(state: &ScenarioState, scenario: &Scenario) -> Vec<ActionId> {
    enabled_actions(state, scenario)
        .into_iter()
        .map(|(id, _)| id)
        .collect()
}

/// Random walk through the scenario, checked step by step against the
/// token-count model. Returns the engine's event log.
fn walk_against_model(seed: u64) -> Vec<EngineEvent> {
    let mut r = rng(seed);
    let scenario = random_scenario(&mut r, GenOptions::default());
    let world = omnipotent_world(&scenario);
    let mut state = ScenarioState::new(&scenario);
    let mut model = TokenModel::new(&scenario);
    let mut log = Vec::new();
    let mut tick = 0;
    for _ in 0..60 {
        let enabled = model.enabled();
        assert_eq!(enabled_ids(&state, &scenario), enabled, "seed {seed}");
        assert_eq!(
            state.marked_steps.iter().cloned().collect::<Vec<_>>(),
            model.marked(),
            "seed {seed}"
        );
        assert_eq!(state.completed, model.is_complete(), "seed {seed}");
        let Some(action) = enabled.choose(&mut r).cloned() else {
            break;
        };
        tick += r.gen_range(0..=3);
        let events = perform_with_anyone(&mut state, &scenario, &world, &action, tick)
            .unwrap_or_else(|e| panic!("seed {seed}: {action} refused: {e}"));
        for event in &events {
            if let EngineEvent::NotificationExpired { slot, .. } = event {
                model.expire(slot);
            }
        }
        match model.complete(&action) {
            Ok(()) => {}
            Err(ModelError::Unsafe(step)) => panic!("seed {seed}: two tokens on {step}"),
            Err(e) => panic!("seed {seed}: model refused {e:?}"),
        }
        log.extend(events);
    }
    log
}

#[test]
fn marking_matches_token_model_on_random_walks() {
    for seed in 0..400 {
        walk_against_model(seed);
    }
}

#[test]
fn replaying_the_same_walk_gives_the_same_events() {
    for seed in 0..50 {
        assert_eq!(walk_against_model(seed), walk_against_model(seed));
    }
}

#[test]
fn scenario_completion_is_announced_once() {
    let mut finished = 0;
    for seed in 0..200 {
        let count = walk_against_model(seed)
            .iter()
            .filter(|e| matches!(e, EngineEvent::ScenarioCompleted { .. }))
            .count();
        assert!(count <= 1, "seed {seed}");
        finished += count;
    }
    assert!(
        finished > 100,
        "walks should usually finish, got {finished}"
    );
}

fn attempts(slots: usize) -> impl Strategy<Value = Vec<NotifyAttempt>> {
    prop::collection::vec((0..slots, 0u64..30), 0..10).prop_map(|v| {
        let mut v: Vec<NotifyAttempt> = v
            .into_iter()
            .map(|(slot, tick)| NotifyAttempt { slot, tick })
            .collect();
        v.sort_by_key(|a| a.tick);
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn collaborative_timing_matches_reference(
        (slots, timeout, schedule) in (2usize..=4, 1u32..=10)
            .prop_flat_map(|(s, t)| (Just(s), Just(t), attempts(s)))
    ) {
        let (scenario, world) = collab_fixture(slots, timeout);
        let engine = run_engine(&scenario, &world, &schedule, 40);
        let reference = simulate(slots, u64::from(timeout), &schedule, 40);
        prop_assert_eq!(engine, reference);
    }

    #[test]
    fn single_notifications_start_iff_windows_overlap(
        (timeout, ticks) in (1u32..=10).prop_flat_map(|t| (Just(t), prop::collection::vec(0u64..25, 2..=4)))
    ) {
        let slots = ticks.len();
        let mut schedule: Vec<NotifyAttempt> =
            ticks.iter().enumerate().map(|(slot, &tick)| NotifyAttempt { slot, tick }).collect();
        schedule.sort_by_key(|a| a.tick);
        let (scenario, world) = collab_fixture(slots, timeout);
        let engine = run_engine(&scenario, &world, &schedule, 40);
        prop_assert_eq!(engine.started_at, starts_single_shot(&ticks, u64::from(timeout)));
    }

    #[test]
    fn refused_performs_leave_state_untouched(seed in any::<u64>()) {
        let mut r = rng(seed);
        let scenario = random_scenario(&mut r, GenOptions::default());
        let world = omnipotent_world(&scenario);
        let mut state = ScenarioState::new(&scenario);
        let before = state.clone();
        let disabled: Vec<ActionId> = scenario
            .actions
            .keys()
            .filter(|a| !state.is_enabled(&scenario, a))
            .cloned()
            .collect();
        for action in disabled {
            prop_assert!(state.perform(&scenario, &world, &action, &["any0".into()], 3).is_err());
            prop_assert_eq!(&state, &before);
        }
    }
}

#[test]
fn one_humanoid_cannot_fill_two_slots() {
    let (scenario, mut world) = collab_fixture(2, 5);
    let both = Humanoid::new("both", HumanoidKind::Virtual).with_roles(["r0", "r1"]);
    world.add_humanoid(both).unwrap();
    let mut state = ScenarioState::new(&scenario);
    state
        .perform(&scenario, &world, &"notify0".into(), &["both".into()], 0)
        .unwrap();
    let err = state
        .perform(&scenario, &world, &"notify1".into(), &["both".into()], 1)
        .unwrap_err();
    assert!(matches!(err, EngineError::AlreadyNotified { .. }));
    state
        .perform(&scenario, &world, &"notify1".into(), &["p1".into()], 1)
        .unwrap();
    assert!(state.completed);
}

#[test]
fn expired_notification_can_be_renewed() {
    let (scenario, world) = collab_fixture(2, 3);
    let mut state = ScenarioState::new(&scenario);
    state
        .perform(&scenario, &world, &"notify0".into(), &["p0".into()], 0)
        .unwrap();
    let events = state.advance_clock(&scenario, 3).unwrap();
    assert!(matches!(
        events.as_slice(),
        [EngineEvent::NotificationExpired { tick: 3, .. }]
    ));
    state
        .perform(&scenario, &world, &"notify0".into(), &["p0".into()], 4)
        .unwrap();
    let events = state
        .perform(&scenario, &world, &"notify1".into(), &["p1".into()], 6)
        .unwrap();
    assert!(events
        .iter()
        .any(|e| matches!(e, EngineEvent::CollaborativeStarted { tick: 6, .. })));
}
