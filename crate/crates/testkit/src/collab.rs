//! Tick-by-tick model of a collaborative action with n notification slots,
//! and a harness running the same schedule through the real engine.

use cotrain_core::dsl::{parse, Scenario};
use cotrain_core::engine::EngineEvent;
use cotrain_core::{Humanoid, HumanoidKind, ScenarioState, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NotifyAttempt {
    pub slot: usize,
    pub tick: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CollabOutcome {
    pub started_at: Option<u64>,
    /// (slot, tick) of every expiry, in order.
    pub expirations: Vec<(usize, u64)>,
}

/// Reference automaton. At each tick, notifications whose expiry has been
/// reached drop first, then the tick's attempts arrive in order. An attempt
/// on a slot that is still armed is refused. The collaborative action starts
/// the moment every slot is armed.
pub fn simulate(
    slots: usize,
    timeout: u64,
    attempts: &[NotifyAttempt],
    horizon: u64,
) -> CollabOutcome {
    let mut armed: Vec<Option<u64>> = vec![None; slots];
    let mut outcome = CollabOutcome::default();
    for tick in 0..=horizon {
        for (slot, expiry) in armed.iter_mut().enumerate() {
            if expiry.is_some_and(|e| e <= tick) {
                *expiry = None;
                outcome.expirations.push((slot, tick));
            }
        }
        for attempt in attempts.iter().filter(|a| a.tick == tick) {
            if armed[attempt.slot].is_none() {
                armed[attempt.slot] = Some(tick + timeout);
            }
            if armed.iter().all(Option::is_some) {
                outcome.started_at = Some(tick);
                return outcome;
            }
        }
    }
    outcome
}

/// Closed form for one notification per slot: the half-open windows
/// `[t, t + timeout)` must share a tick.
pub fn starts_single_shot(ticks: &[u64], timeout: u64) -> Option<u64> {
    let first = *ticks.iter().min()?;
    let last = *ticks.iter().max()?;
    (last < first + timeout).then_some(last)
}

pub fn slot_action(slot: usize) -> String {
    format!("notify{slot}")
}

/// Scenario with one collaborative action fed by `slots` notifications,
/// each reserved to its own role, and a world with one humanoid per role.
pub fn collab_fixture(slots: usize, timeout: u32) -> (Scenario, WorldState) {
    let mut src = String::from("ROLES\n");
    for i in 0..slots {
        src.push_str(&format!("role r{i}\n"));
    }
    src.push_str("ACTIONS\n");
    let names: Vec<String> = (0..slots).map(slot_action).collect();
    for (i, name) in names.iter().enumerate() {
        src.push_str(&format!(
            "action {name} notify collaborative=together roles=r{i}:1\n"
        ));
    }
    src.push_str(&format!(
        "action together collaborative slots={} timeout={timeout} roles=r0:1\nGRAPH\n",
        names.join(",")
    ));
    for name in &names {
        src.push_str(&format!("step st-{name} action={name} initial\n"));
    }
    src.push_str("step st-together action=together\nstep end terminal\n");
    let froms: Vec<String> = names.iter().map(|n| format!("st-{n}")).collect();
    src.push_str(&format!("transition {} -> st-together\n", froms.join(",")));
    src.push_str("transition st-together -> end\n");
    let scenario = parse(&src).expect("fixture parses").scenario;
    let mut world = scenario.world.clone();
    for i in 0..slots {
        world
            .add_humanoid(
                Humanoid::new(format!("p{i}"), HumanoidKind::Virtual).with_roles([format!("r{i}")]),
            )
            .expect("fresh humanoid");
    }
    (scenario, world)
}

/// Same schedule through the engine: expire, then attempt, tick by tick.
pub fn run_engine(
    scenario: &Scenario,
    world: &WorldState,
    attempts: &[NotifyAttempt],
    horizon: u64,
) -> CollabOutcome {
    let mut state = ScenarioState::new(scenario);
    let mut outcome = CollabOutcome::default();
    let slot_of = |name: &str| {
        name.trim_start_matches("notify")
            .parse::<usize>()
            .expect("slot name")
    };
    let record = |events: Vec<EngineEvent>, outcome: &mut CollabOutcome| {
        for event in events {
            match event {
                EngineEvent::NotificationExpired { slot, tick, .. } => {
                    outcome.expirations.push((slot_of(slot.as_str()), tick));
                }
                EngineEvent::CollaborativeStarted { tick, .. } => outcome.started_at = Some(tick),
                _ => {}
            }
        }
    };
    for tick in 0..=horizon {
        let events = state.advance_clock(scenario, tick).expect("monotone clock");
        record(events, &mut outcome);
        for attempt in attempts.iter().filter(|a| a.tick == tick) {
            let action = slot_action(attempt.slot).into();
            let performer = format!("p{}", attempt.slot).into();
            if let Ok(events) = state.perform(scenario, world, &action, &[performer], tick) {
                record(events, &mut outcome);
            }
            if outcome.started_at.is_some() {
                return outcome;
            }
        }
    }
    outcome
}
