use cotrain_core::engine::Tick;
use cotrain_core::repartition::CriteriaConfig;
use cotrain_core::{parse, ActionId, HumanoidId, HumanoidKind, RoleName, Scenario};
use cotrain_session::config::AgentsConfig;
use cotrain_session::event::{EventKind, SessionEvent};
use cotrain_session::session::{Avatar, Command, CommandRequest, Reply, Session, SetupError};
use cotrain_testkit::bundled;

fn scenario(name: &str) -> Scenario {
    parse(&bundled(&format!("{name}.lora.txt")))
        .unwrap()
        .scenario
}

fn agents(name: &str) -> AgentsConfig {
    AgentsConfig::from_toml(&bundled(&format!("{name}.agents.toml"))).unwrap()
}

fn avatar(id: &str, roles: &[&str]) -> Avatar {
    Avatar {
        id: id.into(),
        roles: roles.iter().map(|r| RoleName::from(*r)).collect(),
    }
}

fn session(name: &str, agents: &AgentsConfig, avatars: &[Avatar]) -> Session {
    Session::new(
        scenario(name),
        CriteriaConfig::default(),
        agents,
        1,
        avatars,
    )
    .unwrap()
}

fn request(who: &str, command: Command) -> CommandRequest {
    CommandRequest {
        humanoid: who.into(),
        request: 1,
        seen_seq: None,
        command,
    }
}

fn perform(who: &str, action: &str) -> CommandRequest {
    request(
        who,
        Command::PerformAction {
            action: action.into(),
        },
    )
}

/// Steps once with a single command and returns its reply.
fn act(s: &mut Session, command: CommandRequest) -> Reply {
    s.step(&[command]).pop().unwrap()
}

fn idle_until(s: &mut Session, tick: Tick) {
    while s.tick() < tick {
        s.step(&[]);
    }
}

fn wait(s: &mut Session, ticks: Tick) {
    for _ in 0..ticks {
        s.step(&[]);
    }
}

fn started(events: &[SessionEvent], action: &str) -> Vec<(Tick, HumanoidId, bool)> {
    events
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::ActionStarted {
                humanoid,
                action: a,
                assisted,
                ..
            } if a.as_str() == action => Some((e.tick, humanoid.clone(), *assisted)),
            _ => None,
        })
        .collect()
}

fn completed_at(events: &[SessionEvent], action: &str) -> Option<Tick> {
    events.iter().find_map(|e| match &e.kind {
        EventKind::ActionCompleted { action: a, .. } if a.as_str() == action => Some(e.tick),
        _ => None,
    })
}

fn participants(s: &Session) -> Vec<(String, HumanoidKind, Vec<String>)> {
    s.state()
        .world
        .humanoids
        .values()
        .map(|h| {
            (
                h.id.to_string(),
                h.kind,
                h.roles.iter().map(|r| r.to_string()).collect(),
            )
        })
        .collect()
}

#[test]
fn winch_follows_the_expected_timeline() {
    let mut s = session("winch", &agents("winch"), &[]);
    assert!(s.run(100));
    let events = s.events();
    assert_eq!(completed_at(events, "disconnect-power"), Some(1));
    assert_eq!(completed_at(events, "unbolt-winch"), Some(3));
    assert_eq!(
        started(events, "pull-cable"),
        [(4, "assistant".into(), false)]
    );
    assert_eq!(completed_at(events, "lift-winch"), Some(6));
    assert_eq!(s.tick(), 7);
    assert!(matches!(
        events.last().unwrap().kind,
        EventKind::ScenarioCompleted {}
    ));
    let grasps: Vec<_> = events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::ImplicitGrasp { .. }))
        .map(|e| e.tick)
        .collect();
    assert_eq!(
        grasps,
        [2],
        "the wrench is picked up right before unbolting"
    );
}

#[test]
fn avatars_displace_agents_and_auto_cast_fills_the_rest() {
    let s = session(
        "winch",
        &agents("winch"),
        &[avatar("alice", &["assistant"])],
    );
    assert_eq!(
        participants(&s),
        [
            (
                "alice".into(),
                HumanoidKind::Avatar,
                vec!["assistant".into()]
            ),
            (
                "auto-operator".into(),
                HumanoidKind::Virtual,
                vec!["operator".into()]
            ),
        ]
    );
    let s = session("winch", &agents("winch"), &[avatar("alice", &["operator"])]);
    assert_eq!(
        participants(&s),
        [
            (
                "alice".into(),
                HumanoidKind::Avatar,
                vec!["operator".into()]
            ),
            (
                "assistant".into(),
                HumanoidKind::Virtual,
                vec!["assistant".into()]
            ),
        ]
    );
    let s = session("winch", &AgentsConfig::default(), &[]);
    let ids: Vec<_> = participants(&s).into_iter().map(|p| p.0).collect();
    assert_eq!(ids, ["auto-assistant", "auto-operator"]);
    // Casting is recorded as events at tick 0.
    assert!(s.events().iter().all(|e| e.tick == 0));
    assert_eq!(
        s.events()
            .iter()
            .filter(|e| matches!(e.kind, EventKind::RoleClaimed { .. }))
            .count(),
        2
    );
}

#[test]
fn role_positions_and_busy_hands_come_with_the_role() {
    let s = session("dark-screw", &agents("dark-screw"), &[]);
    let worker = &s.state().world.humanoids[&HumanoidId::from("worker1")];
    assert_eq!(worker.hands.left, cotrain_core::hands::HandState::Busy);
    let helper = &s.state().world.humanoids[&HumanoidId::from("helper")];
    assert_eq!((helper.position.x, helper.position.y), (2.0, 0.0));
}

#[test]
fn invalid_casts_are_refused_before_tick_zero() {
    let setup = |avatars: &[Avatar]| {
        Session::new(
            scenario("winch"),
            CriteriaConfig::default(),
            &agents("winch"),
            0,
            avatars,
        )
        .map(|_| ())
    };
    assert!(matches!(
        setup(&[avatar("alice", &["pilot"])]),
        Err(SetupError::UnknownRole(_))
    ));
    assert!(matches!(
        setup(&[avatar("alice", &["operator"]), avatar("bob", &["operator"])]),
        Err(SetupError::RoleTaken { .. })
    ));
    assert!(matches!(
        setup(&[avatar("alice", &[]), avatar("alice", &[])]),
        Err(SetupError::DuplicateParticipant(_))
    ));
    assert!(matches!(
        setup(&[avatar("not valid", &[])]),
        Err(SetupError::BadId(_))
    ));
    // An avatar named like an agent that still has a role to play.
    assert!(matches!(
        setup(&[avatar("assistant", &["operator"])]),
        Err(SetupError::DuplicateParticipant(_))
    ));
    let bad_agents =
        AgentsConfig::from_toml("[[agent]]\nid = \"x\"\nroles = [\"pilot\"]\n").unwrap();
    assert!(matches!(
        Session::new(
            scenario("winch"),
            CriteriaConfig::default(),
            &bad_agents,
            0,
            &[]
        ),
        Err(SetupError::Agents(_))
    ));
    let criteria = CriteriaConfig {
        lookahead_depth: 0,
        ..CriteriaConfig::default()
    };
    assert!(matches!(
        Session::new(
            scenario("winch"),
            criteria,
            &AgentsConfig::default(),
            0,
            &[]
        ),
        Err(SetupError::Criteria(_))
    ));
}

#[test]
fn an_avatar_drives_the_operator_role() {
    let mut s = session("winch", &agents("winch"), &[avatar("alice", &["operator"])]);
    let Reply::Allowed { actions, seq } = act(&mut s, request("alice", Command::QueryAllowed))
    else {
        panic!("query answered")
    };
    assert!(seq > 0);
    let ids: Vec<_> = actions.iter().map(|a| a.action.to_string()).collect();
    assert_eq!(ids, ["disconnect-power"]);
    assert_eq!(actions[0].best_candidate, Some("alice".into()));
    assert!(actions[0].hands_ready);

    // Someone else's action is refused; the avatar's own is accepted.
    assert!(matches!(
        act(&mut s, perform("alice", "pull-cable")),
        Reply::Rejected { .. }
    ));
    assert_eq!(
        act(&mut s, perform("alice", "disconnect-power")),
        Reply::Accepted
    );
    let Reply::Rejected { reason } = act(&mut s, perform("alice", "disconnect-power")) else {
        panic!("busy")
    };
    assert!(
        reason.contains("busy") || reason.contains("not enabled"),
        "{reason}"
    );
    wait(&mut s, 1);
    assert_eq!(
        act(&mut s, perform("alice", "unbolt-winch")),
        Reply::Accepted
    );
    wait(&mut s, 3);
    assert!(
        completed_at(s.events(), "pull-cable").is_some(),
        "the assistant pulls the cable"
    );

    // Both sides notify: the virtual assistant on its own, alice by command.
    let slot = request(
        "alice",
        Command::NotifyIntent {
            slot: "notify-operator-lift".into(),
        },
    );
    assert_eq!(act(&mut s, slot), Reply::Accepted);
    wait(&mut s, 3);
    assert!(completed_at(s.events(), "lift-winch").is_some());
    assert!(s.is_completed());
    let Reply::Rejected { reason } = act(&mut s, perform("alice", "disconnect-power")) else {
        panic!("completed")
    };
    assert!(reason.contains("completed"));
}

#[test]
fn stale_commands_are_flagged() {
    let mut s = session("winch", &agents("winch"), &[avatar("alice", &["operator"])]);
    s.step(&[]);
    let mut late = perform("alice", "unbolt-winch");
    late.seen_seq = Some(0);
    let Reply::Rejected { reason } = act(&mut s, late) else {
        panic!()
    };
    assert!(reason.starts_with("stale: "), "{reason}");
    let mut fresh = perform("alice", "unbolt-winch");
    fresh.seen_seq = Some(s.state().next_seq);
    let Reply::Rejected { reason } = act(&mut s, fresh) else {
        panic!()
    };
    assert!(!reason.starts_with("stale"), "{reason}");
}

#[test]
fn virtual_humans_and_unknown_senders_cannot_command() {
    let mut s = session("winch", &agents("winch"), &[avatar("alice", &["operator"])]);
    assert!(matches!(
        act(&mut s, perform("assistant", "pull-cable")),
        Reply::Rejected { .. }
    ));
    assert!(matches!(
        act(&mut s, perform("mallory", "disconnect-power")),
        Reply::Rejected { .. }
    ));
    let collaborative = perform("alice", "lift-winch");
    assert!(matches!(act(&mut s, collaborative), Reply::Rejected { .. }));
    let not_a_slot = request(
        "alice",
        Command::NotifyIntent {
            slot: "disconnect-power".into(),
        },
    );
    assert!(matches!(act(&mut s, not_a_slot), Reply::Rejected { .. }));
}

#[test]
fn messages_complete_matching_communications() {
    let guide_only =
        AgentsConfig::from_toml("[[agent]]\nid = \"driver\"\nroles = [\"driver\"]\n").unwrap();
    let mut s = session(
        "guided-manoeuvre",
        &guide_only,
        &[avatar("gus", &["guide"])],
    );
    let say = |to: &str, message: &str| {
        request(
            "gus",
            Command::Communicate {
                to: to.into(),
                message: message.into(),
            },
        )
    };
    // Free chatter is accepted but completes nothing.
    assert_eq!(act(&mut s, say("driver", "hello")), Reply::Accepted);
    assert!(matches!(
        act(&mut s, say("nobody", "hello")),
        Reply::Rejected { .. }
    ));
    assert!(matches!(
        act(&mut s, perform("gus", "say-stop")),
        Reply::Rejected { .. }
    ));
    assert_eq!(
        act(&mut s, say("driver", "turn on the right")),
        Reply::Accepted
    );
    let sent: Vec<Option<ActionId>> = s
        .events()
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::CommunicationSent { action, .. } => Some(action.clone()),
            _ => None,
        })
        .collect();
    assert_eq!(sent, [None, Some("say-turn".into())]);
    wait(&mut s, 2);
    assert!(completed_at(s.events(), "turn-right").is_some());
    assert_eq!(act(&mut s, perform("gus", "say-stop")), Reply::Accepted);
    wait(&mut s, 2);
    assert!(s.is_completed());
}

#[test]
fn the_helper_holds_the_plate_while_worker1_holds_the_lamp() {
    let mut s = session("dark-screw", &agents("dark-screw"), &[]);
    assert!(s.run(50));
    assert_eq!(
        started(s.events(), "hold-plate"),
        [(0, "helper".into(), true)]
    );
    assert_eq!(
        started(s.events(), "unscrew"),
        [(2, "worker1".into(), false)]
    );
}

#[test]
fn worker1_holds_the_plate_when_its_hands_are_free() {
    let text = bundled("dark-screw.lora.txt").replace(" hands=busy,free", "");
    let scenario = parse(&text).unwrap().scenario;
    let mut s = Session::new(
        scenario,
        CriteriaConfig::default(),
        &agents("dark-screw"),
        1,
        &[],
    )
    .unwrap();
    assert!(s.run(50));
    assert_eq!(
        started(s.events(), "hold-plate"),
        [(0, "worker1".into(), false)]
    );
}

#[test]
fn lone_notifications_expire_and_can_be_renewed() {
    let mut s = session(
        "winch",
        &AgentsConfig::default(),
        &[
            avatar("alice", &["operator"]),
            avatar("bob", &["assistant"]),
        ],
    );
    s.step(&[perform("alice", "disconnect-power")]);
    idle_until(&mut s, 1);
    s.step(&[perform("alice", "unbolt-winch")]);
    idle_until(&mut s, 3);
    s.step(&[perform("bob", "pull-cable")]);
    idle_until(&mut s, 5);
    let notify = |who: &str, slot: &str| request(who, Command::NotifyIntent { slot: slot.into() });
    assert_eq!(
        act(&mut s, notify("alice", "notify-operator-lift")),
        Reply::Accepted
    );
    let notified = s.tick();
    idle_until(&mut s, notified + 10);
    let expired: Vec<Tick> = s
        .events()
        .iter()
        .filter(|e| matches!(e.kind, EventKind::NotificationExpired { .. }))
        .map(|e| e.tick)
        .collect();
    assert_eq!(expired, [notified + 10]);
    let Reply::Allowed { actions, .. } = act(&mut s, request("alice", Command::QueryAllowed))
    else {
        panic!()
    };
    assert!(actions
        .iter()
        .any(|a| a.action.as_str() == "notify-operator-lift"));
    let replies = s.step(&[
        notify("alice", "notify-operator-lift"),
        notify("bob", "notify-assistant-lift"),
    ]);
    assert_eq!(replies, [Reply::Accepted, Reply::Accepted]);
    assert!(completed_at(s.events(), "lift-winch").is_some());
}

#[test]
fn every_bundled_scenario_completes_with_tutors() {
    for (name, _) in cotrain_testkit::bundled_scenarios() {
        let base = name.trim_end_matches(".lora.txt");
        let mut s = session(base, &AgentsConfig::default(), &[]);
        let budget = 10 * s.scenario().graph.steps.len() as Tick;
        assert!(s.run(budget), "{name} stalled at tick {}", s.tick());
    }
}

#[test]
fn run_respects_the_tick_budget() {
    let idle = AgentsConfig::from_toml(
        "auto_cast_profile = { p_follow = 0.0, p_error = 0.0, p_hinder = 0.0, p_idle = 1.0 }\n",
    )
    .unwrap();
    let mut s = session("winch", &idle, &[]);
    assert!(!s.run(5));
    assert_eq!(s.tick(), 4);
    assert!(s.events().iter().all(|e| matches!(
        e.kind,
        EventKind::ParticipantJoined { .. }
            | EventKind::RoleClaimed { .. }
            | EventKind::ScoresPublished { .. }
    )));
}

#[test]
fn scores_are_published_only_when_they_change() {
    let mut s = session("winch", &agents("winch"), &[]);
    s.run(100);
    let published: Vec<&SessionEvent> = s
        .events()
        .iter()
        .filter(|e| matches!(e.kind, EventKind::ScoresPublished { .. }))
        .collect();
    for pair in published.windows(2) {
        assert_ne!(pair[0].kind, pair[1].kind);
    }
    assert!(published.len() >= 5);
}
