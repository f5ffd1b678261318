use std::net::{SocketAddr, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::Ordering;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use cotrain_core::repartition::CriteriaConfig;
use cotrain_core::{parse, ActionId, HumanoidId, Scenario};
use cotrain_session::config::AgentsConfig;
use cotrain_session::event::EventKind;
use cotrain_session::log::replay_text;
use cotrain_session::protocol::{read_frame, write_frame, ClientMessage, ServerMessage};
use cotrain_session::server::{Server, ServerConfig, ServerError, ServerOutcome};
use cotrain_session::session::{Avatar, Command, Session};
use cotrain_testkit::bundled;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PATIENCE: Duration = Duration::from_secs(20);

fn winch() -> Scenario {
    parse(&bundled("winch.lora.txt")).unwrap().scenario
}

fn config(scenario: Scenario, agents: AgentsConfig, log: Option<PathBuf>) -> ServerConfig {
    ServerConfig {
        scenario,
        criteria: CriteriaConfig::default(),
        agents,
        seed: 3,
        tick: Duration::from_millis(5),
        token: None,
        log_path: log,
        max_ticks: Some(400),
    }
}

fn spawn(config: ServerConfig) -> (SocketAddr, JoinHandle<Result<ServerOutcome, ServerError>>) {
    let server = Server::bind("127.0.0.1:0").unwrap();
    let addr = server.local_addr();
    (addr, thread::spawn(move || server.run(config)))
}

struct Client {
    stream: TcpStream,
    request: u64,
    seen: u64,
}

impl Client {
    fn connect(addr: SocketAddr) -> Self {
        let stream = TcpStream::connect(addr).unwrap();
        stream.set_read_timeout(Some(PATIENCE)).unwrap();
        Client {
            stream,
            request: 0,
            seen: 0,
        }
    }

    fn send(&mut self, message: &ClientMessage) {
        write_frame(&mut self.stream, message).unwrap();
    }

    fn recv(&mut self) -> ServerMessage {
        let message: ServerMessage = read_frame(&mut self.stream)
            .unwrap()
            .expect("server still talking");
        if let ServerMessage::Event { event } = &message {
            self.seen = event.seq + 1;
        }
        message
    }

    /// Reads until a message matches, returning it.
    fn until(&mut self, mut pred: impl FnMut(&ServerMessage) -> bool) -> ServerMessage {
        let deadline = Instant::now() + PATIENCE;
        loop {
            assert!(Instant::now() < deadline, "timed out");
            let message = self.recv();
            if pred(&message) {
                return message;
            }
        }
    }

    fn join(&mut self, name: &str, observer: bool) -> ServerMessage {
        self.send(&ClientMessage::Join {
            token: None,
            name: name.into(),
            observer,
        });
        self.recv()
    }

    fn command(&mut self, command: Command) -> u64 {
        assert!(self.try_command(command), "server hung up");
        self.request
    }

    /// Sends a command, returning false once the server has closed the connection.
    fn try_command(&mut self, command: Command) -> bool {
        self.request += 1;
        let message = ClientMessage::Command {
            request: self.request,
            seen_seq: Some(self.seen),
            command,
        };
        write_frame(&mut self.stream, &message).is_ok()
    }
}

fn completed(message: &ServerMessage, action: &str) -> bool {
    matches!(message, ServerMessage::Event { event } if matches!(
        &event.kind,
        EventKind::ActionCompleted { action: a, .. } if a.as_str() == action
    ))
}

#[test]
fn a_tcp_client_plays_the_operator_to_the_end() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("session.events");
    let agents = AgentsConfig::from_toml(&bundled("winch.agents.toml")).unwrap();
    let (addr, server) = spawn(config(winch(), agents, Some(log.clone())));

    let mut alice = Client::connect(addr);
    let ServerMessage::Welcome {
        participant,
        roles,
        scenario,
        ..
    } = alice.join("alice", false)
    else {
        panic!("welcome expected")
    };
    assert_eq!(participant.as_str(), "alice");
    assert_eq!(roles.len(), 2);
    assert!(parse(&scenario).is_ok());
    alice.send(&ClientMessage::ClaimRole {
        role: "operator".into(),
    });
    assert!(matches!(alice.recv(), ServerMessage::RoleClaimed { .. }));
    alice.send(&ClientMessage::Start);
    let ServerMessage::Started { snapshot } =
        alice.until(|m| matches!(m, ServerMessage::Started { .. }))
    else {
        unreachable!()
    };
    alice.seen = snapshot.seq;

    let query = alice.command(Command::QueryAllowed);
    let ServerMessage::Allowed { actions, .. } =
        alice.until(|m| matches!(m, ServerMessage::Allowed { request, .. } if *request == query))
    else {
        unreachable!()
    };
    assert_eq!(
        actions
            .iter()
            .map(|a| a.action.as_str())
            .collect::<Vec<_>>(),
        ["disconnect-power"]
    );

    for (action, done) in [
        ("disconnect-power", "disconnect-power"),
        ("unbolt-winch", "pull-cable"),
    ] {
        let id = alice.command(Command::PerformAction {
            action: action.into(),
        });
        alice.until(|m| matches!(m, ServerMessage::Accepted { request } if *request == id));
        alice.until(|m| completed(m, done));
    }
    alice.command(Command::NotifyIntent {
        slot: "notify-operator-lift".into(),
    });
    let ServerMessage::Finished {
        final_hash,
        completed,
        ..
    } = alice.until(|m| matches!(m, ServerMessage::Finished { .. }))
    else {
        unreachable!()
    };
    assert!(completed);
    let outcome = server.join().unwrap().unwrap();
    assert_eq!(outcome.final_hash, final_hash);
    let report = replay_text(&std::fs::read_to_string(&log).unwrap()).unwrap();
    assert_eq!(report.final_hash, final_hash);
    assert!(report.completed);
}

#[test]
fn lobby_rules_are_enforced() {
    let mut config = config(winch(), AgentsConfig::default(), None);
    config.token = Some("letmein".into());
    let (addr, server) = spawn(config);
    let mut intruder = Client::connect(addr);
    intruder.send(&ClientMessage::Join {
        token: Some("wrong".into()),
        name: "eve".into(),
        observer: false,
    });
    assert!(
        matches!(intruder.recv(), ServerMessage::Error { message } if message.contains("token"))
    );
    drop(intruder);

    let join = |client: &mut Client, name: &str, observer: bool| {
        client.send(&ClientMessage::Join {
            token: Some("letmein".into()),
            name: name.into(),
            observer,
        });
        client.recv()
    };
    let mut alice = Client::connect(addr);
    let mut bob = Client::connect(addr);
    let mut trainer = Client::connect(addr);
    assert!(matches!(
        join(&mut alice, "alice", false),
        ServerMessage::Welcome { .. }
    ));
    assert!(
        matches!(join(&mut bob, "alice", false), ServerMessage::Error { .. }),
        "names are unique"
    );
    assert!(matches!(
        join(&mut bob, "auto-operator", false),
        ServerMessage::Error { .. }
    ));
    assert!(matches!(
        join(&mut bob, "bob", false),
        ServerMessage::Welcome { .. }
    ));
    assert!(matches!(
        join(&mut trainer, "trainer", true),
        ServerMessage::Welcome { observer: true, .. }
    ));

    alice.command(Command::QueryAllowed);
    assert!(
        matches!(alice.recv(), ServerMessage::Error { message } if message.contains("not started"))
    );
    alice.send(&ClientMessage::ClaimRole {
        role: "operator".into(),
    });
    assert!(matches!(alice.recv(), ServerMessage::RoleClaimed { .. }));
    assert!(
        matches!(bob.recv(), ServerMessage::RoleClaimed { .. }),
        "claims are broadcast"
    );
    bob.send(&ClientMessage::ClaimRole {
        role: "operator".into(),
    });
    assert!(
        matches!(bob.recv(), ServerMessage::RoleTaken { holder, .. } if holder.as_str() == "alice")
    );
    trainer.send(&ClientMessage::ClaimRole {
        role: "assistant".into(),
    });
    trainer.until(|m| matches!(m, ServerMessage::Error { .. }));

    trainer.send(&ClientMessage::Start);
    trainer.until(|m| matches!(m, ServerMessage::Started { .. }));
    let id = trainer.command(Command::QueryAllowed);
    assert!(matches!(
        trainer.until(|m| matches!(m, ServerMessage::Rejected { .. })),
        ServerMessage::Rejected { request, .. } if request == id
    ));
    trainer.send(&ClientMessage::Snapshot);
    let ServerMessage::Snapshot { snapshot } =
        trainer.until(|m| matches!(m, ServerMessage::Snapshot { .. }))
    else {
        unreachable!()
    };
    assert!(snapshot
        .participants
        .contains_key(&HumanoidId::from("alice")));
    assert!(snapshot
        .participants
        .contains_key(&HumanoidId::from("auto-assistant")));
    drop((alice, bob, trainer));
    // Nobody acts for the operator: the tick budget ends the session.
    let outcome = server.join().unwrap().unwrap();
    assert!(!outcome.completed);
}

#[test]
fn websocket_observers_follow_the_session() {
    let agents = AgentsConfig::from_toml(&bundled("winch.agents.toml")).unwrap();
    let (addr, server) = spawn(config(winch(), agents, None));
    let (mut ws, _) = tungstenite::connect(format!("ws://{addr}/session")).unwrap();
    let send = |ws: &mut tungstenite::WebSocket<_>, message: &ClientMessage| {
        ws.send(tungstenite::Message::text(
            serde_json::to_string(message).unwrap(),
        ))
        .unwrap();
    };
    let recv = |ws: &mut tungstenite::WebSocket<_>| loop {
        match ws.read().unwrap() {
            tungstenite::Message::Text(text) => {
                return serde_json::from_str::<ServerMessage>(&text).unwrap()
            }
            _ => continue,
        }
    };
    send(
        &mut ws,
        &ClientMessage::Join {
            token: None,
            name: "trainer".into(),
            observer: true,
        },
    );
    assert!(matches!(
        recv(&mut ws),
        ServerMessage::Welcome { observer: true, .. }
    ));
    send(&mut ws, &ClientMessage::Start);
    let mut events = Vec::new();
    let finished = loop {
        match recv(&mut ws) {
            ServerMessage::Event { event } => events.push(event),
            m @ ServerMessage::Finished { .. } => break m,
            _ => {}
        }
    };
    let ServerMessage::Finished {
        final_hash,
        completed,
        tick,
    } = finished
    else {
        unreachable!()
    };
    assert!(completed);
    assert_eq!(tick, 7);
    let outcome = server.join().unwrap().unwrap();
    assert_eq!(outcome.final_hash, final_hash);
    let seqs: Vec<u64> = events.iter().map(|e| e.seq).collect();
    assert!(
        seqs.windows(2).all(|w| w[1] == w[0] + 1),
        "events arrive in order without gaps"
    );
}

#[test]
fn the_stop_flag_ends_a_running_session() {
    let idle = AgentsConfig::from_toml(
        "auto_cast_profile = { p_follow = 0.0, p_error = 0.0, p_hinder = 0.0, p_idle = 1.0 }\n",
    )
    .unwrap();
    let mut config = config(winch(), idle, None);
    config.max_ticks = None;
    let server = Server::bind("127.0.0.1:0").unwrap();
    let addr = server.local_addr();
    let stop = server.stop_handle();
    let handle = thread::spawn(move || server.run(config));
    let mut trainer = Client::connect(addr);
    trainer.join("trainer", true);
    trainer.send(&ClientMessage::Start);
    trainer.until(|m| matches!(m, ServerMessage::Started { .. }));
    thread::sleep(Duration::from_millis(50));
    stop.store(true, Ordering::SeqCst);
    assert!(matches!(
        trainer.until(|m| matches!(m, ServerMessage::Finished { .. })),
        ServerMessage::Finished {
            completed: false,
            ..
        }
    ));
    assert!(!handle.join().unwrap().unwrap().completed);
}

#[test]
fn binding_a_busy_port_fails() {
    let first = Server::bind("127.0.0.1:0").unwrap();
    assert!(matches!(
        Server::bind(first.local_addr()),
        Err(ServerError::Bind(_))
    ));
}

/// Two clients fire random commands without waiting for replies. However
/// their messages interleave, stepping a fresh session through the commands
/// in the order the server received them gives the same final state.
#[test]
fn interleaved_clients_match_sequential_application() {
    for round in 0..4u64 {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("fuzz.events");
        let mut config = config(winch(), AgentsConfig::default(), Some(log.clone()));
        config.tick = Duration::from_millis(2);
        config.max_ticks = Some(60);
        config.seed = round;
        let (addr, server) = spawn(config.clone());
        let mut alice = Client::connect(addr);
        let mut bob = Client::connect(addr);
        alice.join("alice", false);
        bob.join("bob", false);
        alice.send(&ClientMessage::ClaimRole {
            role: "operator".into(),
        });
        alice.recv();
        bob.recv();
        bob.send(&ClientMessage::ClaimRole {
            role: "assistant".into(),
        });
        bob.recv();
        alice.recv();
        alice.send(&ClientMessage::Start);
        alice.until(|m| matches!(m, ServerMessage::Started { .. }));
        bob.until(|m| matches!(m, ServerMessage::Started { .. }));

        let actions: Vec<ActionId> = config.scenario.actions.keys().cloned().collect();
        let fire = |mut client: Client, seed: u64| {
            let actions = actions.clone();
            thread::spawn(move || {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                for _ in 0..150 {
                    let command = match r.gen_range(0..4) {
                        0 => Command::QueryAllowed,
                        1 => Command::NotifyIntent {
                            slot: (*["notify-operator-lift", "notify-assistant-lift"]
                                .choose(&mut r)
                                .unwrap())
                            .into(),
                        },
                        2 => Command::Communicate {
                            to: "operator".into(),
                            message: "winch removed".into(),
                        },
                        _ => Command::PerformAction {
                            action: actions.choose(&mut r).unwrap().clone(),
                        },
                    };
                    if !client.try_command(command) {
                        break;
                    }
                    thread::sleep(Duration::from_micros(r.gen_range(0..600)));
                }
                client
            })
        };
        let a = fire(alice, round * 2);
        let b = fire(bob, round * 2 + 1);
        let (mut alice, _bob) = (a.join().unwrap(), b.join().unwrap());
        let ServerMessage::Finished { final_hash, .. } =
            alice.until(|m| matches!(m, ServerMessage::Finished { .. }))
        else {
            unreachable!()
        };
        let outcome = server.join().unwrap().unwrap();
        assert_eq!(outcome.final_hash, final_hash);
        assert!(outcome.journal.iter().map(Vec::len).sum::<usize>() > 0);

        let avatars = [
            Avatar {
                id: "alice".into(),
                roles: vec!["operator".into()],
            },
            Avatar {
                id: "bob".into(),
                roles: vec!["assistant".into()],
            },
        ];
        let mut offline = Session::new(
            config.scenario.clone(),
            config.criteria.clone(),
            &config.agents,
            config.seed,
            &avatars,
        )
        .unwrap();
        for commands in &outcome.journal {
            offline.step(commands);
        }
        assert_eq!(offline.hash(), final_hash, "round {round}");
        assert_eq!(
            replay_text(&std::fs::read_to_string(&log).unwrap())
                .unwrap()
                .final_hash,
            final_hash
        );
    }
}
