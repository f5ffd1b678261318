//! Session host over TCP and WebSocket.
//!
//! One listener serves both transports: a connection whose first bytes are
//! `GET ` is upgraded to WebSocket, anything else speaks length-prefixed
//! frames. Connection threads only move messages; a single engine loop owns
//! the session and the client table.
//!
//! The session goes through a lobby (join, claim roles), starts on a
//! `start` message, ticks every `tick` interval and finishes when the
//! scenario completes, the tick budget runs out or the stop flag is raised.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use cotrain_core::dsl::{serialize, Scenario};
use cotrain_core::engine::Tick;
use cotrain_core::ids::is_valid_token;
use cotrain_core::repartition::CriteriaConfig;
use cotrain_core::{HumanoidId, RoleName};
use thiserror::Error;
use tungstenite::{Message, WebSocket};

use crate::config::AgentsConfig;
use crate::log::{EventLog, LogFooter};
use crate::protocol::{read_frame, write_frame, ClientMessage, RoleSlot, ServerMessage};
use crate::session::{Avatar, CommandRequest, Reply, Session, SetupError};

/// Read timeout of WebSocket connections, which poll for outgoing messages
/// between reads.
const WS_POLL: Duration = Duration::from_millis(20);
const ACCEPT_POLL: Duration = Duration::from_millis(10);

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub scenario: Scenario,
    pub criteria: CriteriaConfig,
    pub agents: AgentsConfig,
    pub seed: u64,
    pub tick: Duration,
    /// Required in every `join` when set.
    pub token: Option<String>,
    pub log_path: Option<PathBuf>,
    /// Stop after this many ticks even if the scenario is not completed.
    pub max_ticks: Option<Tick>,
}

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot bind: {0}")]
    Bind(io::Error),
    #[error("event log: {0}")]
    Log(io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerOutcome {
    pub final_hash: String,
    pub tick: Tick,
    pub completed: bool,
    pub events: u64,
    /// Commands handed to each tick, in arrival order. Stepping a fresh
    /// session through them reproduces the run.
    pub journal: Vec<Vec<CommandRequest>>,
}

pub struct Server {
    listener: TcpListener,
    stop: Arc<AtomicBool>,
}

type ConnId = u64;

enum Inbound {
    Connected(ConnId, Sender<ServerMessage>),
    Message(ConnId, ClientMessage),
    Malformed(ConnId, String),
    Disconnected(ConnId),
}

impl Server {
    pub fn bind<A: ToSocketAddrs>(addr: A) -> Result<Self, ServerError> {
        let listener = TcpListener::bind(addr).map_err(ServerError::Bind)?;
        listener.set_nonblocking(true).map_err(ServerError::Bind)?;
        Ok(Server {
            listener,
            stop: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener
            .local_addr()
            .expect("bound listener has an address")
    }

    /// Raising this flag finishes the session at the next tick.
    pub fn stop_handle(&self) -> Arc<AtomicBool> {
        self.stop.clone()
    }

    /// Serves one session to its end.
    pub fn run(self, config: ServerConfig) -> Result<ServerOutcome, ServerError> {
        let (inbound_tx, inbound) = mpsc::channel();
        let accepting = Arc::new(AtomicBool::new(true));
        let acceptor = {
            let accepting = accepting.clone();
            thread::spawn(move || accept_loop(self.listener, inbound_tx, accepting))
        };
        let result = Engine::new(config, inbound, self.stop).run();
        accepting.store(false, Ordering::SeqCst);
        let _ = acceptor.join();
        result
    }
}

fn accept_loop(listener: TcpListener, inbound: Sender<Inbound>, accepting: Arc<AtomicBool>) {
    let mut next: ConnId = 0;
    while accepting.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let id = next;
                next += 1;
                let inbound = inbound.clone();
                thread::spawn(move || serve_connection(id, stream, inbound));
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(ACCEPT_POLL),
            Err(_) => thread::sleep(ACCEPT_POLL),
        }
    }
}

fn serve_connection(id: ConnId, stream: TcpStream, inbound: Sender<Inbound>) {
    if stream.set_nonblocking(false).is_err() {
        return;
    }
    let _ = stream.set_nodelay(true);
    let (outbox, outgoing) = mpsc::channel();
    if inbound.send(Inbound::Connected(id, outbox)).is_err() {
        return;
    }
    if is_websocket(&stream) {
        if let Ok(ws) = tungstenite::accept(stream) {
            serve_websocket(id, ws, &inbound, outgoing);
        }
    } else {
        serve_framed(id, stream, &inbound, outgoing);
    }
    let _ = inbound.send(Inbound::Disconnected(id));
}

/// Peeks at the first bytes without consuming them.
fn is_websocket(stream: &TcpStream) -> bool {
    let mut buf = [0u8; 4];
    loop {
        match stream.peek(&mut buf) {
            Ok(n) if n >= 4 || n == 0 => return &buf[..n] == b"GET ",
            Ok(_) => thread::sleep(Duration::from_millis(1)),
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(_) => return false,
        }
    }
}

fn serve_framed(
    id: ConnId,
    stream: TcpStream,
    inbound: &Sender<Inbound>,
    outgoing: Receiver<ServerMessage>,
) {
    let Ok(mut writer) = stream.try_clone() else {
        return;
    };
    let sender = thread::spawn(move || {
        for message in outgoing {
            let last = matches!(message, ServerMessage::Finished { .. });
            if write_frame(&mut writer, &message).is_err() || last {
                break;
            }
        }
        let _ = writer.shutdown(std::net::Shutdown::Write);
    });
    let mut reader = stream;
    loop {
        match read_frame::<_, ClientMessage>(&mut reader) {
            Ok(Some(message)) => {
                if inbound.send(Inbound::Message(id, message)).is_err() {
                    break;
                }
            }
            Ok(None) => break,
            Err(crate::protocol::FrameError::Json(e)) => {
                let _ = inbound.send(Inbound::Malformed(id, e.to_string()));
            }
            Err(_) => break,
        }
    }
    let _ = sender.join();
}

fn serve_websocket(
    id: ConnId,
    mut ws: WebSocket<TcpStream>,
    inbound: &Sender<Inbound>,
    outgoing: Receiver<ServerMessage>,
) {
    if ws.get_ref().set_read_timeout(Some(WS_POLL)).is_err() {
        return;
    }
    loop {
        loop {
            match outgoing.try_recv() {
                Ok(message) => {
                    let last = matches!(message, ServerMessage::Finished { .. });
                    let text = serde_json::to_string(&message).expect("server messages serialize");
                    if ws.send(Message::text(text)).is_err() {
                        return;
                    }
                    if last {
                        let _ = ws.close(None);
                        let _ = ws.flush();
                        return;
                    }
                }
                Err(mpsc::TryRecvError::Empty) => break,
                Err(mpsc::TryRecvError::Disconnected) => return,
            }
        }
        match ws.read() {
            Ok(Message::Text(text)) => forward(id, inbound, text.as_bytes()),
            Ok(Message::Binary(bytes)) => forward(id, inbound, &bytes),
            Ok(Message::Close(_)) => return,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                ) => {}
            Err(_) => return,
        }
    }
}

fn forward(id: ConnId, inbound: &Sender<Inbound>, bytes: &[u8]) {
    let _ = match serde_json::from_slice::<ClientMessage>(bytes) {
        Ok(message) => inbound.send(Inbound::Message(id, message)),
        Err(e) => inbound.send(Inbound::Malformed(id, e.to_string())),
    };
}

struct Client {
    outbox: Sender<ServerMessage>,
    participant: Option<HumanoidId>,
    observer: bool,
}

struct Engine {
    config: ServerConfig,
    inbound: Receiver<Inbound>,
    stop: Arc<AtomicBool>,
    clients: BTreeMap<ConnId, Client>,
    /// Avatars in join order with their claimed roles.
    lobby: Vec<Avatar>,
    canonical: String,
}

impl Engine {
    fn new(config: ServerConfig, inbound: Receiver<Inbound>, stop: Arc<AtomicBool>) -> Self {
        Engine {
            canonical: serialize(&config.scenario),
            config,
            inbound,
            stop,
            clients: BTreeMap::new(),
            lobby: Vec::new(),
        }
    }

    fn send(&self, conn: ConnId, message: ServerMessage) {
        if let Some(client) = self.clients.get(&conn) {
            let _ = client.outbox.send(message);
        }
    }

    fn broadcast(&self, message: &ServerMessage) {
        for client in self.clients.values() {
            let _ = client.outbox.send(message.clone());
        }
    }

    fn stopped(&self) -> bool {
        self.stop.load(Ordering::SeqCst)
    }

    fn run(mut self) -> Result<ServerOutcome, ServerError> {
        let Some(mut session) = self.lobby_phase() else {
            return Ok(ServerOutcome {
                final_hash: String::new(),
                tick: 0,
                completed: false,
                events: 0,
                journal: Vec::new(),
            });
        };
        let mut log = match &self.config.log_path {
            Some(path) => Some(BufWriter::new(
                File::create(path).map_err(ServerError::Log)?,
            )),
            None => None,
        };
        let header = EventLog::from_session(&session).header;
        if let Some(log) = log.as_mut() {
            log.write_all(EventLog::header_line(&header).as_bytes())
                .map_err(ServerError::Log)?;
        }
        let mut sent = 0;
        self.broadcast(&ServerMessage::Started {
            snapshot: Box::new(session.snapshot()),
        });
        let mut queued: Vec<(ConnId, CommandRequest)> = Vec::new();
        let mut journal = Vec::new();
        let mut deadline = Instant::now();
        loop {
            // Commands that arrive before the deadline join this tick.
            loop {
                let now = Instant::now();
                if now >= deadline || self.stopped() {
                    break;
                }
                match self.inbound.recv_timeout(deadline - now) {
                    Ok(message) => self.running_message(message, &session, &mut queued),
                    Err(RecvTimeoutError::Timeout) => break,
                    Err(RecvTimeoutError::Disconnected) => break,
                }
            }
            if self.stopped() {
                break;
            }
            deadline += self.config.tick;
            let requests: Vec<CommandRequest> = queued.iter().map(|(_, r)| r.clone()).collect();
            let replies = session.step(&requests);
            journal.push(requests);
            for event in &session.events()[sent..] {
                self.broadcast(&ServerMessage::Event {
                    event: event.clone(),
                });
                if let Some(log) = log.as_mut() {
                    log.write_all(EventLog::event_line(event).as_bytes())
                        .map_err(ServerError::Log)?;
                }
            }
            sent = session.events().len();
            if let Some(log) = log.as_mut() {
                log.flush().map_err(ServerError::Log)?;
            }
            for ((conn, request), reply) in queued.drain(..).zip(replies) {
                let message = match reply {
                    Reply::Accepted => ServerMessage::Accepted {
                        request: request.request,
                    },
                    Reply::Rejected { reason } => ServerMessage::Rejected {
                        request: request.request,
                        reason,
                        snapshot: Box::new(session.snapshot()),
                    },
                    Reply::Allowed { seq, actions } => ServerMessage::Allowed {
                        request: request.request,
                        seq,
                        actions,
                    },
                };
                self.send(conn, message);
            }
            let out_of_ticks = self
                .config
                .max_ticks
                .is_some_and(|max| session.tick() + 1 >= max);
            if session.is_completed() || out_of_ticks {
                break;
            }
        }
        let outcome = ServerOutcome {
            final_hash: session.hash(),
            tick: session.tick(),
            completed: session.is_completed(),
            events: session.events().len() as u64,
            journal,
        };
        if let Some(mut log) = log {
            let footer = LogFooter {
                final_hash: outcome.final_hash.clone(),
                tick: outcome.tick,
                events: outcome.events,
            };
            log.write_all(EventLog::footer_line(&footer).as_bytes())
                .and_then(|_| log.flush())
                .map_err(ServerError::Log)?;
        }
        self.broadcast(&ServerMessage::Finished {
            final_hash: outcome.final_hash.clone(),
            tick: outcome.tick,
            completed: outcome.completed,
        });
        Ok(outcome)
    }

    /// Runs the lobby until a successful `start`. Returns `None` if stopped
    /// first.
    fn lobby_phase(&mut self) -> Option<Session> {
        loop {
            if self.stopped() {
                return None;
            }
            let message = match self.inbound.recv_timeout(Duration::from_millis(50)) {
                Ok(message) => message,
                Err(RecvTimeoutError::Timeout) => continue,
                Err(RecvTimeoutError::Disconnected) => return None,
            };
            match message {
                Inbound::Connected(conn, outbox) => {
                    self.clients.insert(
                        conn,
                        Client {
                            outbox,
                            participant: None,
                            observer: false,
                        },
                    );
                }
                Inbound::Disconnected(conn) => {
                    if let Some(Client {
                        participant: Some(id),
                        ..
                    }) = self.clients.remove(&conn)
                    {
                        self.lobby.retain(|a| a.id != id);
                    }
                }
                Inbound::Malformed(conn, error) => self.send(conn, error_message(error)),
                Inbound::Message(conn, message) => {
                    if let Some(session) = self.lobby_message(conn, message) {
                        return Some(session);
                    }
                }
            }
        }
    }

    fn lobby_message(&mut self, conn: ConnId, message: ClientMessage) -> Option<Session> {
        match message {
            ClientMessage::Join {
                token,
                name,
                observer,
            } => {
                if let Err(reason) = self.admit(conn, token, &name, observer) {
                    self.send(conn, error_message(reason));
                }
            }
            ClientMessage::ClaimRole { role } => {
                if let Err(reason) = self.claim(conn, role) {
                    self.send(conn, error_message(reason));
                }
            }
            ClientMessage::Start => {
                if !self
                    .clients
                    .get(&conn)
                    .is_some_and(|c| c.participant.is_some() || c.observer)
                {
                    self.send(conn, error_message("join before starting"));
                    return None;
                }
                match self.cast() {
                    Ok(session) => return Some(session),
                    Err(e) => self.send(conn, error_message(format!("cannot start: {e}"))),
                }
            }
            ClientMessage::Command { .. } | ClientMessage::Snapshot => {
                self.send(conn, error_message("the session has not started"));
            }
        }
        None
    }

    fn admit(
        &mut self,
        conn: ConnId,
        token: Option<String>,
        name: &str,
        observer: bool,
    ) -> Result<(), String> {
        if self.config.token.is_some() && token != self.config.token {
            return Err("invalid token".into());
        }
        let client = self.clients.get(&conn).ok_or("unknown connection")?;
        if client.participant.is_some() || client.observer {
            return Err("already joined".into());
        }
        if !observer {
            if !is_valid_token(name) {
                return Err(format!("`{name}` is not a valid participant name"));
            }
            let taken = self.lobby.iter().any(|a| a.id.as_str() == name)
                || self.config.agents.agents.iter().any(|a| a.id == name)
                || name.starts_with("auto-");
            if taken {
                return Err(format!("name `{name}` is taken"));
            }
            self.lobby.push(Avatar {
                id: name.into(),
                roles: Vec::new(),
            });
        }
        let client = self.clients.get_mut(&conn).expect("checked above");
        client.observer = observer;
        client.participant = (!observer).then(|| HumanoidId::from(name));
        let welcome = ServerMessage::Welcome {
            participant: name.into(),
            observer,
            scenario: self.canonical.clone(),
            roles: self.role_slots(),
        };
        self.send(conn, welcome);
        Ok(())
    }

    fn role_slots(&self) -> Vec<RoleSlot> {
        self.config
            .scenario
            .roles
            .keys()
            .map(|role| RoleSlot {
                role: role.clone(),
                holder: self.holder(role).cloned(),
            })
            .collect()
    }

    fn holder(&self, role: &RoleName) -> Option<&HumanoidId> {
        self.lobby
            .iter()
            .find(|a| a.roles.contains(role))
            .map(|a| &a.id)
    }

    fn claim(&mut self, conn: ConnId, role: RoleName) -> Result<(), String> {
        let Some(id) = self.clients.get(&conn).and_then(|c| c.participant.clone()) else {
            return Err("only joined participants claim roles".into());
        };
        if !self.config.scenario.roles.contains_key(&role) {
            return Err(format!("unknown role `{role}`"));
        }
        if let Some(holder) = self.holder(&role).cloned() {
            self.send(conn, ServerMessage::RoleTaken { role, holder });
            return Ok(());
        }
        if let Some(avatar) = self.lobby.iter_mut().find(|a| a.id == id) {
            avatar.roles.push(role.clone());
        }
        self.broadcast(&ServerMessage::RoleClaimed {
            participant: id,
            role,
        });
        Ok(())
    }

    fn cast(&self) -> Result<Session, SetupError> {
        Session::new(
            self.config.scenario.clone(),
            self.config.criteria.clone(),
            &self.config.agents,
            self.config.seed,
            &self.lobby,
        )
    }

    fn running_message(
        &mut self,
        message: Inbound,
        session: &Session,
        queued: &mut Vec<(ConnId, CommandRequest)>,
    ) {
        match message {
            Inbound::Connected(conn, outbox) => {
                self.clients.insert(
                    conn,
                    Client {
                        outbox,
                        participant: None,
                        observer: false,
                    },
                );
            }
            Inbound::Disconnected(conn) => {
                self.clients.remove(&conn);
            }
            Inbound::Malformed(conn, error) => self.send(conn, error_message(error)),
            Inbound::Message(conn, message) => match message {
                ClientMessage::Join {
                    token,
                    name,
                    observer,
                } => {
                    let joined = self
                        .clients
                        .get(&conn)
                        .is_some_and(|c| c.participant.is_some() || c.observer);
                    if joined {
                        self.send(conn, error_message("already joined"));
                    } else if !observer {
                        self.send(
                            conn,
                            error_message("the session has started; join as an observer"),
                        );
                    } else if self.config.token.is_some() && token != self.config.token {
                        self.send(conn, error_message("invalid token"));
                    } else {
                        if let Some(client) = self.clients.get_mut(&conn) {
                            client.observer = true;
                        }
                        self.send(
                            conn,
                            ServerMessage::Welcome {
                                participant: name.as_str().into(),
                                observer: true,
                                scenario: self.canonical.clone(),
                                roles: Vec::new(),
                            },
                        );
                        self.send(
                            conn,
                            ServerMessage::Started {
                                snapshot: Box::new(session.snapshot()),
                            },
                        );
                    }
                }
                ClientMessage::ClaimRole { .. } | ClientMessage::Start => {
                    self.send(conn, error_message("the session has started"));
                }
                ClientMessage::Snapshot => self.send(
                    conn,
                    ServerMessage::Snapshot {
                        snapshot: Box::new(session.snapshot()),
                    },
                ),
                ClientMessage::Command {
                    request,
                    seen_seq,
                    command,
                } => match self.clients.get(&conn).and_then(|c| c.participant.clone()) {
                    Some(humanoid) => queued.push((
                        conn,
                        CommandRequest {
                            humanoid,
                            request,
                            seen_seq,
                            command,
                        },
                    )),
                    None => self.send(
                        conn,
                        ServerMessage::Rejected {
                            request,
                            reason: "observers cannot act".into(),
                            snapshot: Box::new(session.snapshot()),
                        },
                    ),
                },
            },
        }
    }
}

fn error_message(message: impl Into<String>) -> ServerMessage {
    ServerMessage::Error {
        message: message.into(),
    }
}
