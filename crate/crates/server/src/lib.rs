//! Serves one live navigation session to a master and a mini display.
//!
//! A single port carries three things, told apart by the first bytes a
//! client sends: the raw line protocol over TCP (starts with `{`), a
//! WebSocket upgrade at `/ws`, and plain HTTP GETs for the UI assets.
//!
//! The session is owned by one task that drains a single command queue
//! (inputs from every client, ticks, shutdown). Each client has a
//! one-deep outbox: a tick that finds the previous bundle still unsent
//! replaces it.

mod http;
mod transport;

use std::collections::HashMap;
use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use navsim_core::engine::{Engine, Input};
use navsim_core::session::log::write_log;
use navsim_core::session::{LogEntry, SessionMetrics};
use navsim_core::wire::{self, Message, Role, PROTOCOL_VERSION};
use thiserror::Error;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot, watch, Notify};
use tokio::task::JoinHandle;
use tokio_tungstenite::tungstenite::protocol::Role as WsRole;
use tokio_tungstenite::WebSocketStream;

use transport::{LineSink, LineSource};

pub const DEFAULT_PORT: u16 = 7420;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: io::Error,
    },
    #[error("cannot write session log {path}: {source}")]
    Log {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("server has stopped")]
    Stopped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TickMode {
    /// Tick at the scenario rate from a timer.
    Timer,
    /// Tick only when [`ServerHandle::tick`] is called.
    Manual,
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    pub ui_dir: Option<PathBuf>,
    /// Session log is written here when the session ends.
    pub log_path: Option<PathBuf>,
    pub tick: TickMode,
}

impl ServerConfig {
    pub fn new(bind: SocketAddr) -> ServerConfig {
        ServerConfig {
            bind,
            ui_dir: None,
            log_path: None,
            tick: TickMode::Timer,
        }
    }
}

/// Delivery counters for one display role, across reconnects.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DisplayStats {
    pub frames_rendered: u64,
    pub bundles_queued: u64,
    pub bundles_sent: u64,
    /// Bundles replaced before the client took them.
    pub bundles_coalesced: u64,
    /// Largest number of unsent bundles ever waiting for this role.
    pub max_backlog: u64,
}

/// Final state of a served session.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub metrics: Option<SessionMetrics>,
    pub log: Vec<LogEntry>,
}

enum Out {
    Msg(Box<Message>),
    Close,
}

struct Client {
    id: u64,
    role: Role,
    outbox: Mutex<Option<Vec<Message>>>,
    wake: Notify,
    control: mpsc::UnboundedSender<Out>,
}

enum Command {
    Input { input: Input, client: Arc<Client> },
    Tick(oneshot::Sender<()>),
    Shutdown(oneshot::Sender<()>),
}

struct Shared {
    session_id: String,
    ui_dir: Option<PathBuf>,
    clients: Mutex<HashMap<Role, Arc<Client>>>,
    stats: Mutex<HashMap<Role, DisplayStats>>,
    next_client: AtomicU64,
    inputs_applied: watch::Sender<u64>,
    commands: mpsc::UnboundedSender<Command>,
}

impl Shared {
    fn with_stats(&self, role: Role, f: impl FnOnce(&mut DisplayStats)) {
        f(self.stats.lock().unwrap().entry(role).or_default());
    }

    fn clients(&self) -> Vec<Arc<Client>> {
        self.clients.lock().unwrap().values().cloned().collect()
    }

    fn post(&self, client: &Client, bundle: Vec<Message>) {
        let replaced = client.outbox.lock().unwrap().replace(bundle).is_some();
        self.with_stats(client.role, |s| {
            s.bundles_queued += 1;
            if replaced {
                s.bundles_coalesced += 1;
            }
            let backlog = s.bundles_queued - s.bundles_sent - s.bundles_coalesced;
            s.max_backlog = s.max_backlog.max(backlog);
        });
        client.wake.notify_one();
    }
}

pub struct ServerHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    finished: watch::Receiver<Option<Arc<Outcome>>>,
    accept_task: JoinHandle<()>,
    hub_task: JoinHandle<()>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn session_id(&self) -> &str {
        &self.shared.session_id
    }

    /// Runs one tick after every input queued so far; returns once the
    /// resulting bundles sit in the client outboxes.
    pub async fn tick(&self) -> Result<(), ServerError> {
        let (tx, rx) = oneshot::channel();
        self.shared
            .commands
            .send(Command::Tick(tx))
            .map_err(|_| ServerError::Stopped)?;
        rx.await.map_err(|_| ServerError::Stopped)
    }

    /// Waits until `n` client inputs have been applied to the session.
    pub async fn wait_inputs(&self, n: u64) {
        let mut rx = self.shared.inputs_applied.subscribe();
        let _ = rx.wait_for(|&k| k >= n).await;
    }

    pub fn stats(&self, role: Role) -> DisplayStats {
        self.shared
            .stats
            .lock()
            .unwrap()
            .get(&role)
            .copied()
            .unwrap_or_default()
    }

    /// Resolves when the session reaches a terminal status.
    pub async fn finished(&self) -> Arc<Outcome> {
        let mut rx = self.finished.clone();
        let done = rx.wait_for(Option::is_some).await.expect("hub keeps the sender alive");
        done.clone().expect("checked by wait_for")
    }

    /// Aborts a still-running session, writes the log and stops serving.
    pub async fn shutdown(self) -> Arc<Outcome> {
        let (tx, rx) = oneshot::channel();
        if self.shared.commands.send(Command::Shutdown(tx)).is_ok() {
            let _ = rx.await;
        }
        self.accept_task.abort();
        let outcome = self.finished().await;
        let _ = self.hub_task.await;
        for c in self.shared.clients() {
            let _ = c.control.send(Out::Close);
        }
        outcome
    }
}

fn session_id() -> String {
    let nanos = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_nanos());
    format!("{:x}-{:x}", std::process::id(), nanos)
}

/// Binds the listener and starts serving `engine`'s session.
pub async fn start(engine: Engine, config: ServerConfig) -> Result<ServerHandle, ServerError> {
    let listener = TcpListener::bind(config.bind)
        .await
        .map_err(|source| ServerError::Bind {
            addr: config.bind,
            source,
        })?;
    let addr = listener.local_addr().map_err(|source| ServerError::Bind {
        addr: config.bind,
        source,
    })?;
    let (cmd_tx, cmd_rx) = mpsc::unbounded_channel();
    let (finished_tx, finished_rx) = watch::channel(None);
    let shared = Arc::new(Shared {
        session_id: session_id(),
        ui_dir: config.ui_dir.clone(),
        clients: Mutex::new(HashMap::new()),
        stats: Mutex::new(HashMap::new()),
        next_client: AtomicU64::new(1),
        inputs_applied: watch::channel(0).0,
        commands: cmd_tx,
    });
    let hub = Hub {
        engine,
        shared: shared.clone(),
        log_path: config.log_path.clone(),
        finished: finished_tx,
        done: false,
    };
    let hub_task = tokio::spawn(hub.run(cmd_rx, config.tick));
    let accept_shared = shared.clone();
    let accept_task = tokio::spawn(async move {
        loop {
            match listener.accept().await {
                Ok((stream, _)) => {
                    tokio::spawn(connection(accept_shared.clone(), stream));
                }
                Err(e) => {
                    eprintln!("accept failed: {e}");
                    tokio::time::sleep(Duration::from_millis(50)).await;
                }
            }
        }
    });
    Ok(ServerHandle {
        addr,
        shared,
        finished: finished_rx,
        accept_task,
        hub_task,
    })
}

struct Hub {
    engine: Engine,
    shared: Arc<Shared>,
    log_path: Option<PathBuf>,
    finished: watch::Sender<Option<Arc<Outcome>>>,
    done: bool,
}

impl Hub {
    async fn run(mut self, mut commands: mpsc::UnboundedReceiver<Command>, mode: TickMode) {
        let period = Duration::from_secs_f64(1.0 / self.engine.tick_hz());
        let mut timer = tokio::time::interval(period);
        timer.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
        let timed = mode == TickMode::Timer;
        loop {
            tokio::select! {
                biased;
                cmd = commands.recv() => match cmd {
                    Some(Command::Input { input, client }) => self.apply(input, &client),
                    Some(Command::Tick(ack)) => {
                        self.tick();
                        let _ = ack.send(());
                    }
                    Some(Command::Shutdown(ack)) => {
                        self.engine.abort();
                        self.finish();
                        let _ = ack.send(());
                        return;
                    }
                    None => return,
                },
                _ = timer.tick(), if timed && !self.done => self.tick(),
            }
            if self.engine.is_finished() {
                self.finish();
            }
        }
    }

    fn apply(&mut self, input: Input, client: &Client) {
        if let Err(e) = self.engine.apply(input) {
            let _ = client.control.send(Out::Msg(Box::new(Message::Error {
                code: "rejected".into(),
                detail: e.to_string(),
            })));
        }
        self.shared.inputs_applied.send_modify(|n| *n += 1);
    }

    fn tick(&mut self) {
        if self.done {
            return;
        }
        let requests = match self.engine.step() {
            Ok(r) => r,
            Err(e) => {
                eprintln!("session tick failed: {e}");
                return;
            }
        };
        let state = Message::State(self.engine.state());
        for client in self.shared.clients() {
            let display = client.role.into();
            let mut bundle: Vec<Message> = requests
                .iter()
                .filter(|r| r.display == display)
                .map(|r| Message::Frame(self.engine.render(r)))
                .collect();
            let frames = bundle.len() as u64;
            self.shared.with_stats(client.role, |s| s.frames_rendered += frames);
            bundle.push(state.clone());
            self.shared.post(&client, bundle);
        }
    }

    fn finish(&mut self) {
        if self.done {
            return;
        }
        self.done = true;
        let session = self.engine.session();
        let outcome = Outcome {
            metrics: session.metrics().cloned(),
            log: session.event_log().to_vec(),
        };
        if let Some(path) = &self.log_path {
            if let Err(e) = write_log_file(path, &outcome.log) {
                eprintln!("{e}");
            }
        }
        let state = Message::State(self.engine.state());
        for c in self.shared.clients() {
            let _ = c.control.send(Out::Msg(Box::new(state.clone())));
        }
        self.finished.send_replace(Some(Arc::new(outcome)));
    }
}

fn write_log_file(path: &PathBuf, log: &[LogEntry]) -> Result<(), ServerError> {
    let err = |source| ServerError::Log {
        path: path.clone(),
        source,
    };
    let file = std::fs::File::create(path).map_err(err)?;
    let mut w = io::BufWriter::new(file);
    write_log(log, &mut w).map_err(err)?;
    io::Write::flush(&mut w).map_err(err)
}

async fn connection(shared: Arc<Shared>, stream: TcpStream) {
    let _ = stream.set_nodelay(true);
    let mut first = [0u8; 1];
    match stream.peek(&mut first).await {
        Ok(1) => {}
        _ => return,
    }
    let (source, sink) = if first[0] == b'{' {
        transport::tcp(stream)
    } else {
        match http::handle(stream, shared.ui_dir.as_deref()).await {
            Ok(http::Outcome::WebSocket(stream)) => {
                transport::websocket(WebSocketStream::from_raw_socket(stream, WsRole::Server, None).await)
            }
            _ => return,
        }
    };
    serve_client(shared, source, sink).await;
}

async fn reject(mut sink: LineSink, code: &str, detail: String) {
    let _ = sink
        .send(&Message::Error {
            code: code.into(),
            detail,
        })
        .await;
    sink.close().await;
}

async fn serve_client(shared: Arc<Shared>, mut source: LineSource, mut sink: LineSink) {
    let Ok(Some(line)) = source.next_line().await else {
        return;
    };
    let role = match wire::decode(&line) {
        Ok(Message::Hello { role, proto }) if proto == PROTOCOL_VERSION => role,
        Ok(Message::Hello { proto, .. }) => {
            return reject(
                sink,
                "unsupported_proto",
                format!("protocol {proto} is not supported; use {PROTOCOL_VERSION}"),
            )
            .await;
        }
        Ok(_) => return reject(sink, "expected_hello", "the first message must be hello".into()).await,
        Err(e) => {
            let _ = sink.send(&e.to_message()).await;
            return reject(sink, "expected_hello", "the first message must be hello".into()).await;
        }
    };

    let (control_tx, control_rx) = mpsc::unbounded_channel();
    let client = Arc::new(Client {
        id: shared.next_client.fetch_add(1, Ordering::Relaxed),
        role,
        outbox: Mutex::new(None),
        wake: Notify::new(),
        control: control_tx,
    });
    let taken = {
        let mut clients = shared.clients.lock().unwrap();
        let taken = clients.contains_key(&role);
        if !taken {
            clients.insert(role, client.clone());
        }
        taken
    };
    if taken {
        return reject(
            sink,
            "role_taken",
            format!("a {role:?} display is already connected").to_lowercase(),
        )
        .await;
    }
    let _ = client.control.send(Out::Msg(Box::new(Message::Welcome {
        session_id: shared.session_id.clone(),
    })));
    let writer = tokio::spawn(write_loop(shared.clone(), client.clone(), control_rx, sink));

    while let Ok(Some(line)) = source.next_line().await {
        let reply = match wire::decode(&line) {
            Ok(Message::Ping) => None,
            Ok(msg) if let Some(input) = Input::from_message(&msg) => {
                let cmd = Command::Input {
                    input,
                    client: client.clone(),
                };
                if shared.commands.send(cmd).is_err() {
                    break;
                }
                None
            }
            Ok(Message::Hello { .. }) => Some(Message::Error {
                code: "already_greeted".into(),
                detail: "hello was already received".into(),
            }),
            Ok(other) => Some(Message::Error {
                code: "unexpected".into(),
                detail: format!("clients may not send {}", type_name(&other)),
            }),
            Err(e) => Some(e.to_message()),
        };
        if let Some(m) = reply {
            let _ = client.control.send(Out::Msg(Box::new(m)));
        }
    }

    {
        let mut clients = shared.clients.lock().unwrap();
        if clients.get(&role).is_some_and(|c| c.id == client.id) {
            clients.remove(&role);
        }
    }
    let _ = client.control.send(Out::Close);
    let _ = writer.await;
}

fn type_name(m: &Message) -> String {
    serde_json::to_value(m)
        .ok()
        .and_then(|v| v.get("type").and_then(|t| t.as_str()).map(str::to_owned))
        .unwrap_or_default()
}

async fn write_loop(
    shared: Arc<Shared>,
    client: Arc<Client>,
    mut control: mpsc::UnboundedReceiver<Out>,
    mut sink: LineSink,
) {
    loop {
        tokio::select! {
            biased;
            out = control.recv() => match out {
                Some(Out::Msg(m)) => {
                    if sink.send(&m).await.is_err() {
                        break;
                    }
                }
                Some(Out::Close) | None => break,
            },
            _ = client.wake.notified() => {
                let bundle = client.outbox.lock().unwrap().take();
                if let Some(bundle) = bundle {
                    shared.with_stats(client.role, |s| s.bundles_sent += 1);
                    for m in &bundle {
                        if sink.send(m).await.is_err() {
                            return;
                        }
                    }
                }
            }
        }
    }
    sink.close().await;
}
