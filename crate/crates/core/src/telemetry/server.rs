//! Live session: one loop owns the twin, connections only talk to it
//! through a command queue and a frame broadcast.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use futures::{Sink, SinkExt, Stream, StreamExt};
use thiserror::Error;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, mpsc, watch};
use tokio::task::JoinHandle;
use tokio::time::Instant;
use tokio_tungstenite::tungstenite::Message as WsMessage;

use super::log::EventLog;
use super::wire::{parse_inbound, parse_request, Clock, CommandEnvelope, Message, Request};
use crate::controller::CommandOutcome;
use crate::twin::{ScheduledCommand, Twin};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pace {
    /// Simulated time runs at `speed` times wall time.
    RealTime { speed: f64 },
    /// As fast as the runtime allows.
    Unpaced,
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub listen: String,
    /// Optional WebSocket gateway for browsers; same messages, one per text frame.
    pub ws_listen: Option<String>,
    pub snapshot_hz: f64,
    pub pace: Pace,
    /// Hold the simulation at t=0 until this many viewers are connected.
    pub wait_for_viewers: usize,
    /// Stop after this much simulated time; run until shutdown if `None`.
    pub duration_ms: Option<u64>,
    pub log_path: Option<PathBuf>,
    /// Frames a viewer may fall behind before it is disconnected.
    pub viewer_backlog: usize,
    pub clock: Clock,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: "127.0.0.1:7878".into(),
            ws_listen: None,
            snapshot_hz: 10.0,
            pace: Pace::RealTime { speed: 1.0 },
            wait_for_viewers: 0,
            duration_ms: None,
            log_path: None,
            viewer_backlog: 1024,
            clock: Clock::Sim,
        }
    }
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("cannot open event log: {0}")]
    Log(std::io::Error),
    #[error("invalid service config: {0}")]
    InvalidConfig(String),
}

/// What a finished session leaves behind.
#[derive(Debug)]
pub struct SessionOutcome {
    pub twin: Twin,
    pub frames_sent: u64,
    pub commands_handled: u64,
}

type ConnId = u64;

enum Inbound {
    Connected(ConnId, mpsc::UnboundedSender<Arc<str>>),
    Line(ConnId, String),
    Disconnected(ConnId),
}

#[derive(Clone)]
struct Hub {
    // weak, so the broadcast closes as soon as the session loop ends
    frames: broadcast::WeakSender<Arc<str>>,
    inbound: mpsc::Sender<Inbound>,
    next_id: Arc<std::sync::atomic::AtomicU64>,
}

/// Stops a running session from anywhere, e.g. a signal handler.
#[derive(Clone)]
pub struct ShutdownHandle(Arc<watch::Sender<bool>>);

impl ShutdownHandle {
    pub fn trigger(&self) {
        let _ = self.0.send(true);
    }
}

pub struct Service {
    local_addr: SocketAddr,
    ws_addr: Option<SocketAddr>,
    shutdown: ShutdownHandle,
    session: JoinHandle<SessionOutcome>,
    acceptors: Vec<JoinHandle<()>>,
}

impl Service {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn ws_addr(&self) -> Option<SocketAddr> {
        self.ws_addr
    }

    /// Ask the session to stop after the current scan.
    pub fn shutdown(&self) {
        self.shutdown.trigger();
    }

    pub fn shutdown_handle(&self) -> ShutdownHandle {
        self.shutdown.clone()
    }

    /// Wait for the session to end, by duration or shutdown.
    pub async fn wait(self) -> SessionOutcome {
        let outcome = self.session.await.expect("session loop panicked");
        for a in &self.acceptors {
            a.abort();
        }
        outcome
    }
}

async fn bind(addr: &str) -> Result<TcpListener, ServeError> {
    TcpListener::bind(addr).await.map_err(|source| ServeError::Bind {
        addr: addr.to_owned(),
        source,
    })
}

/// Bind the listeners and start the session loop.
pub async fn serve(config: ServiceConfig, twin: Twin, script: Vec<ScheduledCommand>) -> Result<Service, ServeError> {
    if !(config.snapshot_hz.is_finite() && config.snapshot_hz > 0.0) {
        return Err(ServeError::InvalidConfig("snapshot_hz must be > 0".into()));
    }
    if let Pace::RealTime { speed } = config.pace {
        if !(speed.is_finite() && speed > 0.0) {
            return Err(ServeError::InvalidConfig("speed must be > 0".into()));
        }
    }
    if config.viewer_backlog == 0 {
        return Err(ServeError::InvalidConfig("viewer_backlog must be > 0".into()));
    }
    let tcp = bind(&config.listen).await?;
    let local_addr = tcp.local_addr().map_err(ServeError::Log)?;
    let ws = match &config.ws_listen {
        Some(a) => Some(bind(a).await?),
        None => None,
    };
    let ws_addr = ws.as_ref().and_then(|l| l.local_addr().ok());
    let log = match &config.log_path {
        Some(p) => Some(EventLog::open(p).map_err(ServeError::Log)?),
        None => None,
    };

    let (frames, _) = broadcast::channel(config.viewer_backlog);
    let (inbound_tx, inbound_rx) = mpsc::channel(4096);
    let hub = Hub {
        frames: frames.downgrade(),
        inbound: inbound_tx,
        next_id: Arc::new(Default::default()),
    };
    let (shutdown, shutdown_rx) = watch::channel(false);

    let mut acceptors = vec![tokio::spawn(accept_tcp(tcp, hub.clone()))];
    if let Some(ws) = ws {
        acceptors.push(tokio::spawn(accept_ws(ws, hub.clone())));
    }
    drop(hub);

    let session = tokio::spawn(run_session(config, twin, script, log, frames, inbound_rx, shutdown_rx));
    Ok(Service {
        local_addr,
        ws_addr,
        shutdown: ShutdownHandle(Arc::new(shutdown)),
        session,
        acceptors,
    })
}

async fn accept_tcp(listener: TcpListener, hub: Hub) {
    loop {
        let Ok((stream, peer)) = listener.accept().await else {
            continue;
        };
        tracing::debug!(%peer, "tcp viewer connected");
        let Some(frames) = hub.frames.upgrade().map(|tx| tx.subscribe()) else {
            break;
        };
        let hub = hub.clone();
        tokio::spawn(async move {
            let _ = stream.set_nodelay(true);
            let (r, w) = stream.into_split();
            let lines = futures::stream::unfold(BufReader::new(r).lines(), |mut lines| async move {
                match lines.next_line().await {
                    Ok(Some(l)) => Some((l, lines)),
                    _ => None,
                }
            });
            let sink = futures::sink::unfold(w, |mut w, line: Arc<str>| async move {
                w.write_all(line.as_bytes()).await?;
                w.write_all(b"\n").await?;
                Ok::<_, std::io::Error>(w)
            });
            connection(hub, frames, lines, sink).await;
        });
    }
}

async fn accept_ws(listener: TcpListener, hub: Hub) {
    loop {
        let Ok((stream, peer)) = listener.accept().await else {
            continue;
        };
        let Some(frames) = hub.frames.upgrade().map(|tx| tx.subscribe()) else {
            break;
        };
        let hub = hub.clone();
        tokio::spawn(async move {
            let ws = match tokio_tungstenite::accept_async(stream).await {
                Ok(ws) => ws,
                Err(e) => {
                    tracing::debug!(%peer, "websocket handshake failed: {e}");
                    return;
                }
            };
            tracing::debug!(%peer, "websocket viewer connected");
            let (sink, stream) = ws.split();
            let lines = stream
                .take_while(|m| futures::future::ready(matches!(m, Ok(m) if !m.is_close())))
                .filter_map(|m| async move {
                    match m {
                        Ok(WsMessage::Text(t)) => Some(t.as_str().to_owned()),
                        _ => None,
                    }
                });
            let sink = sink.with(|line: Arc<str>| async move {
                Ok::<_, tokio_tungstenite::tungstenite::Error>(WsMessage::text(&*line))
            });
            connection(hub, frames, lines, sink).await;
        });
    }
}

async fn connection<L, S>(hub: Hub, mut frames: broadcast::Receiver<Arc<str>>, lines: L, sink: S)
where
    L: Stream<Item = String>,
    S: Sink<Arc<str>>,
{
    let id = hub.next_id.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    let (reply_tx, mut replies) = mpsc::unbounded_channel();
    if hub.inbound.send(Inbound::Connected(id, reply_tx)).await.is_err() {
        return;
    }
    futures::pin_mut!(lines);
    futures::pin_mut!(sink);
    let mut reading = true;
    loop {
        tokio::select! {
            line = lines.next(), if reading => match line {
                Some(l) => {
                    if hub.inbound.send(Inbound::Line(id, l)).await.is_err() {
                        reading = false;
                    }
                }
                None => break,
            },
            frame = frames.recv() => match frame {
                Ok(f) => {
                    if sink.send(f).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    tracing::warn!(conn = id, skipped = n, "viewer too slow, disconnecting");
                    break;
                }
                Err(broadcast::error::RecvError::Closed) => {
                    // session over: flush replies still queued, then hang up
                    while let Ok(r) = replies.try_recv() {
                        if sink.send(r).await.is_err() {
                            break;
                        }
                    }
                    break;
                }
            },
            Some(reply) = replies.recv() => {
                if sink.send(reply).await.is_err() {
                    break;
                }
            }
        }
    }
    let _ = sink.close().await;
    let _ = hub.inbound.send(Inbound::Disconnected(id)).await;
}

struct Session {
    twin: Twin,
    log: Option<EventLog>,
    frames: broadcast::Sender<Arc<str>>,
    clients: HashMap<ConnId, mpsc::UnboundedSender<Arc<str>>>,
    holder: Option<ConnId>,
    seq: u64,
    clock: Clock,
    commands_handled: u64,
}

impl Session {
    fn record(&mut self, msg: &Message) -> Arc<str> {
        let line: Arc<str> = msg.to_line().into();
        if let Some(log) = self.log.as_mut() {
            if let Err(e) = log.append_line(&line) {
                tracing::error!("event log write failed, logging disabled: {e}");
                self.log = None;
            }
        }
        line
    }

    fn reply(&mut self, conn: ConnId, msg: Message) {
        let line = self.record(&msg);
        if let Some(tx) = self.clients.get(&conn) {
            let _ = tx.send(line);
        }
    }

    fn emit_frame(&mut self) {
        let t_ms = match self.clock {
            Clock::Sim => self.twin.time_ms(),
            Clock::Wall => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
        };
        let frame = self.twin.frame(self.seq, self.clock, t_ms);
        self.seq += 1;
        let line = self.record(&Message::Frame(frame));
        // no receivers is fine
        let _ = self.frames.send(line);
    }

    fn handle(&mut self, event: Inbound) {
        match event {
            Inbound::Connected(id, tx) => {
                self.clients.insert(id, tx);
            }
            Inbound::Disconnected(id) => {
                self.clients.remove(&id);
                if self.holder == Some(id) {
                    self.holder = None;
                }
            }
            Inbound::Line(id, line) => {
                self.commands_handled += 1;
                match parse_inbound(&line) {
                    Ok(env) => {
                        self.record(&Message::Cmd(env.clone()));
                        let reply = self.dispatch(id, &env);
                        self.reply(id, reply);
                    }
                    Err((cid, reason)) => self.reply(id, Message::nack(&cid, reason)),
                }
            }
        }
    }

    fn dispatch(&mut self, conn: ConnId, env: &CommandEnvelope) -> Message {
        let request = match parse_request(env) {
            Ok(r) => r,
            Err(reason) => return Message::nack(&env.id, reason),
        };
        match request {
            Request::AcquireToken => match self.holder {
                Some(h) if h != conn => Message::nack(&env.id, "token held by another client"),
                _ => {
                    self.holder = Some(conn);
                    Message::ack(&env.id)
                }
            },
            Request::ReleaseToken if self.holder == Some(conn) => {
                self.holder = None;
                Message::ack(&env.id)
            }
            _ if self.holder != Some(conn) => Message::nack(&env.id, "not control holder"),
            Request::ReleaseToken => unreachable!("holder case handled above"),
            Request::Manual(cmd) => match self.twin.command(cmd) {
                CommandOutcome::Accepted => Message::ack(&env.id),
                CommandOutcome::Rejected(r) => Message::nack(&env.id, r.to_string()),
            },
        }
    }
}

#[allow(clippy::too_many_arguments)]
async fn run_session(
    config: ServiceConfig,
    twin: Twin,
    mut script: Vec<ScheduledCommand>,
    log: Option<EventLog>,
    frames: broadcast::Sender<Arc<str>>,
    mut inbound: mpsc::Receiver<Inbound>,
    mut shutdown: watch::Receiver<bool>,
) -> SessionOutcome {
    script.sort_by_key(|s| s.at_ms);
    let mut script = script.into_iter().peekable();
    let dt = twin.controller().config().scan_dt_ms;
    let period_ms = 1000.0 / config.snapshot_hz;
    let mut s = Session {
        twin,
        log,
        frames,
        clients: HashMap::new(),
        holder: None,
        seq: 0,
        clock: config.clock,
        commands_handled: 0,
    };

    while s.clients.len() < config.wait_for_viewers {
        tokio::select! {
            ev = inbound.recv() => match ev {
                Some(ev) => s.handle(ev),
                None => break,
            },
            _ = shutdown.changed() => break,
        }
    }

    s.emit_frame();
    let mut next_frame_ms = period_ms;
    let start = Instant::now();
    let mut script_seq = 0u64;
    loop {
        if *shutdown.borrow() {
            break;
        }
        if config.duration_ms.is_some_and(|d| s.twin.time_ms() >= d) {
            break;
        }
        while let Ok(ev) = inbound.try_recv() {
            s.handle(ev);
        }
        while let Some(sc) = script.next_if(|sc| sc.at_ms <= s.twin.time_ms()) {
            let (_, msgs) = crate::scenario::apply_scripted(&mut s.twin, sc, script_seq);
            script_seq += 1;
            for m in &msgs {
                s.record(m);
            }
        }

        s.twin.step();
        let now = s.twin.time_ms();
        if now as f64 >= next_frame_ms {
            s.emit_frame();
            while next_frame_ms <= now as f64 {
                next_frame_ms += period_ms;
            }
        }

        match config.pace {
            Pace::RealTime { speed } => {
                let due = start + Duration::from_secs_f64(now as f64 / 1000.0 / speed);
                tokio::select! {
                    _ = tokio::time::sleep_until(due) => {}
                    _ = shutdown.changed() => {}
                }
            }
            Pace::Unpaced => {
                if now.is_multiple_of(dt * 20) {
                    tokio::task::yield_now().await;
                }
            }
        }
    }
    // last commands that arrived before the stop still get their replies
    while let Ok(ev) = inbound.try_recv() {
        s.handle(ev);
    }
    SessionOutcome {
        twin: s.twin,
        frames_sent: s.seq,
        commands_handled: s.commands_handled,
    }
}

/// Connect to a TCP endpoint and yield each inbound line. Used by the CLI
/// and tests as a minimal viewer.
pub async fn connect_lines(addr: SocketAddr) -> std::io::Result<(TcpViewer, mpsc::UnboundedReceiver<String>)> {
    let stream = TcpStream::connect(addr).await?;
    stream.set_nodelay(true)?;
    let (r, w) = stream.into_split();
    let (tx, rx) = mpsc::unbounded_channel();
    let reader = tokio::spawn(async move {
        let mut lines = BufReader::new(r).lines();
        while let Ok(Some(l)) = lines.next_line().await {
            if tx.send(l).is_err() {
                break;
            }
        }
    });
    Ok((TcpViewer { writer: w, reader }, rx))
}

pub struct TcpViewer {
    writer: tokio::net::tcp::OwnedWriteHalf,
    reader: JoinHandle<()>,
}

impl TcpViewer {
    pub async fn send(&mut self, msg: &Message) -> std::io::Result<()> {
        self.send_raw(&msg.to_line()).await
    }

    pub async fn send_raw(&mut self, line: &str) -> std::io::Result<()> {
        self.writer.write_all(line.as_bytes()).await?;
        self.writer.write_all(b"\n").await
    }
}

impl Drop for TcpViewer {
    fn drop(&mut self) {
        self.reader.abort();
    }
}
