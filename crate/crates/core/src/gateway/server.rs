//! Live control and observation service.
//!
//! One WebSocket endpoint multiplexes every node; nodes are addressed by
//! name, address or channel id. The engine runs on its own thread and is
//! reached only through an ordered command channel. Readers see immutable
//! snapshots.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, oneshot, watch};

use crate::engine::{Command, Engine, Snapshot};
use crate::ledger::Address;
use crate::registry::NodeTableRow;
use crate::time::TICK_MS;

/// Wire protocol version carried in every frame.
pub const PROTOCOL_VERSION: u32 = 1;

/// Environment variable holding the default listen port.
pub const PORT_ENV: &str = "UAANET_PORT";

pub const DEFAULT_PORT: u16 = 8000;

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub port: u16,
    pub speed: f64,
    pub bind: std::net::IpAddr,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            port: DEFAULT_PORT,
            speed: 1.0,
            bind: [127, 0, 0, 1].into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelInfo {
    pub channel_id: u32,
    pub name: String,
    pub address: Address,
}

/// Client to server frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientMessage {
    pub v: u32,
    /// Echoed in the reply so clients can match acks to commands.
    #[serde(default)]
    pub seq: Option<u64>,
    pub command: Command,
}

/// Server to client frame body.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        tick_ms: u64,
        channels: Vec<ChannelInfo>,
    },
    Snapshot {
        snapshot: Box<Snapshot>,
    },
    /// The command passed validation and is queued for the next tick boundary.
    Ack {
        seq: Option<u64>,
        tick: u64,
    },
    Error {
        seq: Option<u64>,
        reason: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub v: u32,
    #[serde(flatten)]
    pub body: ServerMessage,
}

impl Frame {
    pub fn new(body: ServerMessage) -> Self {
        Frame { v: PROTOCOL_VERSION, body }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("frames always serialize")
    }
}

/// Parses a client frame, returning the `seq` when it could be recovered.
pub fn parse_client_message(text: &str) -> Result<ClientMessage, (Option<u64>, String)> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| (None, format!("malformed JSON: {e}")))?;
    let seq = value.get("seq").and_then(serde_json::Value::as_u64);
    let message: ClientMessage = serde_json::from_value(value).map_err(|e| (seq, format!("malformed message: {e}")))?;
    if message.v != PROTOCOL_VERSION {
        return Err((seq, format!("unsupported protocol version {}", message.v)));
    }
    Ok(message)
}

struct Request {
    command: Command,
    reply: oneshot::Sender<Result<u64, String>>,
}

#[derive(Clone)]
struct Shared {
    commands: mpsc::Sender<Request>,
    frames: broadcast::Sender<Arc<str>>,
    latest: watch::Receiver<Arc<Snapshot>>,
    channels: Arc<Vec<ChannelInfo>>,
}

/// A running service. Dropping it stops the engine thread; the HTTP task
/// ends with the runtime.
pub struct ServerHandle {
    pub addr: SocketAddr,
    stop: Arc<AtomicBool>,
    engine_thread: Option<JoinHandle<()>>,
    server_task: tokio::task::JoinHandle<()>,
}

impl ServerHandle {
    pub async fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        self.server_task.abort();
        if let Some(t) = self.engine_thread.take() {
            let _ = tokio::task::spawn_blocking(move || t.join()).await;
        }
    }

    /// Waits until the HTTP server exits.
    pub async fn wait(mut self) {
        let _ = (&mut self.server_task).await;
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
    }
}

/// Snapshots published per tick, more than one tick apart above 1x.
pub fn decimation(speed: f64) -> u64 {
    if speed <= 1.0 {
        1
    } else {
        speed.ceil() as u64
    }
}

/// Binds and starts serving. Port 0 picks a free port.
pub async fn spawn(mut engine: Engine, config: ServerConfig) -> std::io::Result<ServerHandle> {
    let listener = tokio::net::TcpListener::bind((config.bind, config.port)).await?;
    let addr = listener.local_addr()?;
    if config.speed > 0.0 && config.speed.is_finite() {
        let _ = engine.apply(Command::SetSpeed { multiplier: config.speed });
    }
    let channels = Arc::new(
        engine
            .nodes()
            .iter()
            .map(|n| ChannelInfo {
                channel_id: n.channel_id,
                name: n.name.clone(),
                address: n.address,
            })
            .collect::<Vec<_>>(),
    );
    let (command_tx, command_rx) = mpsc::channel();
    let (frame_tx, _) = broadcast::channel(1024);
    let (latest_tx, latest_rx) = watch::channel(Arc::new(engine.snapshot()));
    let stop = Arc::new(AtomicBool::new(false));
    let engine_thread = {
        let frames = frame_tx.clone();
        let stop = stop.clone();
        std::thread::Builder::new()
            .name("uaanet-engine".into())
            .spawn(move || engine_loop(engine, command_rx, frames, latest_tx, stop))?
    };
    let shared = Shared {
        commands: command_tx,
        frames: frame_tx,
        latest: latest_rx,
        channels,
    };
    let app = Router::new()
        .route("/ws", get(ws_handler))
        .route("/nodes", get(nodes_handler))
        .route("/snapshot", get(snapshot_handler))
        .route("/channels", get(channels_handler))
        .with_state(shared);
    let server_task = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            tracing::error!("server stopped: {e}");
        }
    });
    tracing::info!("serving on {addr}");
    Ok(ServerHandle {
        addr,
        stop,
        engine_thread: Some(engine_thread),
        server_task,
    })
}

fn engine_loop(
    mut engine: Engine,
    commands: mpsc::Receiver<Request>,
    frames: broadcast::Sender<Arc<str>>,
    latest: watch::Sender<Arc<Snapshot>>,
    stop: Arc<AtomicBool>,
) {
    let publish = |engine: &mut Engine| {
        let snapshot = Arc::new(engine.snapshot());
        let frame = Frame::new(ServerMessage::Snapshot { snapshot: Box::new((*snapshot).clone()) });
        let _ = frames.send(frame.to_json().into());
        let _ = latest.send(snapshot);
    };
    // Wall-clock anchor for pacing; reset whenever speed or pause changes.
    let mut anchor = (Instant::now(), engine.tick(), engine.speed());
    let mut since_publish = 0u64;
    while !stop.load(Ordering::SeqCst) {
        loop {
            match commands.try_recv() {
                Ok(Request { command, reply }) => {
                    let result = engine.submit(command).map(|()| engine.tick()).map_err(|e| e.to_string());
                    let _ = reply.send(result);
                }
                Err(mpsc::TryRecvError::Empty) => break,
                Err(mpsc::TryRecvError::Disconnected) => return,
            }
        }
        if engine.paused() {
            if engine.has_pending() {
                engine.apply_pending();
                publish(&mut engine);
            }
            anchor = (Instant::now(), engine.tick(), engine.speed());
            std::thread::sleep(Duration::from_millis(TICK_MS));
            continue;
        }
        if engine.speed() != anchor.2 {
            anchor = (Instant::now(), engine.tick(), engine.speed());
        }
        let elapsed_ms = anchor.0.elapsed().as_secs_f64() * 1000.0;
        let target = anchor.1 + (elapsed_ms * engine.speed() / TICK_MS as f64) as u64;
        let every = decimation(engine.speed());
        if target <= engine.tick() {
            std::thread::sleep(Duration::from_micros(500));
            continue;
        }
        while engine.tick() < target && !engine.paused() {
            engine.advance();
            since_publish += 1;
            if since_publish >= every {
                since_publish = 0;
                publish(&mut engine);
            }
            if engine.has_pending() {
                break;
            }
        }
    }
}

async fn nodes_handler(State(shared): State<Shared>) -> Json<Vec<NodeTableRow>> {
    let table = shared.latest.borrow().node_table.clone();
    Json(table)
}

async fn snapshot_handler(State(shared): State<Shared>) -> Json<Snapshot> {
    let snapshot = (**shared.latest.borrow()).clone();
    Json(snapshot)
}

async fn channels_handler(State(shared): State<Shared>) -> Json<Vec<ChannelInfo>> {
    Json((*shared.channels).clone())
}

async fn ws_handler(ws: WebSocketUpgrade, State(shared): State<Shared>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client_session(socket, shared))
}

async fn client_session(socket: WebSocket, shared: Shared) {
    let (mut sink, mut stream) = socket.split();
    let (out_tx, mut out_rx) = tokio::sync::mpsc::unbounded_channel::<Arc<str>>();
    let hello = Frame::new(ServerMessage::Hello {
        tick_ms: TICK_MS,
        channels: (*shared.channels).clone(),
    });
    let _ = out_tx.send(hello.to_json().into());

    let mut frames = shared.frames.subscribe();
    let forward_tx = out_tx.clone();
    let forwarder = tokio::spawn(async move {
        loop {
            match frames.recv().await {
                Ok(frame) => {
                    if forward_tx.send(frame).is_err() {
                        break;
                    }
                }
                // A slow client skips snapshots; every snapshot is self-contained.
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => break,
            }
        }
    });
    let writer = tokio::spawn(async move {
        while let Some(text) = out_rx.recv().await {
            if sink.send(Message::Text(text.to_string())).await.is_err() {
                break;
            }
        }
    });

    // Commands from this client are handled one at a time, preserving order.
    while let Some(Ok(message)) = stream.next().await {
        let text = match message {
            Message::Text(t) => t,
            Message::Binary(b) => match String::from_utf8(b) {
                Ok(t) => t,
                Err(_) => {
                    let _ = out_tx.send(error_frame(None, "binary frames must be UTF-8 JSON".into()));
                    continue;
                }
            },
            Message::Close(_) => break,
            _ => continue,
        };
        let reply = match parse_client_message(&text) {
            Ok(ClientMessage { seq, command, .. }) => {
                let (tx, rx) = oneshot::channel();
                if shared.commands.send(Request { command, reply: tx }).is_err() {
                    break;
                }
                match rx.await {
                    Ok(Ok(tick)) => Frame::new(ServerMessage::Ack { seq, tick }).to_json().into(),
                    Ok(Err(reason)) => error_frame(seq, reason),
                    Err(_) => break,
                }
            }
            Err((seq, reason)) => error_frame(seq, reason),
        };
        if out_tx.send(reply).is_err() {
            break;
        }
    }
    forwarder.abort();
    drop(out_tx);
    let _ = writer.await;
}

fn error_frame(seq: Option<u64>, reason: String) -> Arc<str> {
    Frame::new(ServerMessage::Error { seq, reason }).to_json().into()
}
