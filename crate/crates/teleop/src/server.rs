use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::sync::{mpsc, oneshot};
use tower_http::services::ServeDir;

use airhockey_core::env::{EnvConfig, TaskId};

use crate::protocol::TeleopMessage;
use crate::session::Session;
use crate::TeleopError;

const FALLBACK_PAGE: &str = include_str!("../static/index.html");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeleopConfig {
    pub listen: String,
    pub task_id: TaskId,
    pub seed: u64,
    pub participant_id: Option<String>,
    pub output_dir: PathBuf,
    /// Directory with the browser bundle; a minimal built-in page otherwise.
    pub static_dir: Option<PathBuf>,
    /// Full environment settings; task defaults when absent.
    pub env: Option<EnvConfig>,
}

impl Default for TeleopConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8765".into(),
            task_id: TaskId::Reach,
            seed: 0,
            participant_id: None,
            output_dir: PathBuf::from("teleop_data"),
            static_dir: None,
            env: None,
        }
    }
}

impl TeleopConfig {
    pub fn env_config(&self) -> Result<EnvConfig, TeleopError> {
        let cfg = match &self.env {
            Some(c) if c.task.task_id != self.task_id => {
                return Err(TeleopError::Config(format!(
                    "env settings are for {} but task_id is {}",
                    c.task.task_id, self.task_id
                )))
            }
            Some(c) => c.clone(),
            None => EnvConfig::default_for(self.task_id),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, TeleopError> {
        let text = std::fs::read_to_string(path).map_err(|e| TeleopError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| TeleopError::Config(e.to_string()))
    }
}

enum Event {
    Join {
        tx: mpsc::UnboundedSender<String>,
        reply: oneshot::Sender<u64>,
    },
    Leave(u64),
    Message(u64, TeleopMessage),
    Shutdown,
}

/// Handle to a running server.
pub struct ServerHandle {
    pub addr: SocketAddr,
    events: mpsc::UnboundedSender<Event>,
    task: tokio::task::JoinHandle<()>,
    sim: tokio::task::JoinHandle<Result<(), TeleopError>>,
}

impl ServerHandle {
    pub async fn shutdown(self) -> Result<(), TeleopError> {
        let _ = self.events.send(Event::Shutdown);
        let res = self.sim.await.map_err(|e| TeleopError::Io(e.to_string()))?;
        self.task.abort();
        res
    }
}

/// Binds the listener and starts the simulation loop and HTTP server.
pub async fn spawn(config: TeleopConfig) -> Result<ServerHandle, TeleopError> {
    let env_config = config.env_config()?;
    let session = Session::new(env_config, config.seed, config.participant_id.clone(), &config.output_dir)?;
    let listener = tokio::net::TcpListener::bind(&config.listen)
        .await
        .map_err(|e| TeleopError::Bind(format!("{}: {e}", config.listen)))?;
    let addr = listener.local_addr().map_err(|e| TeleopError::Bind(e.to_string()))?;
    let (events, rx) = mpsc::unbounded_channel();
    let sim = tokio::spawn(sim_loop(session, rx));

    let mut app = Router::new().route("/teleop", get(ws_handler));
    app = match &config.static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(|| async { Html(FALLBACK_PAGE) })),
    };
    let app = app.with_state(events.clone());
    let task = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            log::error!("teleop server stopped: {e}");
        }
    });
    log::info!("teleop listening on {addr}");
    Ok(ServerHandle { addr, events, task, sim })
}

/// Runs the service until the process is interrupted.
pub async fn serve(config: TeleopConfig) -> Result<(), TeleopError> {
    let handle = spawn(config).await?;
    let _ = tokio::signal::ctrl_c().await;
    handle.shutdown().await
}

async fn ws_handler(ws: WebSocketUpgrade, State(events): State<mpsc::UnboundedSender<Event>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, events))
}

async fn client(socket: WebSocket, events: mpsc::UnboundedSender<Event>) {
    let (mut sink, mut stream) = socket.split();
    let (tx, mut out) = mpsc::unbounded_channel::<String>();
    let (reply, id) = oneshot::channel();
    if events.send(Event::Join { tx, reply }).is_err() {
        return;
    }
    let Ok(id) = id.await else { return };
    let writer = tokio::spawn(async move {
        while let Some(text) = out.recv().await {
            if sink.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });
    while let Some(Ok(msg)) = stream.next().await {
        match msg {
            Message::Text(text) => match serde_json::from_str::<TeleopMessage>(&text) {
                Ok(m @ (TeleopMessage::TargetCommand { .. } | TeleopMessage::ControlCommand(_))) => {
                    if events.send(Event::Message(id, m)).is_err() {
                        break;
                    }
                }
                Ok(_) => {
                    let _ = events.send(Event::Message(id, TeleopMessage::ack(false, "protocol: client may only send TargetCommand or ControlCommand")));
                    break;
                }
                Err(e) => {
                    let _ = events.send(Event::Message(id, TeleopMessage::ack(false, format!("protocol: {e}"))));
                    break;
                }
            },
            Message::Close(_) => break,
            _ => {}
        }
    }
    let _ = events.send(Event::Leave(id));
    let _ = writer.await;
}

struct Clients {
    next_id: u64,
    senders: HashMap<u64, mpsc::UnboundedSender<String>>,
    controller: Option<u64>,
}

impl Clients {
    fn send(&self, id: u64, msg: &TeleopMessage) {
        if let Some(tx) = self.senders.get(&id) {
            let _ = tx.send(msg.to_json());
        }
    }
}

async fn sim_loop(mut session: Session, mut rx: mpsc::UnboundedReceiver<Event>) -> Result<(), TeleopError> {
    let dt = Duration::from_secs_f64(session.env().physics().control_dt);
    let mut interval = tokio::time::interval(dt);
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Burst);
    let mut clients = Clients {
        next_id: 0,
        senders: HashMap::new(),
        controller: None,
    };
    loop {
        tokio::select! {
            biased;
            ev = rx.recv() => {
                let Some(ev) = ev else { break };
                match ev {
                    Event::Shutdown => break,
                    Event::Join { tx, reply } => {
                        let id = clients.next_id;
                        clients.next_id += 1;
                        clients.senders.insert(id, tx);
                        clients.controller.get_or_insert(id);
                        let _ = reply.send(id);
                    }
                    Event::Leave(id) => {
                        clients.senders.remove(&id);
                        if clients.controller == Some(id) {
                            clients.controller = clients.senders.keys().min().copied();
                        }
                    }
                    Event::Message(id, TeleopMessage::Ack { ok, detail }) => {
                        // protocol violation reported by the connection; it closes next
                        clients.send(id, &TeleopMessage::Ack { ok, detail });
                        clients.senders.remove(&id);
                        if clients.controller == Some(id) {
                            clients.controller = clients.senders.keys().min().copied();
                        }
                    }
                    Event::Message(id, msg) => {
                        if clients.controller != Some(id) {
                            clients.send(id, &TeleopMessage::ack(false, "read-only"));
                            continue;
                        }
                        match msg {
                            TeleopMessage::TargetCommand { x, y } => {
                                if !session.set_target(x, y) {
                                    clients.send(id, &TeleopMessage::ack(false, "target must be finite"));
                                }
                            }
                            TeleopMessage::ControlCommand(c) => {
                                let ack = match session.apply(&c) {
                                    Ok(Some(path)) => TeleopMessage::ack(true, format!("saved {}", path.display())),
                                    Ok(None) => TeleopMessage::ack(true, "ok"),
                                    Err(e) => TeleopMessage::ack(false, e.to_string()),
                                };
                                clients.send(id, &ack);
                            }
                            _ => unreachable!("filtered by the connection"),
                        }
                    }
                }
            }
            _ = interval.tick() => {
                let flushed = session.tick()?;
                if let (Some(path), Some(c)) = (flushed, clients.controller) {
                    clients.send(c, &TeleopMessage::ack(true, format!("saved {}", path.display())));
                }
                for (&id, tx) in &clients.senders {
                    let b = TeleopMessage::StateBroadcast(session.broadcast(clients.controller == Some(id)));
                    let _ = tx.send(b.to_json());
                }
            }
        }
    }
    session.apply(&crate::protocol::Control::StopRecord)?;
    Ok(())
}
