//! `serve`: record and mimic sessions over WebSocket.
//!
//! Each connection owns one [`Connection`] state machine. The socket task
//! sleeps until the next deadline or mimic move, so timing is decided on
//! the server. Completed sessions are saved as datasets under `sessions/`.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use noisy_mdp::experiments::mimic_draws;
use noisy_mdp::mdp::ValueFunction;
use noisy_mdp::sampler::PosteriorSamples;
use noisy_mdp::session::{parse_client_message, Connection, ServerMessage, SessionSettings};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::net::TcpListener;
use tokio::time::Instant;

use crate::args::ServeArgs;
use crate::config::{resolve, Flags};
use crate::error::{CliError, Result};
use crate::Output;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServeConfig {
    pub addr: String,
    pub posterior: Option<PathBuf>,
    pub session: SessionSettings,
    /// Save completed sessions under `sessions/` in the output directory.
    pub persist: bool,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig { addr: "127.0.0.1:8080".into(), posterior: None, session: SessionSettings::default(), persist: true }
    }
}

/// Shared by every connection.
#[derive(Clone)]
pub struct ServeState {
    pub settings: SessionSettings,
    pub posterior: Option<Arc<Vec<ValueFunction>>>,
    pub sessions_dir: Option<PathBuf>,
    epoch: Instant,
    next_id: Arc<AtomicU64>,
}

impl ServeState {
    pub fn new(settings: SessionSettings, posterior: Option<Arc<Vec<ValueFunction>>>, sessions_dir: Option<PathBuf>) -> Self {
        ServeState { settings, posterior, sessions_dir, epoch: Instant::now(), next_id: Arc::new(AtomicU64::new(1)) }
    }

    fn now_ms(&self) -> u64 {
        self.epoch.elapsed().as_millis() as u64
    }

    fn instant(&self, ms: u64) -> Instant {
        self.epoch + Duration::from_millis(ms)
    }
}

pub fn router(state: ServeState) -> Router {
    Router::new().route("/ws", get(upgrade)).route("/", get(upgrade)).with_state(state)
}

/// Serve on an already bound listener until the future resolves.
pub async fn serve_until(
    listener: TcpListener,
    state: ServeState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<ServeState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| handle_socket(socket, state))
}

async fn send_all(socket: &mut WebSocket, msgs: Vec<ServerMessage>) -> bool {
    for m in msgs {
        if socket.send(Message::Text(m.to_json().into())).await.is_err() {
            return false;
        }
    }
    true
}

fn persist(state: &ServeState, conn: &Connection, id: u64, index: u64) {
    let (Some(dir), Some(dataset)) = (&state.sessions_dir, conn.dataset()) else {
        return;
    };
    let path = dir.join(format!("session-{id:04}-{index}.jsonl"));
    match dataset.save(&path) {
        Ok(()) => tracing::info!(path = %path.display(), observations = dataset.len(), "session saved"),
        Err(e) => tracing::error!(error = %e, "could not save session"),
    }
}

async fn handle_socket(mut socket: WebSocket, state: ServeState) {
    let id = state.next_id.fetch_add(1, Ordering::Relaxed);
    tracing::info!(id, "connected");
    let mut conn = Connection::new(state.settings.clone(), state.posterior.clone());
    let mut finished = false;
    let mut saved = 0;
    loop {
        let wake = conn.next_wakeup().map(|at| state.instant(at));
        let out = tokio::select! {
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Text(text))) => {
                    let now = state.now_ms();
                    match parse_client_message(text.as_str()) {
                        Ok(msg) => conn.handle(msg, now),
                        Err(e) => conn.malformed(&e),
                    }
                }
                Some(Ok(Message::Binary(_))) => conn.malformed("binary frames are not supported"),
                Some(Ok(Message::Ping(_) | Message::Pong(_))) => continue,
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
            },
            _ = async {
                match wake {
                    Some(at) => tokio::time::sleep_until(at).await,
                    None => std::future::pending().await,
                }
            } => conn.tick(state.now_ms()),
        };
        let alive = send_all(&mut socket, out).await;
        let now_finished = conn.session_finished();
        if now_finished && !finished {
            saved += 1;
            persist(&state, &conn, id, saved);
        }
        finished = now_finished;
        if !alive || conn.is_closed() {
            let _ = socket.send(Message::Close(None)).await;
            break;
        }
    }
    tracing::info!(id, "disconnected");
}

pub fn resolve_config(args: &ServeArgs, file: Option<Value>, seed: Option<u64>) -> Result<ServeConfig> {
    let mut flags = Flags::default();
    flags.set("addr", args.addr.clone()).set("posterior", args.posterior.clone());
    let mut session = Flags::default();
    session
        .set("mimic_interval_ms", args.mimic_interval_ms)
        .set("mimic_draws", args.mimic_draws)
        .set("max_blocks", args.max_blocks);
    flags.set("session", Some(session.into_value()));
    resolve(&ServeConfig::default(), file, flags, seed, "/session/seed")
}

pub fn run(args: ServeArgs, file: Option<Value>, seed: Option<u64>, out: &Output) -> Result<()> {
    let config = resolve_config(&args, file, seed)?;
    out.manifest("serve", &config)?;
    let posterior = match &config.posterior {
        Some(p) => {
            let post = PosteriorSamples::load(p)?;
            if post.dim != 3 || post.mode.is_tabular() {
                return Err(CliError::Config("mimic needs a 3-component basis posterior".into()));
            }
            Some(mimic_draws(&post, config.session.mimic_draws))
        }
        None => None,
    };
    let sessions_dir = config.persist.then(|| out.path("sessions"));
    if let Some(d) = &sessions_dir {
        std::fs::create_dir_all(d).map_err(|e| CliError::io(d, e))?;
    }
    let addr: SocketAddr = config
        .addr
        .parse()
        .map_err(|e| CliError::Config(format!("address `{}`: {e}", config.addr)))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Serve(e.to_string()))?;
    runtime.block_on(async move {
        let listener = TcpListener::bind(addr).await.map_err(|e| CliError::Serve(format!("bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| CliError::Serve(e.to_string()))?;
        println!("listening on ws://{local}/ws");
        let state = ServeState::new(config.session.clone(), posterior, sessions_dir);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        serve_until(listener, state, shutdown).await.map_err(|e| CliError::Serve(e.to_string()))
    })
}
