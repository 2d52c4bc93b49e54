//! Websocket game server: one session per connection on `/ws`.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use onecommon::harness::GameAgent;
use onecommon::world::GameContext;
use tokio::net::TcpListener;

use crate::protocol::{parse_client, ServerFrame};
use crate::session::{Session, SessionConfig, TranscriptLog};

pub type AgentFactory = Arc<dyn Fn() -> Box<dyn GameAgent + Send> + Send + Sync>;

#[derive(Clone)]
pub struct ServerState {
    contexts: Arc<Vec<GameContext>>,
    agents: AgentFactory,
    config: SessionConfig,
    log: Option<Arc<TranscriptLog>>,
    sessions: Arc<AtomicUsize>,
}

impl ServerState {
    /// Sessions take contexts in order, wrapping around.
    pub fn new(contexts: Vec<GameContext>, agents: AgentFactory, config: SessionConfig, log: Option<Arc<TranscriptLog>>) -> anyhow::Result<Self> {
        anyhow::ensure!(!contexts.is_empty(), "the server needs at least one context");
        Ok(ServerState { contexts: Arc::new(contexts), agents, config, log, sessions: Arc::new(AtomicUsize::new(0)) })
    }

    fn open_session(&self) -> Session {
        let index = self.sessions.fetch_add(1, Ordering::SeqCst);
        let context = self.contexts[index % self.contexts.len()].clone();
        Session::new(index, context, (self.agents)(), self.config.clone(), self.log.clone())
    }
}

pub fn router(state: ServerState) -> Router {
    Router::new().route("/ws", get(upgrade)).route("/health", get(|| async { "ok" })).with_state(state)
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<ServerState>) -> Response {
    ws.on_upgrade(move |socket| run_connection(socket, state))
}

async fn run_connection(mut socket: WebSocket, state: ServerState) {
    let mut session = Some(state.open_session());
    while let Some(Ok(msg)) = socket.recv().await {
        let text = match msg {
            Message::Text(t) => t.to_string(),
            Message::Close(_) => break,
            _ => continue,
        };
        let frames = match parse_client(&text) {
            Err(reason) => vec![ServerFrame::error(reason)],
            Ok(frame) => {
                // Agent turns are CPU-bound; keep them off the async workers.
                let mut s = session.take().expect("session is returned after every frame");
                let joined = tokio::task::spawn_blocking(move || {
                    let out = s.handle(frame);
                    (s, out)
                })
                .await;
                match joined {
                    Ok((s, out)) => {
                        session = Some(s);
                        out
                    }
                    Err(_) => return,
                }
            }
        };
        for frame in frames {
            if socket.send(Message::Text(frame.to_json().into())).await.is_err() {
                return;
            }
        }
    }
}

/// Bind and serve until the process is stopped.
pub async fn serve(addr: SocketAddr, state: ServerState) -> anyhow::Result<()> {
    let listener = TcpListener::bind(addr).await?;
    eprintln!("listening on ws://{}/ws", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}
