//! Session service over WebSocket `/stream` or stdin/stdout. Every
//! connection runs its [`Connection`] on a dedicated blocking thread so
//! realtime deadlines are not tied to the async executor.

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::time::Instant;

use lookahead::pipeline::{ClientMessage, Connection, Engines, SessionConfig, StreamEvent};
use lookahead::Tonality;

use crate::{engines, ServeArgs};

/// Shared by every connection of one server.
pub struct Service {
    pub base: SessionConfig,
    pub engines: Engines,
    /// Re-read at every `start` when set.
    pub reload_patterns: Option<PathBuf>,
}

impl Service {
    pub fn new(args: &ServeArgs) -> anyhow::Result<Self> {
        let base = SessionConfig {
            clock: args.clock.into(),
            scheduler: args.engines.scheduler.into(),
            cache_wait: args.engines.cache_wait(),
            ..SessionConfig::default()
        };
        let reload_patterns = match (&args.engines.patterns, args.reload_patterns) {
            (Some(p), true) => Some(p.clone()),
            (None, true) => anyhow::bail!("--reload-patterns needs --patterns"),
            _ => None,
        };
        Ok(Service { base, engines: engines::load(&args.engines, Tonality::C_MAJOR)?, reload_patterns })
    }

    pub fn connection(&self) -> Connection {
        Connection::new(self.base.clone(), self.engines.clone())
    }
}

/// Feeds client lines into `conn` and passes its events to `send` until
/// the client goes away or `send` reports the peer is gone. A session
/// still running when the input closes is ended so the client receives
/// the latency report.
pub fn connection_loop(
    service: &Service,
    conn: &mut Connection,
    rx: Receiver<String>,
    mut send: impl FnMut(&StreamEvent) -> bool,
) {
    loop {
        let next = match conn.next_deadline() {
            Some(at) => rx.recv_timeout(at.saturating_duration_since(Instant::now())),
            None => rx.recv().map_err(|_| RecvTimeoutError::Disconnected),
        };
        let (events, done) = match next {
            Ok(line) => (handle(service, conn, &line), false),
            Err(RecvTimeoutError::Timeout) => (conn.poll(), false),
            Err(RecvTimeoutError::Disconnected) => {
                let running = conn.session().is_some_and(|s| s.is_running());
                (if running { conn.handle(ClientMessage::End) } else { Vec::new() }, true)
            }
        };
        if !events.iter().all(&mut send) || done {
            return;
        }
    }
}

fn handle(service: &Service, conn: &mut Connection, line: &str) -> Vec<StreamEvent> {
    let mut events = Vec::new();
    if let Some(path) = &service.reload_patterns {
        if matches!(ClientMessage::parse(line), Ok(ClientMessage::Start { .. })) {
            match engines::load_patterns(Some(path)) {
                Ok(p) => conn.engines_mut().patterns = p,
                Err(e) => {
                    tracing::warn!(error = %e, "pattern reload failed, keeping the previous library");
                    events.push(StreamEvent::Error { message: format!("pattern reload: {e:#}"), fatal: false, ts_us: 0 });
                }
            }
        }
    }
    events.extend(conn.handle_line(line));
    events
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new().route("/stream", get(upgrade)).with_state(service)
}

async fn upgrade(ws: WebSocketUpgrade, State(service): State<Arc<Service>>) -> Response {
    ws.on_upgrade(move |socket| websocket_session(socket, service))
}

async fn websocket_session(socket: WebSocket, service: Arc<Service>) {
    let (mut outgoing, mut incoming) = socket.split();
    let (line_tx, line_rx) = mpsc::channel::<String>();
    let (event_tx, mut event_rx) = tokio::sync::mpsc::unbounded_channel::<String>();

    let worker = tokio::task::spawn_blocking(move || {
        let mut conn = service.connection();
        connection_loop(&service, &mut conn, line_rx, |e| event_tx.send(e.to_json_line()).is_ok());
    });
    let writer = tokio::spawn(async move {
        while let Some(line) = event_rx.recv().await {
            if outgoing.send(Message::Text(line.into())).await.is_err() {
                break;
            }
        }
        let _ = outgoing.close().await;
    });

    while let Some(Ok(msg)) = incoming.next().await {
        match msg {
            Message::Text(text) => {
                if line_tx.send(text.to_string()).is_err() {
                    break;
                }
            }
            Message::Close(_) => break,
            _ => {}
        }
    }
    drop(line_tx);
    let _ = worker.await;
    let _ = writer.await;
}

/// One connection on stdin/stdout, one message per line.
pub fn serve_stdio(service: &Service) -> anyhow::Result<()> {
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        for line in std::io::stdin().lock().lines() {
            let Ok(line) = line else { break };
            if !line.trim().is_empty() && tx.send(line).is_err() {
                break;
            }
        }
    });
    let mut out = std::io::stdout().lock();
    let mut conn = service.connection();
    connection_loop(service, &mut conn, rx, |e| writeln!(out, "{}", e.to_json_line()).and_then(|_| out.flush()).is_ok());
    Ok(())
}

pub fn serve(args: ServeArgs) -> anyhow::Result<()> {
    let service = Service::new(&args)?;
    if args.stdio {
        return serve_stdio(&service);
    }
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&args.listen).await?;
        tracing::info!(addr = %listener.local_addr()?, "listening on /stream");
        axum::serve(listener, router(Arc::new(service))).await?;
        Ok(())
    })
}
