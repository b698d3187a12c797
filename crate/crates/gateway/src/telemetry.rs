//! WebSocket telemetry/control endpoint, optionally serving a static console.

use std::path::PathBuf;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use engage_core::telemetry::{ControlMessage, ServerMessage};
use tokio::net::TcpListener;
use tokio::sync::broadcast::error::RecvError;
use tower_http::services::ServeDir;

use crate::live::EngineHandle;

pub const DEFAULT_TELEMETRY_PORT: u16 = 7022;

/// `/ws` carries telemetry out and control in; every other path is served
/// from `console_dir` when given.
pub fn router(handle: EngineHandle, console_dir: Option<PathBuf>) -> Router {
    let app = Router::new().route("/ws", get(upgrade)).with_state(handle);
    match console_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

pub async fn serve_telemetry(
    listener: TcpListener,
    handle: EngineHandle,
    console_dir: Option<PathBuf>,
) -> std::io::Result<()> {
    axum::serve(listener, router(handle, console_dir)).await
}

async fn upgrade(ws: WebSocketUpgrade, State(handle): State<EngineHandle>) -> Response {
    ws.on_upgrade(move |socket| client(socket, handle))
}

fn error_frame(reason: String) -> Message {
    Message::Text(ServerMessage::Error { reason }.to_json().into())
}

async fn client(mut socket: WebSocket, handle: EngineHandle) {
    let mut frames = handle.subscribe();
    loop {
        tokio::select! {
            frame = frames.recv() => match frame {
                Ok(text) => {
                    if socket.send(Message::Text(text.into())).await.is_err() {
                        return;
                    }
                }
                Err(RecvError::Lagged(n)) => log::warn!("telemetry client lagged by {n} frames"),
                Err(RecvError::Closed) => return,
            },
            incoming = socket.recv() => {
                let reply = match incoming {
                    Some(Ok(Message::Text(text))) => ControlMessage::parse(text.as_str())
                        .and_then(|msg| handle.control(msg))
                        .err()
                        .map(error_frame),
                    Some(Ok(Message::Binary(_))) => Some(error_frame("control messages must be text".into())),
                    Some(Ok(Message::Close(_))) | Some(Err(_)) | None => return,
                    Some(Ok(_)) => None,
                };
                if let Some(reply) = reply {
                    if socket.send(reply).await.is_err() {
                        return;
                    }
                }
            }
        }
    }
}
