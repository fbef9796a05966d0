//! Transports (TCP byte stream, websocket messages) and the HTTP routes.

use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use thermocloud_core::protocol::{decode_frame, DecodeError, Frame, Mode};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio::sync::watch;
use tracing::info;

use crate::engine::FieldSnapshot;
use crate::session::{run_session, FrameIo, IoError, Registry, SessionSettings};

/// Frames over a TCP byte stream.
pub struct TcpIo {
    stream: TcpStream,
    buf: Vec<u8>,
    max_payload: usize,
}

impl TcpIo {
    pub fn new(stream: TcpStream, max_payload: usize) -> Self {
        let _ = stream.set_nodelay(true);
        TcpIo {
            stream,
            buf: Vec::with_capacity(64),
            max_payload,
        }
    }
}

impl FrameIo for TcpIo {
    async fn send(&mut self, frame: &[u8]) -> Result<(), IoError> {
        self.stream.write_all(frame).await?;
        Ok(())
    }

    async fn recv(&mut self) -> Result<Option<Frame>, IoError> {
        loop {
            // client frames never depend on the cycle mode
            if let Some((frame, used)) = decode_frame(&self.buf, Mode::Full, self.max_payload)? {
                self.buf.drain(..used);
                return Ok(Some(frame));
            }
            if self.stream.read_buf(&mut self.buf).await? == 0 {
                return Ok(None);
            }
        }
    }
}

/// One frame per binary websocket message.
pub struct WsIo {
    socket: WebSocket,
    max_payload: usize,
}

impl WsIo {
    pub fn new(socket: WebSocket, max_payload: usize) -> Self {
        WsIo { socket, max_payload }
    }
}

impl FrameIo for WsIo {
    async fn send(&mut self, frame: &[u8]) -> Result<(), IoError> {
        self.socket
            .send(Message::Binary(frame.to_vec()))
            .await
            .map_err(|e| IoError::Message(e.to_string()))
    }

    async fn recv(&mut self) -> Result<Option<Frame>, IoError> {
        loop {
            let Some(msg) = self.socket.recv().await else {
                return Ok(None);
            };
            match msg.map_err(|e| IoError::Message(e.to_string()))? {
                Message::Binary(bytes) => {
                    return match decode_frame(&bytes, Mode::Full, self.max_payload)? {
                        Some((frame, used)) if used == bytes.len() => Ok(Some(frame)),
                        Some((frame, used)) => Err(IoError::Decode(DecodeError::TrailingBytes {
                            frame_type: frame.frame_type(),
                            extra: bytes.len() - used,
                        })),
                        None => Err(IoError::Message(format!("truncated frame of {} bytes", bytes.len()))),
                    };
                }
                Message::Close(_) => return Ok(None),
                Message::Ping(_) | Message::Pong(_) => continue,
                Message::Text(t) => return Err(IoError::Message(format!("text message `{t}`"))),
            }
        }
    }
}

/// State shared by every connection handler.
#[derive(Clone)]
pub struct Shared {
    pub snapshots: watch::Receiver<Arc<FieldSnapshot>>,
    pub settings: SessionSettings,
    pub registry: Arc<Registry>,
    pub shutdown: watch::Receiver<bool>,
    pub static_dir: Option<PathBuf>,
}

pub async fn serve_tcp(stream: TcpStream, shared: Shared) {
    let peer = stream.peer_addr().ok();
    let io = TcpIo::new(stream, shared.settings.max_payload);
    let end = run_session(io, shared.snapshots, shared.settings, shared.registry, shared.shutdown).await;
    info!(?peer, transport = "tcp", "session ended: {end}");
}

pub fn router(shared: Shared) -> Router {
    Router::new()
        .route("/stream", get(stream_upgrade))
        .route("/", get(index))
        .route("/*path", get(static_file))
        .with_state(shared)
}

async fn stream_upgrade(ws: WebSocketUpgrade, State(shared): State<Shared>) -> Response {
    ws.max_message_size(shared.settings.max_payload + 8)
        .on_upgrade(move |socket| async move {
            let io = WsIo::new(socket, shared.settings.max_payload);
            let end = run_session(io, shared.snapshots, shared.settings, shared.registry, shared.shutdown).await;
            info!(transport = "websocket", "session ended: {end}");
        })
}

const PLACEHOLDER: &str = "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>thermocloud</title></head>\n\
<body><p>thermocloud server. Binary frames are served on <code>/stream</code>; \
no viewer assets are installed.</p></body></html>\n";

async fn index(State(shared): State<Shared>) -> Response {
    if let Some(dir) = &shared.static_dir {
        if let Ok(body) = tokio::fs::read(dir.join("index.html")).await {
            return ([(header::CONTENT_TYPE, "text/html; charset=utf-8")], body).into_response();
        }
    }
    Html(PLACEHOLDER).into_response()
}

async fn static_file(UrlPath(path): UrlPath<String>, State(shared): State<Shared>) -> Response {
    let Some(dir) = &shared.static_dir else {
        return StatusCode::NOT_FOUND.into_response();
    };
    let Some(file) = safe_join(dir, &path) else {
        return StatusCode::NOT_FOUND.into_response();
    };
    match tokio::fs::read(&file).await {
        Ok(body) => ([(header::CONTENT_TYPE, content_type(&file))], body).into_response(),
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}

/// Joins a URL path under `dir`, refusing anything that climbs out.
fn safe_join(dir: &Path, path: &str) -> Option<PathBuf> {
    let rel = Path::new(path);
    if rel.components().all(|c| matches!(c, Component::Normal(_))) {
        Some(dir.join(rel))
    } else {
        None
    }
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("wasm") => "application/wasm",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        _ => "application/octet-stream",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn traversal_is_refused() {
        let dir = Path::new("/srv/www");
        assert_eq!(safe_join(dir, "app.js"), Some(PathBuf::from("/srv/www/app.js")));
        assert_eq!(safe_join(dir, "../etc/passwd"), None);
        assert_eq!(safe_join(dir, "/etc/passwd"), None);
        assert_eq!(content_type(Path::new("a.js")), "text/javascript");
    }
}
