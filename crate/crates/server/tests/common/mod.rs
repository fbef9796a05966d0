#![allow(dead_code)]

use std::path::PathBuf;

use thermocloud_server::{RunningServer, ServerConfig};

pub fn workspace() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../.."))
}

pub fn config() -> ServerConfig {
    let mut cfg = ServerConfig::load(&workspace().join("config/default.toml")).unwrap();
    cfg.server.port = 0;
    cfg.server.ws_port = 0;
    cfg
}

pub async fn start(cfg: ServerConfig) -> RunningServer {
    thermocloud_server::start(cfg).await.unwrap()
}

/// Viewpoint `d` centimeters from the canonical room center along +x.
pub fn at(d: f32) -> [f32; 3] {
    [200.0 + d, 150.0, 125.0]
}

static SERIAL: std::sync::Mutex<()> = std::sync::Mutex::new(());

/// Live-server tests are timing sensitive; run them one at a time.
pub fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}
