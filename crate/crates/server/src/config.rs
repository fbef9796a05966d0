//! Server configuration, read from a TOML document.
//!
//! Relative file paths inside the document resolve against the directory
//! that contains it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thermocloud_core::field::DEFAULT_NEUTRAL_TEMPERATURE;
use thermocloud_core::ingest::{SyntheticParams, DEFAULT_CHANNEL};
use thermocloud_core::lod::{BandConfig, LodKind};
use thermocloud_core::protocol::{Mode, DEFAULT_MAX_PAYLOAD};

use crate::ServerError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomConfig {
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

impl Default for RoomConfig {
    fn default() -> Self {
        RoomConfig {
            length: 4.0,
            width: 3.0,
            height: 2.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub dims: [usize; 3],
    pub neutral: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            dims: [40, 30, 25],
            neutral: DEFAULT_NEUTRAL_TEMPERATURE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorsConfig {
    /// CSV with header `id,x,y,layer`.
    pub layout: PathBuf,
    #[serde(default = "default_layers")]
    pub layers: Vec<f64>,
}

fn default_layers() -> Vec<f64> {
    vec![0.0, 1.0, 2.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SourceConfig {
    Synthetic(SyntheticParams),
    Csv {
        path: PathBuf,
        /// Playback speed; 0 releases every batch at once.
        #[serde(default = "default_speed")]
        speed: f64,
        #[serde(default = "default_channel")]
        channel: String,
    },
}

fn default_speed() -> f64 {
    1.0
}

fn default_channel() -> String {
    DEFAULT_CHANNEL.to_string()
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig::Synthetic(SyntheticParams::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ListenConfig {
    pub host: String,
    /// TCP port for the binary protocol; 0 picks a free port.
    pub port: u16,
    /// Port of the HTTP server carrying `/stream` and `/`.
    pub ws_port: u16,
    pub tick_ms: u64,
    pub mode: Mode,
    pub lod_kind: LodKind,
    /// Smallest value change worth a delta record, in degrees.
    pub epsilon: f64,
    /// Waves per diffusion sweep; 1 sends every change each cycle.
    pub diffusion_waves: usize,
    pub max_payload: usize,
    /// Directory served under `/`.
    pub static_dir: Option<PathBuf>,
    /// Emit a status line every this many ticks.
    pub log_every: u64,
    pub ack_timeout_ms: u64,
}

impl Default for ListenConfig {
    fn default() -> Self {
        ListenConfig {
            host: "127.0.0.1".into(),
            port: 7878,
            ws_port: 7879,
            tick_ms: 40,
            mode: Mode::Delta,
            lod_kind: LodKind::Resolution,
            epsilon: 0.01,
            diffusion_waves: 1,
            max_payload: DEFAULT_MAX_PAYLOAD,
            static_dir: None,
            log_every: 25,
            ack_timeout_ms: 30_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    #[serde(default)]
    pub room: RoomConfig,
    #[serde(default)]
    pub grid: GridConfig,
    pub sensors: SensorsConfig,
    #[serde(default)]
    pub source: SourceConfig,
    #[serde(default)]
    pub server: ListenConfig,
    #[serde(default)]
    pub bands: BandConfig,
}

impl ServerConfig {
    /// Defaults for everything but the layout path.
    pub fn with_layout(layout: PathBuf) -> Self {
        ServerConfig {
            room: RoomConfig::default(),
            grid: GridConfig::default(),
            sensors: SensorsConfig {
                layout,
                layers: default_layers(),
            },
            source: SourceConfig::default(),
            server: ListenConfig::default(),
            bands: BandConfig::default(),
        }
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ServerError> {
        let mut cfg: ServerConfig = toml::from_str(text).map_err(|e| ServerError::Config(e.to_string()))?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ServerError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ServerError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        ServerConfig::from_toml(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.sensors.layout);
        if let SourceConfig::Csv { path, .. } = &mut self.source {
            join(path);
        }
        if let Some(dir) = &mut self.server.static_dir {
            join(dir);
        }
    }

    pub fn validate(&self) -> Result<(), ServerError> {
        let bad = |m: String| Err(ServerError::Config(m));
        if self.server.tick_ms == 0 {
            return bad("server.tick_ms must be at least 1".into());
        }
        if !(self.server.epsilon >= 0.0 && self.server.epsilon.is_finite()) {
            return bad(format!(
                "server.epsilon must be finite and >= 0, got {}",
                self.server.epsilon
            ));
        }
        if self.server.diffusion_waves == 0 {
            return bad("server.diffusion_waves must be at least 1".into());
        }
        if self.server.log_every == 0 {
            return bad("server.log_every must be at least 1".into());
        }
        self.bands
            .validate()
            .map_err(|e| ServerError::Config(format!("bands: {e}")))?;
        if !self.sensors.layout.is_file() {
            return bad(format!(
                "sensor layout {} does not exist",
                self.sensors.layout.display()
            ));
        }
        if let SourceConfig::Csv { path, speed, .. } = &self.source {
            if !path.is_file() {
                return bad(format!("readings file {} does not exist", path.display()));
            }
            if !(*speed >= 0.0 && speed.is_finite()) {
                return bad(format!("source.speed must be finite and >= 0, got {speed}"));
            }
        }
        Ok(())
    }
}
