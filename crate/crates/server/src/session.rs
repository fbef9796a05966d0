//! Per-connection protocol loop, independent of the transport.

use std::collections::BTreeMap;
use std::future::Future;
use std::io;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use thermocloud_core::lod::{BandConfig, LodKind};
use thermocloud_core::protocol::{CycleInput, DecodeError, Frame, Mode, Next, SessionError, SessionState};
use thermocloud_core::Point;
use thiserror::Error;
use tokio::sync::watch;
use tracing::{debug, warn};

use crate::engine::FieldSnapshot;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("undecodable client frame: {0}")]
    Decode(#[from] DecodeError),
    #[error("unexpected websocket message: {0}")]
    Message(String),
}

/// A frame transport: whole encoded frames out, decoded client frames in.
pub trait FrameIo: Send {
    fn send(&mut self, frame: &[u8]) -> impl Future<Output = Result<(), IoError>> + Send;
    /// Next client frame, or `None` once the peer has closed.
    fn recv(&mut self) -> impl Future<Output = Result<Option<Frame>, IoError>> + Send;
}

#[derive(Debug, Error)]
pub enum SessionEnd {
    #[error("client disconnected")]
    Disconnected,
    #[error("server shutting down")]
    Shutdown,
    #[error("no answer from client within {0:?}")]
    Timeout(Duration),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Session(SessionError),
    #[error("level unavailable: {0}")]
    Level(String),
}

#[derive(Debug, Clone)]
pub struct SessionSettings {
    pub mode: Mode,
    pub kind: LodKind,
    pub epsilon: f64,
    pub max_payload: usize,
    pub ack_timeout: Duration,
    pub bands: BandConfig,
    /// Band selection target in centimeters.
    pub target: Point,
    /// Camera position assumed until the client sends one, in centimeters.
    pub initial_viewpoint: Point,
}

/// Live session bookkeeping shared with the tick loop's status line.
#[derive(Debug, Default)]
pub struct Registry {
    inner: Mutex<RegistryInner>,
}

#[derive(Debug, Default)]
struct RegistryInner {
    next_id: u64,
    bands: BTreeMap<u64, usize>,
    encode_us: u64,
    encodes: u64,
}

impl Registry {
    pub fn join(self: &Arc<Self>) -> RegistryGuard {
        let mut g = self.inner.lock().expect("registry");
        let id = g.next_id;
        g.next_id += 1;
        g.bands.insert(id, 0);
        RegistryGuard {
            registry: self.clone(),
            id,
        }
    }

    pub fn clients(&self) -> usize {
        self.inner.lock().expect("registry").bands.len()
    }

    pub fn band_counts(&self, bands: usize) -> Vec<usize> {
        let g = self.inner.lock().expect("registry");
        let mut counts = vec![0; bands];
        for &b in g.bands.values() {
            if let Some(c) = counts.get_mut(b) {
                *c += 1;
            }
        }
        counts
    }

    /// Mean cycle encode time since the last call, in microseconds.
    pub fn take_encode_mean(&self) -> u64 {
        let mut g = self.inner.lock().expect("registry");
        let mean = g.encode_us.checked_div(g.encodes).unwrap_or(0);
        g.encode_us = 0;
        g.encodes = 0;
        mean
    }
}

/// Removes the session from the registry when dropped.
#[derive(Debug)]
pub struct RegistryGuard {
    registry: Arc<Registry>,
    id: u64,
}

impl RegistryGuard {
    fn set_band(&self, band: usize) {
        self.registry
            .inner
            .lock()
            .expect("registry")
            .bands
            .insert(self.id, band);
    }

    fn record_encode(&self, elapsed: Duration) {
        let mut g = self.registry.inner.lock().expect("registry");
        g.encode_us += elapsed.as_micros() as u64;
        g.encodes += 1;
    }
}

impl Drop for RegistryGuard {
    fn drop(&mut self) {
        if let Ok(mut g) = self.registry.inner.lock() {
            g.bands.remove(&self.id);
        }
    }
}

/// Runs cycles until the client leaves, the server shuts down or the
/// stream breaks. Out-of-phase client frames reset the session to a fresh
/// full cycle on the next tick instead of ending it.
pub async fn run_session<T: FrameIo>(
    mut io: T,
    mut snapshots: watch::Receiver<Arc<FieldSnapshot>>,
    settings: SessionSettings,
    registry: Arc<Registry>,
    mut shutdown: watch::Receiver<bool>,
) -> SessionEnd {
    let guard = registry.join();
    let mut state = match SessionState::new(
        settings.mode,
        settings.initial_viewpoint,
        settings.target,
        settings.bands.clone(),
        settings.epsilon,
    ) {
        Ok(s) => s,
        Err(e) => return SessionEnd::Level(e.to_string()),
    };
    let mut last_tick: Option<u64> = None;
    loop {
        guard.set_band(state.band());
        let snapshot = tokio::select! {
            r = snapshots.wait_for(|s| last_tick.is_none_or(|t| s.tick > t)) => match r {
                Ok(s) => s.clone(),
                Err(_) => return SessionEnd::Shutdown,
            },
            _ = shutdown.wait_for(|stop| *stop) => return SessionEnd::Shutdown,
        };
        last_tick = Some(snapshot.tick);
        let level = match snapshot.level(state.band(), settings.kind) {
            Ok(l) => l,
            Err(e) => return SessionEnd::Level(e.to_string()),
        };
        let started = Instant::now();
        let cycle = match state.start_cycle(&CycleInput {
            tick: snapshot.tick,
            room: snapshot.statics().room_wire,
            sensors: &snapshot.sensor_records,
            level: &level.wire,
            schedule: level.schedule.as_deref(),
            max_payload: settings.max_payload,
        }) {
            Ok(c) => c,
            Err(e) => return SessionEnd::Session(e),
        };
        guard.record_encode(started.elapsed());
        drop(snapshot);
        if let Err(e) = io.send(&cycle.header).await {
            return e.into();
        }
        loop {
            let frame = tokio::select! {
                r = tokio::time::timeout(settings.ack_timeout, io.recv()) => match r {
                    Err(_) => return SessionEnd::Timeout(settings.ack_timeout),
                    Ok(Err(e)) => return e.into(),
                    Ok(Ok(None)) => return SessionEnd::Disconnected,
                    Ok(Ok(Some(f))) => f,
                },
                _ = shutdown.wait_for(|stop| *stop) => return SessionEnd::Shutdown,
            };
            match state.on_frame(&frame) {
                Ok(Next::Send(ft)) => {
                    let bytes = cycle.frame(ft).expect("session only asks for server frames");
                    if let Err(e) = io.send(bytes).await {
                        return e.into();
                    }
                }
                Ok(Next::CycleComplete) => {
                    debug!(tick = cycle.tick, band = cycle.band, mode = %cycle.mode, "cycle complete");
                    break;
                }
                Err(e) if e.is_reset() => {
                    warn!("{e}; session reset");
                    break;
                }
                Err(e) => return SessionEnd::Session(e),
            }
        }
    }
}
