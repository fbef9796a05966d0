//! Startup, the tick loop, the reading source and the listeners.

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use thermocloud_core::ingest::{CsvReplay, Paced, SyntheticStream};
use thermocloud_core::{Point, Readings};
use tokio::net::TcpListener;
use tokio::sync::{mpsc, watch};
use tokio::task::JoinHandle;
use tracing::{error, info, warn};

use crate::config::{ServerConfig, SourceConfig};
use crate::engine::{Engine, FieldSnapshot};
use crate::net::{router, serve_tcp, Shared};
use crate::session::{Registry, SessionSettings};
use crate::ServerError;

const BATCH_QUEUE: usize = 1024;

/// Handle to a started server.
#[derive(Debug)]
pub struct RunningServer {
    pub tcp_addr: SocketAddr,
    pub http_addr: SocketAddr,
    snapshots: watch::Receiver<Arc<FieldSnapshot>>,
    registry: Arc<Registry>,
    shutdown: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
    ticker: Option<thread::JoinHandle<()>>,
}

impl RunningServer {
    /// Receiver of published snapshots.
    pub fn snapshots(&self) -> watch::Receiver<Arc<FieldSnapshot>> {
        self.snapshots.clone()
    }

    pub fn clients(&self) -> usize {
        self.registry.clients()
    }

    /// Stops the listeners, sessions and tick loop.
    pub async fn shutdown(mut self) {
        let _ = self.shutdown.send(true);
        for task in self.tasks.drain(..) {
            task.abort();
            let _ = task.await;
        }
        if let Some(t) = self.ticker.take() {
            let _ = tokio::task::spawn_blocking(move || t.join()).await;
        }
    }
}

/// Preprocesses the field, then starts the source, tick loop and both
/// listeners. Port 0 in the config binds a free port.
pub async fn start(config: ServerConfig) -> Result<RunningServer, ServerError> {
    config.validate()?;
    let cfg = config.clone();
    let engine = tokio::task::spawn_blocking(move || Engine::new(&cfg))
        .await
        .map_err(|e| ServerError::Config(format!("preprocessing task failed: {e}")))??;
    info!(
        particles = engine.grid().len(),
        sensors = engine.statics().sensors.len(),
        tetrahedra = engine.mesh().map_or(0, |m| m.len()),
        "preprocessing took {:?}",
        engine.preprocess_duration()
    );

    let pacing = source_batches(&config, &engine)?;
    let (shutdown_tx, shutdown_rx) = watch::channel(false);
    let (snap_tx, snap_rx) = watch::channel(engine.snapshot());
    let registry = Arc::new(Registry::default());
    let (batch_tx, batch_rx) = mpsc::channel(BATCH_QUEUE);

    let mut tasks = vec![tokio::spawn(run_source(pacing, batch_tx, shutdown_rx.clone()))];

    let room = engine.statics().room;
    let center = room.center();
    let target = Point::new(center.x * 100.0, center.y * 100.0, center.z * 100.0);
    let settings = SessionSettings {
        mode: config.server.mode,
        kind: config.server.lod_kind,
        epsilon: config.server.epsilon,
        max_payload: config.server.max_payload,
        ack_timeout: Duration::from_millis(config.server.ack_timeout_ms),
        bands: config.bands.clone(),
        target,
        initial_viewpoint: target,
    };
    let shared = Shared {
        snapshots: snap_rx.clone(),
        settings,
        registry: registry.clone(),
        shutdown: shutdown_rx.clone(),
        static_dir: config.server.static_dir.clone(),
    };

    let host = config.server.host.as_str();
    let tcp = TcpListener::bind((host, config.server.port)).await?;
    let http = TcpListener::bind((host, config.server.ws_port)).await?;
    let tcp_addr = tcp.local_addr()?;
    let http_addr = http.local_addr()?;
    info!(%tcp_addr, %http_addr, mode = %config.server.mode, lod_kind = %config.server.lod_kind, "listening");

    let tcp_shared = shared.clone();
    tasks.push(tokio::spawn(async move {
        loop {
            match tcp.accept().await {
                Ok((stream, _)) => {
                    tokio::spawn(serve_tcp(stream, tcp_shared.clone()));
                }
                Err(e) => warn!("accept failed: {e}"),
            }
        }
    }));
    let app = router(shared);
    let mut http_shutdown = shutdown_rx.clone();
    tasks.push(tokio::spawn(async move {
        let stop = async move {
            let _ = http_shutdown.wait_for(|s| *s).await;
        };
        if let Err(e) = axum::serve(http, app).with_graceful_shutdown(stop).await {
            error!("http server failed: {e}");
        }
    }));

    let tick = Duration::from_millis(config.server.tick_ms);
    let log_every = config.server.log_every;
    let bands = config.bands.len();
    let loop_registry = registry.clone();
    let ticker = thread::Builder::new().name("tick".into()).spawn(move || {
        tick_loop(
            engine,
            tick,
            log_every,
            bands,
            batch_rx,
            snap_tx,
            loop_registry,
            shutdown_rx,
        )
    })?;

    Ok(RunningServer {
        tcp_addr,
        http_addr,
        snapshots: snap_rx,
        registry,
        shutdown: shutdown_tx,
        tasks,
        ticker: Some(ticker),
    })
}

enum Pacing {
    Synthetic(Box<SyntheticStream>),
    Replay(Vec<Paced>),
}

fn source_batches(config: &ServerConfig, engine: &Engine) -> Result<Pacing, ServerError> {
    let sensors = &engine.statics().sensors;
    Ok(match &config.source {
        SourceConfig::Synthetic(params) => Pacing::Synthetic(Box::new(SyntheticStream::new(
            sensors,
            params.clone(),
            Duration::from_millis(config.server.tick_ms),
        )?)),
        SourceConfig::Csv { path, speed, channel } => {
            let replay = CsvReplay::open(path, sensors, channel)?;
            if !replay.skipped().is_empty() {
                warn!(rows = replay.skipped().len(), "readings for unknown sensors skipped");
            }
            info!(batches = replay.batches().len(), path = %path.display(), "replaying readings");
            Pacing::Replay(replay.paced(*speed)?)
        }
    })
}

async fn run_source(pacing: Pacing, tx: mpsc::Sender<Readings>, mut shutdown: watch::Receiver<bool>) {
    let batches: Box<dyn Iterator<Item = Paced> + Send> = match pacing {
        Pacing::Synthetic(s) => Box::new(s),
        Pacing::Replay(v) => Box::new(v.into_iter()),
    };
    for paced in batches {
        if !paced.delay.is_zero() {
            tokio::select! {
                _ = tokio::time::sleep(paced.delay) => {}
                _ = shutdown.wait_for(|s| *s) => return,
            }
        }
        if tx.send(paced.batch.readings).await.is_err() {
            return;
        }
    }
    info!("reading source exhausted; field holds its last values");
}

#[allow(clippy::too_many_arguments)]
fn tick_loop(
    mut engine: Engine,
    period: Duration,
    log_every: u64,
    bands: usize,
    mut batches: mpsc::Receiver<Readings>,
    publish: watch::Sender<Arc<FieldSnapshot>>,
    registry: Arc<Registry>,
    shutdown: watch::Receiver<bool>,
) {
    let mut next = Instant::now() + period;
    loop {
        let now = Instant::now();
        if next > now {
            thread::sleep(next - now);
        }
        // a late tick is skipped rather than bunched up
        next += period;
        let now = Instant::now();
        if next < now {
            next = now + period;
        }
        // a dropped handle counts as shutdown
        if *shutdown.borrow() || shutdown.has_changed().is_err() {
            return;
        }
        let mut merged = Readings::new();
        while let Ok(batch) = batches.try_recv() {
            merged.merge(&batch);
        }
        let snapshot = match engine.tick(&merged) {
            Ok(s) => s,
            Err(e) => {
                error!("tick failed: {e}");
                continue;
            }
        };
        let tick = snapshot.tick;
        publish.send_replace(snapshot);
        if tick % log_every == 0 {
            let counts = registry.band_counts(bands);
            let counts: Vec<String> = counts.iter().map(|c| c.to_string()).collect();
            info!(
                "tick={tick} clients={} band_counts=[{}] encode_us={}",
                registry.clients(),
                counts.join(","),
                registry.take_encode_mean()
            );
        }
    }
}
