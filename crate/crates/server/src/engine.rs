//! Field computation: one-time preprocessing and the per-tick update that
//! produces immutable snapshots.

use std::collections::HashMap;
use std::fs::File;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant};

use thermocloud_core::lod::{
    cluster_grid, diffusion_schedule_for_points, significant_vertices, BandConfig, DiffusionSchedule, ExtremumMode,
    LodKind, LodLevel, Reresolver,
};
use thermocloud_core::protocol::{SensorRecord, WireLevel};
use thermocloud_core::segmentation::{interpolate, segment, TetraMesh, WeightMap};
use thermocloud_core::{ParticleGrid, Readings, Room, SensorSet};
use tracing::warn;

use crate::config::ServerConfig;
use crate::ServerError;

const KINDS: [LodKind; 3] = [LodKind::Cluster, LodKind::Significant, LodKind::Resolution];
const SCHEDULE_CACHE_LIMIT: usize = 64;

fn kind_slot(kind: LodKind) -> usize {
    KINDS.iter().position(|k| *k == kind).expect("every kind is listed")
}

/// A level ready for the wire, with its wave schedule when diffusion is on.
#[derive(Debug)]
pub struct PreparedLevel {
    pub wire: WireLevel,
    pub schedule: Option<Arc<DiffusionSchedule>>,
}

/// Everything that is fixed after startup.
#[derive(Debug)]
pub struct Statics {
    pub room: Room,
    pub room_wire: [f32; 3],
    pub sensors: SensorSet,
    pub bands: BandConfig,
    pub reresolver: Reresolver,
    pub diffusion_waves: usize,
    schedules: Mutex<HashMap<u64, Arc<DiffusionSchedule>>>,
}

impl Statics {
    fn schedule_for(&self, wire: &WireLevel, level: &LodLevel) -> Result<Option<Arc<DiffusionSchedule>>, ServerError> {
        if self.diffusion_waves <= 1 {
            return Ok(None);
        }
        if let Some(s) = self.schedules.lock().expect("schedule cache").get(&wire.key) {
            return Ok(Some(s.clone()));
        }
        let positions: Vec<_> = level.points.iter().map(|p| p.position).collect();
        let waves = self.diffusion_waves.min(positions.len().max(1));
        let schedule = Arc::new(diffusion_schedule_for_points(&positions, &self.sensors, waves)?);
        let mut cache = self.schedules.lock().expect("schedule cache");
        if cache.len() >= SCHEDULE_CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(wire.key, schedule.clone());
        Ok(Some(schedule))
    }
}

/// The field at one tick. Never mutated after publication; LOD levels are
/// derived from it on first request and cached.
#[derive(Debug)]
pub struct FieldSnapshot {
    pub tick: u64,
    pub readings: Readings,
    pub sensor_records: Vec<SensorRecord>,
    pub grid: ParticleGrid,
    statics: Arc<Statics>,
    levels: Vec<OnceLock<Result<Arc<PreparedLevel>, String>>>,
}

impl FieldSnapshot {
    pub fn statics(&self) -> &Statics {
        &self.statics
    }

    /// The level of `kind` for `band`, computed once per snapshot.
    pub fn level(&self, band: usize, kind: LodKind) -> Result<Arc<PreparedLevel>, ServerError> {
        self.statics.bands.check_band(band)?;
        let slot = band * KINDS.len() + kind_slot(kind);
        self.levels[slot]
            .get_or_init(|| self.build_level(band, kind).map(Arc::new).map_err(|e| e.to_string()))
            .clone()
            .map_err(ServerError::Level)
    }

    fn build_level(&self, band: usize, kind: LodKind) -> Result<PreparedLevel, ServerError> {
        let s = &self.statics;
        let level = match kind {
            LodKind::Cluster => cluster_grid(&self.grid, s.bands.cluster_factors[band])?,
            LodKind::Significant => significant_vertices(
                &self.grid,
                s.bands.neighbor_depths[band],
                ExtremumMode::Both,
                &s.sensors,
            ),
            LodKind::Resolution => s.reresolver.level(band, &self.grid, &self.readings)?,
        }
        .with_band(band);
        let wire = WireLevel::from_level(&level)?;
        let schedule = s.schedule_for(&wire, &level)?;
        Ok(PreparedLevel { wire, schedule })
    }
}

/// Owns the working field and produces snapshots.
#[derive(Debug)]
pub struct Engine {
    statics: Arc<Statics>,
    weights: WeightMap,
    mesh: Option<TetraMesh>,
    grid: ParticleGrid,
    readings: Readings,
    tick: u64,
    preprocess: Duration,
}

impl Engine {
    /// Builds the grid, tetrahedralizes the sensors and precomputes the
    /// weight map and per-band plans.
    pub fn new(config: &ServerConfig) -> Result<Self, ServerError> {
        let started = Instant::now();
        let room = Room::new(config.room.length, config.room.width, config.room.height)?;
        let layout = File::open(&config.sensors.layout)
            .map_err(|e| ServerError::Config(format!("{}: {e}", config.sensors.layout.display())))?;
        let sensors = SensorSet::from_layout_csv(layout, &room, config.sensors.layers.clone(), config.grid.neutral)
            .map_err(|e| ServerError::Config(format!("{}: {e}", config.sensors.layout.display())))?;
        if sensors.is_empty() {
            return Err(ServerError::Config(format!(
                "{}: no sensors in layout",
                config.sensors.layout.display()
            )));
        }
        let grid = ParticleGrid::new(room, config.grid.dims, config.grid.neutral)?;
        let (mesh, weights, degenerate) = segment(&grid, &sensors)?;
        if let Some(e) = degenerate {
            warn!("{e}; every particle takes its nearest sensor's reading");
        }
        let reresolver = Reresolver::new(&grid, &sensors, mesh.as_ref(), &config.bands)?;
        let readings = Readings::from_sensors(&sensors);
        let statics = Arc::new(Statics {
            room,
            room_wire: [room.length as f32, room.width as f32, room.height as f32],
            sensors,
            bands: config.bands.clone(),
            reresolver,
            diffusion_waves: config.server.diffusion_waves,
            schedules: Mutex::new(HashMap::new()),
        });
        let mut engine = Engine {
            statics,
            weights,
            mesh,
            grid,
            readings,
            tick: 0,
            preprocess: Duration::ZERO,
        };
        interpolate(&engine.weights, &engine.readings, &mut engine.grid)?;
        engine.preprocess = started.elapsed();
        Ok(engine)
    }

    pub fn statics(&self) -> &Arc<Statics> {
        &self.statics
    }

    pub fn weights(&self) -> &WeightMap {
        &self.weights
    }

    pub fn mesh(&self) -> Option<&TetraMesh> {
        self.mesh.as_ref()
    }

    pub fn grid(&self) -> &ParticleGrid {
        &self.grid
    }

    pub fn preprocess_duration(&self) -> Duration {
        self.preprocess
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    /// Snapshot of the current state without advancing.
    pub fn snapshot(&self) -> Arc<FieldSnapshot> {
        let sensor_records = self
            .statics
            .sensors
            .sorted_by_id()
            .iter()
            .map(|s| {
                let p = s.position();
                SensorRecord {
                    id: s.id.0,
                    position: [p.x as f32, p.y as f32, p.z as f32],
                    value: self.readings.get(s.id).unwrap_or(s.value) as f32,
                }
            })
            .collect();
        Arc::new(FieldSnapshot {
            tick: self.tick,
            readings: self.readings.clone(),
            sensor_records,
            grid: self.grid.clone(),
            statics: self.statics.clone(),
            levels: (0..self.statics.bands.len() * KINDS.len())
                .map(|_| OnceLock::new())
                .collect(),
        })
    }

    /// Applies a batch (readings for unknown sensors are dropped with a
    /// warning), re-interpolates and advances the tick.
    pub fn tick(&mut self, batch: &Readings) -> Result<Arc<FieldSnapshot>, ServerError> {
        for (id, value) in batch.iter() {
            if self.statics.sensors.contains(id) && value.is_finite() {
                self.readings.insert(id, value);
            } else {
                warn!(sensor = %id, "reading skipped: unknown sensor or non-finite value");
            }
        }
        interpolate(&self.weights, &self.readings, &mut self.grid)?;
        self.tick += 1;
        Ok(self.snapshot())
    }
}
