//! Reduced representations of the particle field.
//!
//! Four methods are provided: lattice clustering ([`cluster_grid`]),
//! local-extremum selection ([`significant_vertices`]), exact point budgets
//! per viewpoint band ([`Reresolver`]) and distance-ordered update waves
//! ([`DiffusionSchedule`]).

mod bands;
mod cluster;
mod diffusion;
mod resolution;
mod significant;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bands::{select_band, BandConfig};
pub use cluster::cluster_grid;
pub use diffusion::{diffusion_schedule, diffusion_schedule_for_points, next_wave, DiffusionSchedule};
pub use resolution::{decimation_ids, dense_dims, reresolve, Reresolver};
pub use significant::{significant_vertices, ExtremumMode};

use crate::field::{FieldError, ParticleGrid, Point, Readings, SensorSet};
use crate::segmentation::SegmentationError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LodError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("band {band} out of range for {bands} bands")]
    InvalidBand { band: usize, bands: usize },
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
}

impl From<FieldError> for LodError {
    fn from(e: FieldError) -> Self {
        LodError::InvalidArgument(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LodKind {
    /// New vertices, one per lattice block.
    Cluster,
    /// Subset of the original particles.
    Significant,
    /// Exact per-band point budget.
    Resolution,
}

impl fmt::Display for LodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LodKind::Cluster => "cluster",
            LodKind::Significant => "significant",
            LodKind::Resolution => "resolution",
        })
    }
}

impl FromStr for LodKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cluster" => Ok(LodKind::Cluster),
            "significant" => Ok(LodKind::Significant),
            "resolution" => Ok(LodKind::Resolution),
            other => Err(format!(
                "unknown LOD kind `{other}` (cluster | significant | resolution)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LodPoint {
    pub position: Point,
    pub value: f64,
}

/// A simplified point set for one distance band.
#[derive(Debug, Clone, PartialEq)]
pub struct LodLevel {
    pub band: usize,
    pub kind: LodKind,
    pub points: Vec<LodPoint>,
    /// Original particle ids, present when the points are a subset of the
    /// base lattice.
    pub source_ids: Option<Vec<u32>>,
}

impl LodLevel {
    pub fn new(kind: LodKind, points: Vec<LodPoint>, source_ids: Option<Vec<u32>>) -> Self {
        LodLevel {
            band: 0,
            kind,
            points,
            source_ids,
        }
    }

    pub fn with_band(mut self, band: usize) -> Self {
        self.band = band;
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Identifier of point `i` on the wire: its base particle id for subset
    /// levels, its index otherwise.
    pub fn wire_id(&self, i: usize) -> u32 {
        match &self.source_ids {
            Some(ids) => ids[i],
            None => i as u32,
        }
    }

    pub fn wire_ids(&self) -> Vec<u32> {
        match &self.source_ids {
            Some(ids) => ids.clone(),
            None => (0..self.points.len() as u32).collect(),
        }
    }

    /// Writes `x,y,z,value` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,y,z,value")?;
        for p in &self.points {
            writeln!(out, "{},{},{},{}", p.position.x, p.position.y, p.position.z, p.value)?;
        }
        Ok(())
    }
}

/// Produces the level of `kind` for `band` from the current field.
pub fn materialize(
    kind: LodKind,
    band: usize,
    bands: &BandConfig,
    grid: &ParticleGrid,
    sensors: &SensorSet,
    readings: &Readings,
    reresolver: &Reresolver,
) -> Result<LodLevel, LodError> {
    bands.check_band(band)?;
    let level = match kind {
        LodKind::Cluster => cluster_grid(grid, bands.cluster_factors[band])?,
        LodKind::Significant => significant_vertices(grid, bands.neighbor_depths[band], ExtremumMode::Both, sensors),
        LodKind::Resolution => reresolver.level(band, grid, readings)?,
    };
    Ok(level.with_band(band))
}
