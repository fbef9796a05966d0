//! Sensor influence over the particle grid.
//!
//! Particles inside the Delaunay mesh of the sensors interpolate the four
//! vertex readings of their tetrahedron with barycentric weights. Particles
//! outside the mesh copy the reading of their nearest sensor (discrete
//! Voronoi cell). The per-particle recipe is computed once into a
//! [`WeightMap`]; applying readings to it is a cheap linear pass.

mod delaunay;
mod tetra;
mod voronoi;

use std::io::{self, Write};

use thiserror::Error;

pub use delaunay::{tetrahedralize, TetraMesh, EPS_DELAUNAY_REL};
pub use tetra::{barycentric_weights, point_in_tetrahedron, signed_volume6, Tetrahedron, EPS_BARYCENTRIC};
pub use voronoi::{nearest_sensor_distances, nearest_sensor_expansion};

use crate::field::{ParticleGrid, Readings, SensorId, SensorSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentationError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate sensor set: {0}")]
    Degenerate(String),
    #[error("degenerate tetrahedron {0:?}")]
    DegenerateTetrahedron([SensorId; 4]),
    #[error("point {point:?} lies outside tetrahedron {tetrahedron:?}")]
    OutsideTetrahedron {
        point: [f64; 3],
        tetrahedron: [SensorId; 4],
    },
    #[error("no reading for sensor {0}")]
    MissingReading(SensorId),
}

/// Interpolation recipe for one particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    Inside {
        tet: u32,
        sensors: [SensorId; 4],
        weights: [f64; 4],
    },
    Outside {
        sensor: SensorId,
    },
}

impl Weight {
    pub fn references(&self, id: SensorId) -> bool {
        match self {
            Weight::Inside { sensors, weights, .. } => sensors.iter().zip(weights).any(|(&s, &w)| s == id && w != 0.0),
            Weight::Outside { sensor } => *sensor == id,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    entries: Vec<Weight>,
    referenced: Vec<SensorId>,
}

impl WeightMap {
    pub fn entries(&self) -> &[Weight] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorted ids of every sensor some particle depends on.
    pub fn referenced_sensors(&self) -> &[SensorId] {
        &self.referenced
    }

    pub fn inside_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|w| matches!(w, Weight::Inside { .. }))
            .count()
    }

    fn from_entries(entries: Vec<Weight>) -> Self {
        let mut referenced: Vec<SensorId> = entries
            .iter()
            .flat_map(|w| match w {
                Weight::Inside { sensors, .. } => sensors.to_vec(),
                Weight::Outside { sensor } => vec![*sensor],
            })
            .collect();
        referenced.sort_unstable();
        referenced.dedup();
        WeightMap { entries, referenced }
    }

    /// Writes interpolated values for `readings` into `out`.
    pub fn evaluate_into(&self, readings: &Readings, out: &mut [f64]) -> Result<(), SegmentationError> {
        if out.len() != self.entries.len() {
            return Err(SegmentationError::InvalidArgument(format!(
                "weight map covers {} particles, output has {}",
                self.entries.len(),
                out.len()
            )));
        }
        let table = readings.dense();
        let lookup = |id: SensorId| table.get(id.0 as usize).copied().flatten();
        if let Some(&missing) = self.referenced.iter().find(|&&id| lookup(id).is_none()) {
            return Err(SegmentationError::MissingReading(missing));
        }
        let read = |id: SensorId| table[id.0 as usize].unwrap_or_default();
        for (slot, w) in out.iter_mut().zip(&self.entries) {
            *slot = match *w {
                Weight::Inside { sensors, weights, .. } => {
                    let r = sensors.map(read);
                    let v: f64 = r.iter().zip(&weights).map(|(r, w)| r * w).sum();
                    // The exact convex combination lies within the vertex range.
                    let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    v.clamp(lo, hi)
                }
                Weight::Outside { sensor } => read(sensor),
            };
        }
        Ok(())
    }

    /// Dumps `particle_id,kind,tet_or_sensor,w0,w1,w2,w3`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "particle_id,kind,tet_or_sensor,w0,w1,w2,w3")?;
        for (p, w) in self.entries.iter().enumerate() {
            match w {
                Weight::Inside { tet, weights, .. } => writeln!(
                    out,
                    "{p},inside,{tet},{},{},{},{}",
                    weights[0], weights[1], weights[2], weights[3]
                )?,
                Weight::Outside { sensor } => writeln!(out, "{p},outside,{sensor},,,,")?,
            }
        }
        Ok(())
    }
}

/// Classifies every particle of `grid` against `mesh`.
///
/// Tetrahedra are scanned in ascending order and a particle belongs to the
/// first one that contains it, found by walking the lattice points inside
/// each tetrahedron's bounding box. Particles left over (or all of them
/// when `mesh` is `None`) take their nearest sensor.
pub fn locate(
    grid: &ParticleGrid,
    sensors: &SensorSet,
    mesh: Option<&TetraMesh>,
) -> Result<WeightMap, SegmentationError> {
    let mut entries: Vec<Option<Weight>> = vec![None; grid.len()];
    if let Some(mesh) = mesh {
        let margin = 1e-9 * grid.room().diagonal();
        for (t, tet) in mesh.tetrahedra().iter().enumerate() {
            let (lo, hi) = tet.bounding_box();
            let ranges: Option<Vec<(usize, usize)>> = (0..3)
                .map(|a| grid.axis_range(a, lo[a] - margin, hi[a] + margin))
                .collect();
            let Some(r) = ranges else { continue };
            for k in r[2].0..=r[2].1 {
                for j in r[1].0..=r[1].1 {
                    for i in r[0].0..=r[0].1 {
                        let p = grid.index(i, j, k);
                        if entries[p].is_some() {
                            continue;
                        }
                        let w = tet.raw_weights(&grid.lattice_position(i, j, k));
                        if w.iter().all(|&x| x >= -EPS_BARYCENTRIC) {
                            entries[p] = Some(Weight::Inside {
                                tet: t as u32,
                                sensors: tet.vertex_ids,
                                weights: w,
                            });
                        }
                    }
                }
            }
        }
    }
    let owners = if entries.iter().any(Option::is_none) {
        Some(nearest_sensor_expansion(grid, sensors)?)
    } else {
        None
    };
    let entries = entries
        .into_iter()
        .enumerate()
        .map(|(p, e)| {
            e.unwrap_or_else(|| Weight::Outside {
                sensor: owners.as_ref().expect("owners computed for unclassified particles")[p],
            })
        })
        .collect();
    Ok(WeightMap::from_entries(entries))
}

/// Tetrahedralizes `sensors` and locates `grid` against the result. A
/// degenerate sensor set yields an all-Outside map and the degeneracy error.
pub fn segment(
    grid: &ParticleGrid,
    sensors: &SensorSet,
) -> Result<(Option<TetraMesh>, WeightMap, Option<SegmentationError>), SegmentationError> {
    match tetrahedralize(sensors) {
        Ok(mesh) => {
            let wm = locate(grid, sensors, Some(&mesh))?;
            Ok((Some(mesh), wm, None))
        }
        Err(e @ SegmentationError::Degenerate(_)) => Ok((None, locate(grid, sensors, None)?, Some(e))),
        Err(e) => Err(e),
    }
}

/// Applies `readings` through `wm` to the grid values in place.
pub fn interpolate(wm: &WeightMap, readings: &Readings, grid: &mut ParticleGrid) -> Result<(), SegmentationError> {
    wm.evaluate_into(readings, grid.values_mut())
}
