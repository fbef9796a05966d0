//! Server-side re-resolution: a fixed point budget per band, met exactly.
//!
//! Budgets above the base particle count are served from a denser lattice
//! (in-plane density raised, layer count kept) that is located against the
//! sensor mesh once and re-interpolated per request. Budgets at or below the
//! base count are served by decimating the base lattice with an integer
//! stride, trimming surplus ids from the tail.

use super::{BandConfig, LodError, LodKind, LodLevel, LodPoint};
use crate::field::{ParticleGrid, Readings, SensorSet};
use crate::segmentation::{locate, TetraMesh, WeightMap};

#[derive(Debug, Clone)]
enum Plan {
    Dense {
        grid: ParticleGrid,
        weights: WeightMap,
        keep: Option<Vec<u32>>,
    },
    Decimate {
        ids: Vec<u32>,
    },
}

/// Base-lattice ids for a decimated level of exactly `target` points.
pub fn decimation_ids(n: usize, target: usize) -> Vec<u32> {
    let target = target.min(n);
    if target == 0 {
        return Vec::new();
    }
    let stride = (n / target).max(1);
    (0..n as u32).step_by(stride).take(target).collect()
}

/// Dims of the denser lattice for `target > n`: nx and ny scaled by
/// `sqrt(target / n)`. The second value is true when the product is exact.
pub fn dense_dims(dims: [usize; 3], target: usize) -> ([usize; 3], bool) {
    let n = dims[0] * dims[1] * dims[2];
    let r = (target as f64 / n as f64).sqrt();
    let rounded = [
        ((dims[0] as f64 * r).round() as usize).max(2),
        ((dims[1] as f64 * r).round() as usize).max(2),
        dims[2],
    ];
    if rounded.iter().product::<usize>() == target {
        return (rounded, true);
    }
    let mut up = [
        ((dims[0] as f64 * r).ceil() as usize).max(2),
        ((dims[1] as f64 * r).ceil() as usize).max(2),
        dims[2],
    ];
    while up.iter().product::<usize>() < target {
        up[0] += 1;
    }
    (up, false)
}

/// Precomputed re-resolution plans, one per band.
#[derive(Debug, Clone)]
pub struct Reresolver {
    plans: Vec<Plan>,
    base_len: usize,
}

impl Reresolver {
    pub fn new(
        grid: &ParticleGrid,
        sensors: &SensorSet,
        mesh: Option<&TetraMesh>,
        bands: &BandConfig,
    ) -> Result<Self, LodError> {
        bands.validate()?;
        let plans = bands
            .targets
            .iter()
            .map(|&target| plan(grid, sensors, mesh, target))
            .collect::<Result<_, _>>()?;
        Ok(Reresolver {
            plans,
            base_len: grid.len(),
        })
    }

    pub fn bands(&self) -> usize {
        self.plans.len()
    }

    /// The level for `band` given the current base values and readings.
    pub fn level(&self, band: usize, base: &ParticleGrid, readings: &Readings) -> Result<LodLevel, LodError> {
        let plan = self.plans.get(band).ok_or(LodError::InvalidBand {
            band,
            bands: self.plans.len(),
        })?;
        if base.len() != self.base_len {
            return Err(LodError::InvalidArgument(format!(
                "base grid has {} particles, plan was built for {}",
                base.len(),
                self.base_len
            )));
        }
        let level = match plan {
            Plan::Decimate { ids } => {
                let values = base.values();
                let points = ids
                    .iter()
                    .map(|&p| LodPoint {
                        position: base.position(p as usize),
                        value: values[p as usize],
                    })
                    .collect();
                LodLevel::new(LodKind::Resolution, points, Some(ids.clone()))
            }
            Plan::Dense { grid, weights, keep } => {
                let mut values = vec![0.0; grid.len()];
                weights.evaluate_into(readings, &mut values)?;
                let point = |p: usize| LodPoint {
                    position: grid.position(p),
                    value: values[p],
                };
                let points = match keep {
                    Some(ids) => ids.iter().map(|&p| point(p as usize)).collect(),
                    None => (0..grid.len()).map(point).collect(),
                };
                LodLevel::new(LodKind::Resolution, points, None)
            }
        };
        Ok(level.with_band(band))
    }
}

fn plan(grid: &ParticleGrid, sensors: &SensorSet, mesh: Option<&TetraMesh>, target: usize) -> Result<Plan, LodError> {
    let n = grid.len();
    if target <= n {
        return Ok(Plan::Decimate {
            ids: decimation_ids(n, target),
        });
    }
    let (dims, exact) = dense_dims(grid.dims(), target);
    let dense = ParticleGrid::new(*grid.room(), dims, 0.0)?;
    let weights = locate(&dense, sensors, mesh)?;
    let keep = (!exact).then(|| decimation_ids(dense.len(), target));
    Ok(Plan::Dense {
        grid: dense,
        weights,
        keep,
    })
}

/// One-shot re-resolution of `grid` for `band`.
///
/// Builds the plan for that band only; servers answering repeated requests
/// should keep a [`Reresolver`].
pub fn reresolve(
    grid: &ParticleGrid,
    sensors: &SensorSet,
    mesh: Option<&TetraMesh>,
    readings: &Readings,
    band: usize,
    bands: &BandConfig,
) -> Result<LodLevel, LodError> {
    bands.validate()?;
    bands.check_band(band)?;
    let single = Reresolver {
        plans: vec![plan(grid, sensors, mesh, bands.targets[band])?],
        base_len: grid.len(),
    };
    Ok(single.level(0, grid, readings)?.with_band(band))
}
