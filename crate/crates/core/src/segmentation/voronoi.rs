//! Discrete Voronoi assignment of lattice particles to their nearest sensor
//! by sphere expansion.
//!
//! Every sensor grows outward from the lattice cell that contains it, in
//! increasing Euclidean distance order across all sensors at once. A sensor
//! keeps spreading through a particle while its distance there is within
//! one cell diagonal of the best distance recorded so far. That margin is
//! what makes the result exact: for any particle `q` whose true nearest
//! sensor is `s`, the lattice points obtained by rounding the segment
//! `q -> s` are 26-connected and each lies within half a cell diagonal of a
//! point whose nearest sensor is `s`, so `s` is never more than one
//! diagonal behind the winner along that path and always reaches `q`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use smallvec::SmallVec;

use super::SegmentationError;
use crate::field::{ParticleGrid, Point, SensorId, SensorSet};

#[inline]
pub(crate) fn dist2(a: &Point, b: &Point) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Front {
    d2: f64,
    particle: u32,
    sensor: u16,
}

impl Eq for Front {}

impl Ord for Front {
    // Reversed so the max-heap pops the closest pair first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .d2
            .total_cmp(&self.d2)
            .then_with(|| other.sensor.cmp(&self.sensor))
            .then_with(|| other.particle.cmp(&self.particle))
    }
}

impl PartialOrd for Front {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Nearest sensor id for every particle, ties going to the lowest id.
pub fn nearest_sensor_expansion(grid: &ParticleGrid, sensors: &SensorSet) -> Result<Vec<SensorId>, SegmentationError> {
    let (owner, _) = expand(grid, sensors)?;
    Ok(owner)
}

/// Nearest sensor id and the distance to it, per particle.
pub fn nearest_sensor_distances(
    grid: &ParticleGrid,
    sensors: &SensorSet,
) -> Result<(Vec<SensorId>, Vec<f64>), SegmentationError> {
    let (owner, d2) = expand(grid, sensors)?;
    Ok((owner, d2.into_iter().map(f64::sqrt).collect()))
}

fn expand(grid: &ParticleGrid, sensors: &SensorSet) -> Result<(Vec<SensorId>, Vec<f64>), SegmentationError> {
    if sensors.is_empty() {
        return Err(SegmentationError::InvalidArgument("no sensors to expand from".into()));
    }
    let sorted = sensors.sorted_by_id();
    let sites: Vec<Point> = sorted.iter().map(|s| s.position()).collect();
    let n = grid.len();
    let [sx, sy, sz] = grid.spacing();
    // One cell diagonal, padded against rounding in the slack comparison.
    let slack = (sx * sx + sy * sy + sz * sz).sqrt() * (1.0 + 1e-9);

    let mut best_d2 = vec![f64::INFINITY; n];
    let mut best_site = vec![u16::MAX; n];
    let mut reached: Vec<SmallVec<[u16; 4]>> = vec![SmallVec::new(); n];
    let mut heap = BinaryHeap::new();

    let positions = grid.positions();
    let dims = grid.dims();
    for (si, site) in sites.iter().enumerate() {
        let si = si as u16;
        let span = |v: f64, step: f64, n: usize| {
            let f = (v / step).floor().clamp(0.0, (n - 1) as f64) as usize;
            (f, (f + 1).min(n - 1))
        };
        let (i0, i1) = span(site.x, sx, dims[0]);
        let (j0, j1) = span(site.y, sy, dims[1]);
        let (k0, k1) = span(site.z, sz, dims[2]);
        for k in [k0, k1] {
            for j in [j0, j1] {
                for i in [i0, i1] {
                    let p = grid.index(i, j, k);
                    if !reached[p].contains(&si) {
                        reached[p].push(si);
                        heap.push(Front {
                            d2: dist2(&positions[p], site),
                            particle: p as u32,
                            sensor: si,
                        });
                    }
                }
            }
        }
    }

    while let Some(Front { d2, particle, sensor }) = heap.pop() {
        let p = particle as usize;
        let d = d2.sqrt();
        if d > best_d2[p].sqrt() + slack {
            continue;
        }
        if d2 < best_d2[p] || (d2 == best_d2[p] && sensor < best_site[p]) {
            best_d2[p] = d2;
            best_site[p] = sensor;
        }
        let site = &sites[sensor as usize];
        grid.for_each_neighbor(p, 1, |q| {
            if !reached[q].contains(&sensor) {
                let dq2 = dist2(&positions[q], site);
                if dq2.sqrt() <= best_d2[q].sqrt() + slack {
                    reached[q].push(sensor);
                    heap.push(Front {
                        d2: dq2,
                        particle: q as u32,
                        sensor,
                    });
                }
            }
            true
        });
    }

    let owner = best_site.iter().map(|&s| sorted[s as usize].id).collect();
    Ok((owner, best_d2))
}
