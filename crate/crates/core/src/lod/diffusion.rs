//! Bandwidth-staged delivery: particles are refreshed in waves ordered by
//! their distance to the nearest sensor, closest first.

use super::LodError;
use crate::field::{ParticleGrid, Point, SensorSet};
use crate::protocol::delta::{is_changed, SentValues};
use crate::segmentation::nearest_sensor_distances;

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    /// Point indices per wave, each wave sorted by (distance, index).
    waves: Vec<Vec<u32>>,
    /// Distance to the nearest sensor per point index.
    distance: Vec<f64>,
}

impl DiffusionSchedule {
    pub fn waves(&self) -> &[Vec<u32>] {
        &self.waves
    }

    pub fn wave_count(&self) -> usize {
        self.waves.len()
    }

    pub fn distance(&self, point: usize) -> f64 {
        self.distance[point]
    }

    pub fn point_count(&self) -> usize {
        self.distance.len()
    }

    fn from_distances(distance: Vec<f64>, waves: usize) -> Result<Self, LodError> {
        let n = distance.len();
        if waves == 0 {
            return Err(LodError::InvalidArgument("wave count must be at least 1".into()));
        }
        if waves > n {
            return Err(LodError::InvalidArgument(format!(
                "{waves} waves requested for {n} particles"
            )));
        }
        let mut order: Vec<u32> = (0..n as u32).collect();
        order.sort_by(|&a, &b| distance[a as usize].total_cmp(&distance[b as usize]).then(a.cmp(&b)));
        let base = n / waves;
        let extra = n % waves;
        let mut rest = order.as_slice();
        let mut out = Vec::with_capacity(waves);
        for w in 0..waves {
            let size = base + usize::from(w < extra);
            let (head, tail) = rest.split_at(size);
            out.push(head.to_vec());
            rest = tail;
        }
        Ok(DiffusionSchedule { waves: out, distance })
    }
}

/// Waves over the base lattice, using the sphere expansion for distances.
pub fn diffusion_schedule(
    grid: &ParticleGrid,
    sensors: &SensorSet,
    waves: usize,
) -> Result<DiffusionSchedule, LodError> {
    let (_, distance) = nearest_sensor_distances(grid, sensors)?;
    DiffusionSchedule::from_distances(distance, waves)
}

/// Waves over an arbitrary point set (an LOD level), by direct distance
/// evaluation.
pub fn diffusion_schedule_for_points(
    positions: &[Point],
    sensors: &SensorSet,
    waves: usize,
) -> Result<DiffusionSchedule, LodError> {
    if sensors.is_empty() {
        return Err(LodError::InvalidArgument("no sensors".into()));
    }
    let sites: Vec<Point> = sensors.sensors().iter().map(|s| s.position()).collect();
    let distance = positions
        .iter()
        .map(|p| sites.iter().map(|s| (p - s).norm()).fold(f64::INFINITY, f64::min))
        .collect();
    DiffusionSchedule::from_distances(distance, waves)
}

/// Changed `(id, value)` records of wave `cursor`.
///
/// `ids[i]` is the wire id of point `i` and `values[i]` its current value;
/// a record is due when its value moved more than `epsilon` from what was
/// last transmitted for that id, or was never transmitted.
pub fn next_wave(
    schedule: &DiffusionSchedule,
    cursor: usize,
    last_sent: &SentValues,
    ids: &[u32],
    values: &[f32],
    epsilon: f64,
) -> Result<Vec<(u32, f32)>, LodError> {
    let wave = schedule.waves.get(cursor).ok_or_else(|| {
        LodError::InvalidArgument(format!(
            "wave cursor {cursor} out of range for {} waves",
            schedule.waves.len()
        ))
    })?;
    if ids.len() != schedule.point_count() || values.len() != schedule.point_count() {
        return Err(LodError::InvalidArgument(format!(
            "schedule covers {} points, got {} ids and {} values",
            schedule.point_count(),
            ids.len(),
            values.len()
        )));
    }
    Ok(wave
        .iter()
        .filter_map(|&i| {
            let (id, v) = (ids[i as usize], values[i as usize]);
            is_changed(last_sent.get(&id).copied(), v, epsilon).then_some((id, v))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Room, Sensor, SensorId};

    fn corner_sensor() -> (ParticleGrid, SensorSet) {
        let room = Room::new(4.0, 3.0, 2.5).unwrap();
        let grid = ParticleGrid::new(room, [9, 7, 6], 20.0).unwrap();
        let set = SensorSet::new(
            &room,
            vec![0.0],
            vec![Sensor {
                id: SensorId(0),
                x: 0.0,
                y: 0.0,
                layer_height: 0.0,
                value: 20.0,
            }],
        )
        .unwrap();
        (grid, set)
    }

    #[test]
    fn single_wave_holds_everything() {
        let (grid, set) = corner_sensor();
        let s = diffusion_schedule(&grid, &set, 1).unwrap();
        assert_eq!(s.waves()[0].len(), grid.len());
    }

    #[test]
    fn two_waves_split_by_corner_distance() {
        let (grid, set) = corner_sensor();
        let s = diffusion_schedule(&grid, &set, 2).unwrap();
        // rank oracle: sort by distance to the origin corner, ties by id
        let mut rank: Vec<(f64, usize)> = (0..grid.len())
            .map(|p| {
                let q = grid.position(p);
                ((q.x * q.x + q.y * q.y + q.z * q.z).sqrt(), p)
            })
            .collect();
        rank.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let half = grid.len().div_ceil(2);
        let mut expected: Vec<u32> = rank[..half].iter().map(|r| r.1 as u32).collect();
        let mut got = s.waves()[0].clone();
        expected.sort_unstable();
        got.sort_unstable();
        assert_eq!(got, expected);
    }

    #[test]
    fn too_many_waves_is_an_error() {
        let (grid, set) = corner_sensor();
        assert!(diffusion_schedule(&grid, &set, grid.len() + 1).is_err());
        assert!(diffusion_schedule(&grid, &set, 0).is_err());
    }

    #[test]
    fn next_wave_reports_only_changes() {
        let (grid, set) = corner_sensor();
        let s = diffusion_schedule(&grid, &set, 3).unwrap();
        let ids: Vec<u32> = (0..grid.len() as u32).collect();
        let values = vec![20.0f32; grid.len()];
        let sent: SentValues = ids.iter().map(|&i| (i, 20.0)).collect();
        for w in 0..3 {
            assert!(next_wave(&s, w, &sent, &ids, &values, 0.01).unwrap().is_empty());
        }
        assert!(next_wave(&s, 3, &sent, &ids, &values, 0.01).is_err());
        let mut changed = values.clone();
        let far = grid.len() - 1;
        changed[far] = 25.0;
        assert!(next_wave(&s, 0, &sent, &ids, &changed, 0.01).unwrap().is_empty());
        assert_eq!(
            next_wave(&s, 2, &sent, &ids, &changed, 0.01).unwrap(),
            vec![(far as u32, 25.0)]
        );
    }
}
