use serde::{Deserialize, Serialize};

use super::{LodKind, LodLevel, LodPoint};
use crate::field::{ParticleGrid, SensorSet};

/// Which local extrema a significant-vertex level keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtremumMode {
    High,
    Low,
    Both,
}

/// Keeps the particles whose value is a strict local maximum (`High`),
/// strict local minimum (`Low`) or either (`Both`) over their Chebyshev
/// neighborhood of radius `depth`.
///
/// Growing `depth` can only shrink the kept set. Depth 0 keeps every
/// particle. A depth where nothing qualifies reuses the deepest shallower
/// depth that kept something, and a field without any strict extremum (a
/// uniform field) keeps the particles nearest to each sensor.
pub fn significant_vertices(grid: &ParticleGrid, depth: usize, mode: ExtremumMode, sensors: &SensorSet) -> LodLevel {
    let values = grid.values();
    let ids: Vec<u32> = if depth == 0 {
        (0..grid.len() as u32).collect()
    } else {
        // an empty depth borrows the deepest shallower depth that kept anything
        match (1..=depth)
            .rev()
            .map(|d| extrema(grid, d, mode))
            .find(|k| !k.is_empty())
        {
            Some(kept) => kept,
            None => {
                let mut fallback: Vec<u32> = sensors
                    .sensors()
                    .iter()
                    .map(|s| grid.nearest_particle(&s.position()) as u32)
                    .collect();
                fallback.sort_unstable();
                fallback.dedup();
                fallback
            }
        }
    };
    let points = ids
        .iter()
        .map(|&p| LodPoint {
            position: grid.position(p as usize),
            value: values[p as usize],
        })
        .collect();
    LodLevel::new(LodKind::Significant, points, Some(ids))
}

fn extrema(grid: &ParticleGrid, depth: usize, mode: ExtremumMode) -> Vec<u32> {
    let values = grid.values();
    (0..grid.len())
        .filter(|&p| {
            let v = values[p];
            let high = matches!(mode, ExtremumMode::High | ExtremumMode::Both)
                && grid.for_each_neighbor(p, depth, |q| values[q] < v);
            high || (matches!(mode, ExtremumMode::Low | ExtremumMode::Both)
                && grid.for_each_neighbor(p, depth, |q| values[q] > v))
        })
        .map(|p| p as u32)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Room, Sensor, SensorId};

    fn setup() -> (ParticleGrid, SensorSet) {
        let room = Room::new(4.0, 3.0, 2.5).unwrap();
        let grid = ParticleGrid::new(room, [12, 10, 8], 20.0).unwrap();
        let list = (0..5u16)
            .map(|i| Sensor {
                id: SensorId(i),
                x: 0.5 + i as f64 * 0.7,
                y: 1.0,
                layer_height: 1.0,
                value: 20.0,
            })
            .collect();
        let set = SensorSet::new(&room, vec![1.0], list).unwrap();
        (grid, set)
    }

    #[test]
    fn uniform_field_falls_back_to_sensor_particles() {
        let (grid, set) = setup();
        for depth in 1..=3 {
            let level = significant_vertices(&grid, depth, ExtremumMode::Both, &set);
            let expected: Vec<u32> = set
                .sensors()
                .iter()
                .map(|s| grid.nearest_particle(&s.position()) as u32)
                .collect();
            assert_eq!(level.source_ids.as_deref(), Some(expected.as_slice()));
        }
    }

    #[test]
    fn single_hot_particle_is_the_only_high() {
        let (mut grid, set) = setup();
        let hot = grid.index(6, 5, 4);
        grid.values_mut()[hot] = 30.0;
        let level = significant_vertices(&grid, 1, ExtremumMode::High, &set);
        assert_eq!(level.source_ids, Some(vec![hot as u32]));
        assert_eq!(level.points[0].value, 30.0);
    }

    #[test]
    fn empty_depth_reuses_shallower_extrema() {
        let (mut grid, set) = setup();
        // two equal peaks three cells apart: strict at depth 1 and 2, tied at depth 3
        let a = grid.index(3, 5, 4);
        let b = grid.index(6, 5, 4);
        grid.values_mut()[a] = 30.0;
        grid.values_mut()[b] = 30.0;
        let d2 = significant_vertices(&grid, 2, ExtremumMode::High, &set);
        let d3 = significant_vertices(&grid, 3, ExtremumMode::High, &set);
        assert_eq!(d2.source_ids, Some(vec![a as u32, b as u32]));
        assert_eq!(d3.source_ids, d2.source_ids);
    }

    #[test]
    fn depth_zero_is_identity() {
        let (grid, set) = setup();
        assert_eq!(
            significant_vertices(&grid, 0, ExtremumMode::Both, &set).len(),
            grid.len()
        );
    }

    #[test]
    fn low_mode_finds_cold_spot() {
        let (mut grid, set) = setup();
        let cold = grid.index(2, 2, 2);
        grid.values_mut()[cold] = 10.0;
        let level = significant_vertices(&grid, 2, ExtremumMode::Low, &set);
        assert_eq!(level.source_ids, Some(vec![cold as u32]));
    }
}
