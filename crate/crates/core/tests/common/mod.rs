#![allow(dead_code)]

use std::fs::File;

use rand::Rng;
use thermocloud_core::field::DEFAULT_NEUTRAL_TEMPERATURE;
use thermocloud_core::{ParticleGrid, Readings, Room, Sensor, SensorId, SensorSet};

pub const LAYERS: [f64; 3] = [0.0, 1.0, 2.0];

pub fn room() -> Room {
    Room::new(4.0, 3.0, 2.5).unwrap()
}

pub fn grid() -> ParticleGrid {
    ParticleGrid::new(room(), [40, 30, 25], DEFAULT_NEUTRAL_TEMPERATURE).unwrap()
}

/// The 35-sensor layout shipped in `config/sensors.csv`.
pub fn sensors() -> SensorSet {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../config/sensors.csv");
    SensorSet::from_layout_csv(
        File::open(path).unwrap(),
        &room(),
        LAYERS.to_vec(),
        DEFAULT_NEUTRAL_TEMPERATURE,
    )
    .unwrap()
}

/// `m` sensors at random footprint positions on random layers.
pub fn random_sensors(rng: &mut impl Rng, m: usize) -> SensorSet {
    let list = (0..m)
        .map(|i| Sensor {
            id: SensorId(i as u16),
            x: rng.gen_range(0.0..4.0),
            y: rng.gen_range(0.0..3.0),
            layer_height: LAYERS[rng.gen_range(0..3)],
            value: DEFAULT_NEUTRAL_TEMPERATURE,
        })
        .collect();
    SensorSet::new(&room(), LAYERS.to_vec(), list).unwrap()
}

pub fn random_readings(rng: &mut impl Rng, sensors: &SensorSet) -> Readings {
    sensors
        .sensors()
        .iter()
        .map(|s| (s.id, rng.gen_range(10.0..35.0)))
        .collect()
}
