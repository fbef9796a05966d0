//! Room geometry, the regular particle lattice and the sensor set.
//!
//! Particles are addressed by a flat index `p` that maps row-major onto
//! lattice coordinates `(i, j, k)` with `k` outermost and `i` innermost:
//!
//! ```text
//! p = (k * ny + j) * nx + i
//! ```
//!
//! Lattice coordinate `(i, j, k)` sits at `(i * dx, j * dy, k * dz)` where
//! `dx = l / (nx - 1)` and so on, so the outermost particles lie on the
//! room walls.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Read;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Point = Point3<f64>;

/// Default temperature carried by every particle before the first reading.
pub const DEFAULT_NEUTRAL_TEMPERATURE: f64 = 20.0;

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("sensor layout line {line}: {message}")]
    Layout { line: u64, message: String },
}

/// Axis-aligned box with one corner at the origin. Units are meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

impl Room {
    pub fn new(length: f64, width: f64, height: f64) -> Result<Self, FieldError> {
        for (name, v) in [("length", length), ("width", width), ("height", height)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(FieldError::InvalidArgument(format!(
                    "room {name} must be positive, got {v}"
                )));
            }
        }
        Ok(Room { length, width, height })
    }

    pub fn center(&self) -> Point {
        Point::new(self.length / 2.0, self.width / 2.0, self.height / 2.0)
    }

    pub fn diagonal(&self) -> f64 {
        (self.length.powi(2) + self.width.powi(2) + self.height.powi(2)).sqrt()
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0.0..=self.length).contains(&p.x) && (0.0..=self.width).contains(&p.y) && (0.0..=self.height).contains(&p.z)
    }
}

/// Particle count from the nominal spacing `delta`:
/// `floor((l + 1) * (h + 1) * (w + 1) / delta^3)`.
///
/// This is a sizing estimate only. Grids are built from explicit integer
/// dimensions (see [`ParticleGrid::new`]); the canonical 40x30x25 lattice of
/// a 4x3x2.5 m room has 30000 particles, which this formula does not give
/// for any round spacing.
pub fn particle_count(room: &Room, delta: f64) -> Result<u64, FieldError> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(FieldError::InvalidArgument(format!(
            "particle spacing must be positive, got {delta}"
        )));
    }
    let volume = (room.length + 1.0) * (room.height + 1.0) * (room.width + 1.0);
    Ok((volume / delta.powi(3)).floor() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SensorId(pub u16);

impl fmt::Display for SensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sensor {
    pub id: SensorId,
    pub x: f64,
    pub y: f64,
    /// Height of the layer the sensor sits on, in meters.
    pub layer_height: f64,
    /// Last known reading in degrees Celsius.
    pub value: f64,
}

impl Sensor {
    pub fn position(&self) -> Point {
        Point::new(self.x, self.y, self.layer_height)
    }
}

/// Sensors placed on horizontal layers inside a room.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSet {
    sensors: Vec<Sensor>,
    layers: Vec<f64>,
}

impl SensorSet {
    /// Validates ids, positions and layer membership against `room`.
    pub fn new(room: &Room, layers: Vec<f64>, sensors: Vec<Sensor>) -> Result<Self, FieldError> {
        let mut ids = HashSet::new();
        let mut positions = HashSet::new();
        for s in &sensors {
            if !ids.insert(s.id) {
                return Err(FieldError::InvalidArgument(format!("duplicate sensor id {}", s.id)));
            }
            if !(0.0..=room.length).contains(&s.x) || !(0.0..=room.width).contains(&s.y) {
                return Err(FieldError::InvalidArgument(format!(
                    "sensor {} at ({}, {}) lies outside the room footprint",
                    s.id, s.x, s.y
                )));
            }
            if !layers.contains(&s.layer_height) {
                return Err(FieldError::InvalidArgument(format!(
                    "sensor {} layer {} is not one of the configured layers {:?}",
                    s.id, s.layer_height, layers
                )));
            }
            if !(0.0..=room.height).contains(&s.layer_height) {
                return Err(FieldError::InvalidArgument(format!(
                    "sensor {} layer {} is outside the room height",
                    s.id, s.layer_height
                )));
            }
            let key = (s.x.to_bits(), s.y.to_bits(), s.layer_height.to_bits());
            if !positions.insert(key) {
                return Err(FieldError::InvalidArgument(format!(
                    "sensor {} shares its position with another sensor",
                    s.id
                )));
            }
        }
        Ok(SensorSet { sensors, layers })
    }

    /// Parses a layout CSV with header `id,x,y,layer`. Readings start at
    /// `neutral`.
    pub fn from_layout_csv<R: Read>(
        reader: R,
        room: &Room,
        layers: Vec<f64>,
        neutral: f64,
    ) -> Result<Self, FieldError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| FieldError::Layout {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let expected = ["id", "x", "y", "layer"];
        if headers.len() != 4 || headers.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(FieldError::Layout {
                line: 1,
                message: format!(
                    "expected header `id,x,y,layer`, got `{}`",
                    headers.iter().collect::<Vec<_>>().join(",")
                ),
            });
        }
        let mut sensors = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| FieldError::Layout {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let field = |idx: usize| -> Result<&str, FieldError> {
                record.get(idx).ok_or_else(|| FieldError::Layout {
                    line,
                    message: "missing column".into(),
                })
            };
            let bad = |what: &str, raw: &str| FieldError::Layout {
                line,
                message: format!("cannot parse {what} from `{raw}`"),
            };
            let id: u16 = field(0)?.parse().map_err(|_| bad("id", field(0).unwrap_or("")))?;
            let mut coords = [0.0; 3];
            for (slot, (col, name)) in coords.iter_mut().zip([(1, "x"), (2, "y"), (3, "layer")]) {
                let raw = field(col)?;
                *slot = raw.parse::<f64>().map_err(|_| bad(name, raw))?;
            }
            sensors.push(Sensor {
                id: SensorId(id),
                x: coords[0],
                y: coords[1],
                layer_height: coords[2],
                value: neutral,
            });
        }
        SensorSet::new(room, layers, sensors)
    }

    pub fn sensors(&self) -> &[Sensor] {
        &self.sensors
    }

    pub fn layers(&self) -> &[f64] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    pub fn get(&self, id: SensorId) -> Option<&Sensor> {
        self.sensors.iter().find(|s| s.id == id)
    }

    pub fn contains(&self, id: SensorId) -> bool {
        self.get(id).is_some()
    }

    /// Largest sensor id plus one, the length of a dense id-indexed table.
    pub fn id_span(&self) -> usize {
        self.sensors.iter().map(|s| s.id.0 as usize + 1).max().unwrap_or(0)
    }

    /// Copy of the set sorted by ascending id.
    pub fn sorted_by_id(&self) -> Vec<Sensor> {
        let mut v = self.sensors.clone();
        v.sort_by_key(|s| s.id);
        v
    }
}

/// Latest reading per sensor, degrees Celsius.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Readings(BTreeMap<SensorId, f64>);

impl Readings {
    pub fn new() -> Self {
        Readings(BTreeMap::new())
    }

    /// Every sensor at its stored `value`.
    pub fn from_sensors(sensors: &SensorSet) -> Self {
        sensors.sensors().iter().map(|s| (s.id, s.value)).collect()
    }

    pub fn uniform(sensors: &SensorSet, value: f64) -> Self {
        sensors.sensors().iter().map(|s| (s.id, value)).collect()
    }

    pub fn get(&self, id: SensorId) -> Option<f64> {
        self.0.get(&id).copied()
    }

    pub fn insert(&mut self, id: SensorId, value: f64) -> Option<f64> {
        self.0.insert(id, value)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (SensorId, f64)> + '_ {
        self.0.iter().map(|(&id, &v)| (id, v))
    }

    /// Overwrites entries present in `other`, keeps the rest.
    pub fn merge(&mut self, other: &Readings) {
        self.0.extend(other.iter());
    }

    /// Dense table indexed by raw sensor id.
    pub fn dense(&self) -> Vec<Option<f64>> {
        let span = self.0.keys().next_back().map_or(0, |id| id.0 as usize + 1);
        let mut table = vec![None; span];
        for (id, v) in self.iter() {
            table[id.0 as usize] = Some(v);
        }
        table
    }
}

impl FromIterator<(SensorId, f64)> for Readings {
    fn from_iter<T: IntoIterator<Item = (SensorId, f64)>>(iter: T) -> Self {
        Readings(iter.into_iter().collect())
    }
}

/// Regular lattice of particles filling a room, each carrying one scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleGrid {
    room: Room,
    dims: [usize; 3],
    spacing: [f64; 3],
    values: Vec<f64>,
}

impl ParticleGrid {
    /// Builds an `nx * ny * nz` lattice spanning `room`, every value set to
    /// `neutral`.
    pub fn new(room: Room, dims: [usize; 3], neutral: f64) -> Result<Self, FieldError> {
        if dims.iter().any(|&d| d < 2) {
            return Err(FieldError::InvalidArgument(format!(
                "grid needs at least 2 particles per axis, got {dims:?}"
            )));
        }
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= u32::MAX as usize)
            .ok_or_else(|| FieldError::InvalidArgument(format!("grid {dims:?} is too large")))?;
        let spacing = [
            room.length / (dims[0] - 1) as f64,
            room.width / (dims[1] - 1) as f64,
            room.height / (dims[2] - 1) as f64,
        ];
        Ok(ParticleGrid {
            room,
            dims,
            spacing,
            values: vec![neutral; n],
        })
    }

    pub fn room(&self) -> &Room {
        &self.room
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Per-axis spacing in meters.
    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    /// Geometric mean of the per-axis spacings.
    pub fn nominal_spacing(&self) -> f64 {
        (self.spacing[0] * self.spacing[1] * self.spacing[2]).cbrt()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    #[inline]
    pub fn coords(&self, p: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [p % nx, (p / nx) % ny, p / (nx * ny)]
    }

    #[inline]
    pub fn lattice_position(&self, i: usize, j: usize, k: usize) -> Point {
        // Clamp the last lattice line onto the wall exactly.
        let axis = |idx: usize, n: usize, step: f64, extent: f64| {
            if idx + 1 == n {
                extent
            } else {
                idx as f64 * step
            }
        };
        Point::new(
            axis(i, self.dims[0], self.spacing[0], self.room.length),
            axis(j, self.dims[1], self.spacing[1], self.room.width),
            axis(k, self.dims[2], self.spacing[2], self.room.height),
        )
    }

    #[inline]
    pub fn position(&self, p: usize) -> Point {
        let [i, j, k] = self.coords(p);
        self.lattice_position(i, j, k)
    }

    /// All particle positions in index order.
    pub fn positions(&self) -> Vec<Point> {
        (0..self.len()).map(|p| self.position(p)).collect()
    }

    /// Particles within Chebyshev lattice distance `depth` of `particle`,
    /// excluding the particle itself, clipped at the grid boundary.
    pub fn neighbors(&self, particle: usize, depth: usize) -> Result<Vec<usize>, FieldError> {
        if particle >= self.len() {
            return Err(FieldError::InvalidArgument(format!(
                "particle {particle} out of range for {} particles",
                self.len()
            )));
        }
        if depth == 0 {
            return Err(FieldError::InvalidArgument("neighbor depth must be at least 1".into()));
        }
        let mut out = Vec::with_capacity((2 * depth + 1).pow(3) - 1);
        self.for_each_neighbor(particle, depth, |q| {
            out.push(q);
            true
        });
        Ok(out)
    }

    /// Visits the Chebyshev neighborhood of `particle` in index order until
    /// `visit` returns false. Returns false if the walk was cut short.
    pub(crate) fn for_each_neighbor(
        &self,
        particle: usize,
        depth: usize,
        mut visit: impl FnMut(usize) -> bool,
    ) -> bool {
        let c = self.coords(particle);
        let lo = |a: usize| c[a].saturating_sub(depth);
        let hi = |a: usize| (c[a] + depth).min(self.dims[a] - 1);
        for k in lo(2)..=hi(2) {
            for j in lo(1)..=hi(1) {
                let row = self.index(0, j, k);
                for i in lo(0)..=hi(0) {
                    let q = row + i;
                    if q != particle && !visit(q) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Index of the lattice point closest to `p` (clamped into the grid).
    pub fn nearest_particle(&self, p: &Point) -> usize {
        let snap = |v: f64, step: f64, n: usize| -> usize {
            let r = (v / step).round();
            if r <= 0.0 {
                0
            } else {
                (r as usize).min(n - 1)
            }
        };
        self.index(
            snap(p.x, self.spacing[0], self.dims[0]),
            snap(p.y, self.spacing[1], self.dims[1]),
            snap(p.z, self.spacing[2], self.dims[2]),
        )
    }

    /// Inclusive index range along `axis` of lattice lines whose coordinate
    /// lies in `[lo, hi]`, or `None` when the interval misses the grid.
    pub(crate) fn axis_range(&self, axis: usize, lo: f64, hi: f64) -> Option<(usize, usize)> {
        let step = self.spacing[axis];
        let n = self.dims[axis];
        let first = (lo / step).ceil().max(0.0);
        let last = (hi / step).floor().min((n - 1) as f64);
        if first > last {
            None
        } else {
            Some((first as usize, last as usize))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical_room() -> Room {
        Room::new(4.0, 3.0, 2.5).unwrap()
    }

    #[test]
    fn particle_count_evaluates_sizing_formula() {
        let unit = Room::new(1.0, 1.0, 1.0).unwrap();
        assert_eq!(particle_count(&unit, 1.0).unwrap(), 8);
        assert_eq!(particle_count(&canonical_room(), 1.0).unwrap(), 70);
        assert_eq!(particle_count(&canonical_room(), 0.5).unwrap(), 560);
    }

    #[test]
    fn particle_count_rejects_bad_spacing() {
        for d in [0.0, -1.0, f64::NAN] {
            assert!(matches!(
                particle_count(&canonical_room(), d),
                Err(FieldError::InvalidArgument(_))
            ));
        }
    }

    #[test]
    fn room_rejects_non_positive_sides() {
        assert!(Room::new(0.0, 1.0, 1.0).is_err());
        assert!(Room::new(1.0, -3.0, 1.0).is_err());
    }

    /// Every proportional (nx, ny, nz) with product 30000 for the 4x3x2.5
    /// room, by enumeration.
    #[test]
    fn canonical_dims_are_the_unique_proportional_factorization() {
        let mut found = Vec::new();
        for nx in 1..=30000usize {
            if 30000 % nx != 0 {
                continue;
            }
            for ny in 1..=30000 / nx {
                if (30000 / nx) % ny != 0 {
                    continue;
                }
                let nz = 30000 / nx / ny;
                // proportional to 4 : 3 : 2.5 means nx/4 == ny/3 == nz/2.5
                if nx * 3 == ny * 4 && nx * 5 == nz * 8 {
                    found.push((nx, ny, nz));
                }
            }
        }
        assert_eq!(found, vec![(40, 30, 25)]);
    }

    #[test]
    fn build_grid_counts() {
        let g = ParticleGrid::new(canonical_room(), [40, 30, 25], 20.0).unwrap();
        assert_eq!(g.len(), 30000);
        assert_eq!(g.dims(), [40, 30, 25]);
        let dense = ParticleGrid::new(canonical_room(), [80, 60, 25], 20.0).unwrap();
        assert_eq!(dense.len(), 120000);
        assert!(g.values().iter().all(|&v| v == 20.0));
    }

    #[test]
    fn unit_grid_corners_sit_on_box_corners() {
        let g = ParticleGrid::new(Room::new(1.0, 1.0, 1.0).unwrap(), [2, 2, 2], 0.0).unwrap();
        assert_eq!(g.len(), 8);
        for p in 0..8 {
            let pos = g.position(p);
            for c in [pos.x, pos.y, pos.z] {
                assert!(c == 0.0 || c == 1.0);
            }
        }
        assert_eq!(g.position(7), Point::new(1.0, 1.0, 1.0));
        assert_eq!(g.position(1), Point::new(1.0, 0.0, 0.0));
        assert_eq!(g.position(2), Point::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn build_grid_rejects_thin_axes() {
        assert!(ParticleGrid::new(canonical_room(), [1, 30, 25], 20.0).is_err());
        assert!(ParticleGrid::new(canonical_room(), [40, 30, 0], 20.0).is_err());
    }

    #[test]
    fn index_and_coords_are_inverse() {
        let g = ParticleGrid::new(canonical_room(), [40, 30, 25], 20.0).unwrap();
        for p in (0..g.len()).step_by(7) {
            let [i, j, k] = g.coords(p);
            assert_eq!(g.index(i, j, k), p);
        }
        assert_eq!(g.coords(1), [1, 0, 0]);
        assert_eq!(g.coords(40), [0, 1, 0]);
        assert_eq!(g.coords(1200), [0, 0, 1]);
    }

    #[test]
    fn neighbor_counts() {
        let g = ParticleGrid::new(canonical_room(), [40, 30, 25], 20.0).unwrap();
        let interior = g.index(20, 15, 12);
        assert_eq!(g.neighbors(interior, 1).unwrap().len(), 26);
        assert_eq!(g.neighbors(interior, 2).unwrap().len(), 124);
        assert_eq!(g.neighbors(0, 1).unwrap().len(), 7);
        assert!(g.neighbors(30000, 1).is_err());
        assert!(g.neighbors(0, 0).is_err());
    }

    #[test]
    fn nearest_particle_snaps_to_lattice() {
        let g = ParticleGrid::new(canonical_room(), [41, 31, 26], 20.0).unwrap();
        assert_eq!(g.nearest_particle(&Point::new(0.0, 0.0, 0.0)), 0);
        assert_eq!(g.coords(g.nearest_particle(&Point::new(1.04, 2.96, 0.51))), [10, 30, 5]);
        assert_eq!(g.coords(g.nearest_particle(&Point::new(9.0, -1.0, 9.0))), [40, 0, 25]);
    }

    #[test]
    fn layout_csv_parses_and_validates() {
        let room = canonical_room();
        let csv = "id,x,y,layer\n1,0.5,0.5,0\n2,3.5,2.5,1\n";
        let set = SensorSet::from_layout_csv(csv.as_bytes(), &room, vec![0.0, 1.0, 2.0], 20.0).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.get(SensorId(2)).unwrap().position(), Point::new(3.5, 2.5, 1.0));

        let bad_layer = "id,x,y,layer\n1,0.5,0.5,1.5\n";
        assert!(SensorSet::from_layout_csv(bad_layer.as_bytes(), &room, vec![0.0, 1.0], 20.0).is_err());
        let dup = "id,x,y,layer\n1,0.5,0.5,0\n1,1,1,0\n";
        assert!(SensorSet::from_layout_csv(dup.as_bytes(), &room, vec![0.0], 20.0).is_err());
        let same_spot = "id,x,y,layer\n1,0.5,0.5,0\n2,0.5,0.5,0\n";
        assert!(SensorSet::from_layout_csv(same_spot.as_bytes(), &room, vec![0.0], 20.0).is_err());
        let garbage = "id,x,y,layer\n1,0.5,zz,0\n";
        match SensorSet::from_layout_csv(garbage.as_bytes(), &room, vec![0.0], 20.0) {
            Err(FieldError::Layout { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let wrong_header = "sensor,x,y,z\n";
        assert!(SensorSet::from_layout_csv(wrong_header.as_bytes(), &room, vec![0.0], 20.0).is_err());
    }
}
