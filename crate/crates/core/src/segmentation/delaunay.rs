//! Incremental Bowyer-Watson Delaunay tetrahedralization of the sensor set.
//!
//! Points are inserted in ascending sensor-id order into an enclosing
//! super-tetrahedron. Orientation and in-sphere decisions use adaptive exact
//! predicates, so the cavity of every insertion is exactly the set of
//! tetrahedra whose circumsphere strictly contains the new point. That
//! cavity is star-shaped from the new point, which keeps every re-fanned
//! tetrahedron positively oriented even for cospherical input such as
//! sensors laid out on a regular grid.

use std::collections::HashMap;

use robust::{insphere, orient3d, Coord3D};

use super::tetra::Tetrahedron;
use super::SegmentationError;
use crate::field::{Point, SensorSet};

/// Relative tolerance of the empty-circumsphere property, in units of the
/// room diagonal.
pub const EPS_DELAUNAY_REL: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct TetraMesh {
    tetrahedra: Vec<Tetrahedron>,
    source: SensorSet,
    slivers_dropped: usize,
}

impl TetraMesh {
    /// Tetrahedra sorted by their (ascending) vertex ids.
    pub fn tetrahedra(&self) -> &[Tetrahedron] {
        &self.tetrahedra
    }

    pub fn source(&self) -> &SensorSet {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.tetrahedra.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tetrahedra.is_empty()
    }

    /// Exact-arithmetic tetrahedra too flat to carry stable barycentric
    /// weights; their particles fall through to neighbors or to the
    /// nearest-sensor rule.
    pub fn slivers_dropped(&self) -> usize {
        self.slivers_dropped
    }
}

#[inline]
fn coord(p: &[f64; 3]) -> Coord3D<f64> {
    Coord3D {
        x: p[0],
        y: p[1],
        z: p[2],
    }
}

#[inline]
fn orient(pts: &[[f64; 3]], t: &[usize; 4]) -> f64 {
    orient3d(
        coord(&pts[t[0]]),
        coord(&pts[t[1]]),
        coord(&pts[t[2]]),
        coord(&pts[t[3]]),
    )
}

#[inline]
fn in_circumsphere(pts: &[[f64; 3]], t: &[usize; 4], p: usize) -> bool {
    insphere(
        coord(&pts[t[0]]),
        coord(&pts[t[1]]),
        coord(&pts[t[2]]),
        coord(&pts[t[3]]),
        coord(&pts[p]),
    ) > 0.0
}

#[allow(clippy::needless_range_loop)]
pub fn tetrahedralize(sensors: &SensorSet) -> Result<TetraMesh, SegmentationError> {
    let sorted = sensors.sorted_by_id();
    let n = sorted.len();
    if n < 4 {
        return Err(SegmentationError::Degenerate(format!(
            "{n} sensors, at least 4 non-coplanar sensors are needed"
        )));
    }
    let mut pts: Vec<[f64; 3]> = sorted.iter().map(|s| [s.x, s.y, s.layer_height]).collect();

    // A set is coplanar iff every quadruple through its first two points is.
    let spans_volume = (2..n)
        .any(|k| (k + 1..n).any(|l| orient3d(coord(&pts[0]), coord(&pts[1]), coord(&pts[k]), coord(&pts[l])) != 0.0));
    if !spans_volume {
        return Err(SegmentationError::Degenerate("all sensors are coplanar".into()));
    }

    let mut lo = pts[0];
    let mut hi = pts[0];
    for p in &pts {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let center = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0, (lo[2] + hi[2]) / 2.0];
    let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
    let s = 1e5 * (extent + 1.0);
    pts.push([center[0] - s, center[1] - s, center[2] - s]);
    pts.push([center[0] + 3.0 * s, center[1] - s, center[2] - s]);
    pts.push([center[0] - s, center[1] + 3.0 * s, center[2] - s]);
    pts.push([center[0] - s, center[1] - s, center[2] + 3.0 * s]);

    let mut root = [n, n + 1, n + 2, n + 3];
    if orient(&pts, &root) < 0.0 {
        root.swap(0, 1);
    }
    let mut tets: Vec<[usize; 4]> = vec![root];

    for p in 0..n {
        let (cavity, keep): (Vec<[usize; 4]>, Vec<[usize; 4]>) = tets.iter().partition(|t| in_circumsphere(&pts, t, p));
        // Faces seen once are the cavity boundary.
        let mut faces: HashMap<[usize; 3], (u32, [usize; 3])> = HashMap::new();
        for t in &cavity {
            for skip in 0..4 {
                let face: Vec<usize> = (0..4).filter(|&i| i != skip).map(|i| t[i]).collect();
                let face = [face[0], face[1], face[2]];
                let mut key = face;
                key.sort_unstable();
                faces.entry(key).or_insert((0, face)).0 += 1;
            }
        }
        tets = keep;
        for (count, face) in faces.into_values() {
            if count != 1 {
                continue;
            }
            let mut t = [face[0], face[1], face[2], p];
            let o = orient(&pts, &t);
            if o == 0.0 {
                return Err(SegmentationError::Degenerate(format!(
                    "flat cavity face while inserting sensor {}",
                    sorted[p].id
                )));
            }
            if o < 0.0 {
                t.swap(0, 1);
            }
            tets.push(t);
        }
    }

    let mut tetrahedra = Vec::new();
    let mut slivers_dropped = 0;
    for t in tets.into_iter().filter(|t| t.iter().all(|&v| v < n)) {
        let mut v = t;
        v.sort_unstable();
        let ids = v.map(|i| sorted[i].id);
        let vertices = v.map(|i| Point::new(pts[i][0], pts[i][1], pts[i][2]));
        match Tetrahedron::new(ids, vertices) {
            Ok(tet) => tetrahedra.push(tet),
            Err(_) => slivers_dropped += 1,
        }
    }
    tetrahedra.sort_by_key(|t| t.vertex_ids);

    Ok(TetraMesh {
        tetrahedra,
        source: sensors.clone(),
        slivers_dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Room, Sensor, SensorId};

    fn set(points: &[[f64; 3]]) -> SensorSet {
        let mut layers: Vec<f64> = points.iter().map(|p| p[2]).collect();
        layers.sort_by(f64::total_cmp);
        layers.dedup();
        let sensors = points
            .iter()
            .enumerate()
            .map(|(i, p)| Sensor {
                id: SensorId(i as u16),
                x: p[0],
                y: p[1],
                layer_height: p[2],
                value: 20.0,
            })
            .collect();
        SensorSet::new(&Room::new(10.0, 10.0, 10.0).unwrap(), layers, sensors).unwrap()
    }

    #[test]
    fn robust_orientation_convention() {
        let t = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        // Opposite sign to det[b - a, c - a, d - a].
        assert!(orient(&t, &[0, 1, 2, 3]) < 0.0);
    }

    #[test]
    fn simplex_gives_one_tetrahedron() {
        let mesh = tetrahedralize(&set(&[
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ]))
        .unwrap();
        assert_eq!(mesh.len(), 1);
    }

    #[test]
    fn too_few_or_flat_sensors_are_degenerate() {
        let three = set(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        assert!(matches!(tetrahedralize(&three), Err(SegmentationError::Degenerate(_))));
        let flat = set(&[
            [0.0, 0.0, 1.0],
            [1.0, 0.0, 1.0],
            [0.0, 1.0, 1.0],
            [1.0, 1.0, 1.0],
            [0.5, 0.3, 1.0],
        ]);
        assert!(matches!(tetrahedralize(&flat), Err(SegmentationError::Degenerate(_))));
    }

    #[test]
    fn every_sensor_is_a_vertex() {
        let pts: Vec<[f64; 3]> = (0..20)
            .map(|i| {
                let f = i as f64;
                [(f * 1.37) % 5.0, (f * 2.11) % 4.0, (i % 3) as f64]
            })
            .collect();
        let mesh = tetrahedralize(&set(&pts)).unwrap();
        for i in 0..pts.len() {
            assert!(
                mesh.tetrahedra()
                    .iter()
                    .any(|t| t.vertex_ids.contains(&SensorId(i as u16))),
                "sensor {i} missing"
            );
        }
    }
}
