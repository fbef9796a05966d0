//! Tetrahedron geometry: signed volumes, circumspheres, point location and
//! barycentric weights.

use nalgebra::{Matrix3, Vector3};

use super::SegmentationError;
use crate::field::{Point, SensorId};

/// Boundary tolerance for point location, in units of the tetrahedron's own
/// volume (a barycentric weight may dip this far below zero).
pub const EPS_BARYCENTRIC: f64 = 1e-9;

/// Six times the signed volume of `(a, b, c, d)`: `det[b - a, c - a, d - a]`.
#[inline]
pub fn signed_volume6(a: &Point, b: &Point, c: &Point, d: &Point) -> f64 {
    let ab = b - a;
    let ac = c - a;
    let ad = d - a;
    ab.dot(&ac.cross(&ad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tetrahedron {
    pub vertex_ids: [SensorId; 4],
    pub vertices: [Point; 4],
    pub circumcenter: Point,
    pub circumradius: f64,
    volume6: f64,
}

impl Tetrahedron {
    pub fn new(vertex_ids: [SensorId; 4], vertices: [Point; 4]) -> Result<Self, SegmentationError> {
        let [a, b, c, d] = &vertices;
        let volume6 = signed_volume6(a, b, c, d);
        let longest = [(a, b), (a, c), (a, d), (b, c), (b, d), (c, d)]
            .iter()
            .map(|(p, q)| (*p - *q).norm())
            .fold(0.0_f64, f64::max);
        if !volume6.is_finite() || volume6.abs() <= 1e-12 * longest.powi(3) {
            return Err(SegmentationError::DegenerateTetrahedron(vertex_ids));
        }
        let rows = Matrix3::from_rows(&[(b - a).transpose(), (c - a).transpose(), (d - a).transpose()]);
        let rhs = Vector3::new(
            (b - a).norm_squared() / 2.0,
            (c - a).norm_squared() / 2.0,
            (d - a).norm_squared() / 2.0,
        );
        let offset = rows
            .lu()
            .solve(&rhs)
            .ok_or(SegmentationError::DegenerateTetrahedron(vertex_ids))?;
        Ok(Tetrahedron {
            vertex_ids,
            vertices,
            circumcenter: a + offset,
            circumradius: offset.norm(),
            volume6,
        })
    }

    /// Six times the signed volume.
    pub fn volume6(&self) -> f64 {
        self.volume6
    }

    /// Barycentric coordinates of `p`, unchecked. Weight `i` is the volume
    /// of the tetrahedron with vertex `i` replaced by `p`, over the full
    /// volume.
    #[inline]
    pub fn raw_weights(&self, p: &Point) -> [f64; 4] {
        let [a, b, c, d] = &self.vertices;
        let inv = 1.0 / self.volume6;
        let w1 = signed_volume6(a, p, c, d) * inv;
        let w2 = signed_volume6(a, b, p, d) * inv;
        let w3 = signed_volume6(a, b, c, p) * inv;
        let w0 = signed_volume6(p, b, c, d) * inv;
        [w0, w1, w2, w3]
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices[1..] {
            for a in 0..3 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        (lo, hi)
    }

    /// Inside-or-on test: all four orientation ratios at least `-EPS_BARYCENTRIC`.
    #[inline]
    pub fn contains(&self, p: &Point) -> bool {
        self.raw_weights(p).iter().all(|&w| w >= -EPS_BARYCENTRIC)
    }
}

pub fn point_in_tetrahedron(p: &Point, tet: &Tetrahedron) -> bool {
    tet.contains(p)
}

/// Barycentric weights of a point inside (or on) `tet`; they sum to one.
pub fn barycentric_weights(p: &Point, tet: &Tetrahedron) -> Result<[f64; 4], SegmentationError> {
    let w = tet.raw_weights(p);
    if w.iter().any(|&x| x < -EPS_BARYCENTRIC) {
        return Err(SegmentationError::OutsideTetrahedron {
            point: [p.x, p.y, p.z],
            tetrahedron: tet.vertex_ids,
        });
    }
    Ok(w)
}
