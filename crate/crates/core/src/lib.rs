//! Particle-grid temperature field for a single room.
//!
//! Sparse sensor readings are spread over a regular lattice of particles
//! (Delaunay barycentric interpolation inside the sensor hull, nearest
//! sensor outside it), reduced to distance-dependent levels of detail, and
//! streamed over a small acknowledged binary protocol.

pub mod field;
pub mod ingest;
pub mod lod;
pub mod protocol;
pub mod segmentation;

pub use field::{particle_count, ParticleGrid, Point, Readings, Room, Sensor, SensorId, SensorSet};
