//! Client-side reconstruction of the streamed field.

use std::collections::BTreeMap;

use thiserror::Error;

use super::frame::{Frame, FrameType, Header, Mode, ParticlesPayload, SensorsPayload};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MirrorError {
    #[error("{got} received while expecting {expected}")]
    OutOfOrder { expected: FrameType, got: FrameType },
    #[error("delta for {kind} id {id} that no full cycle delivered")]
    UnknownId { kind: &'static str, id: u32 },
    #[error("header announced {expected} {kind}, mirror holds {actual}")]
    CountMismatch {
        kind: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("footer tick {footer} does not match header tick {header}")]
    TickMismatch { header: u64, footer: u64 },
    #[error("checksum mismatch at tick {tick}: footer {expected:08x}, computed {actual:08x}")]
    Checksum { tick: u64, expected: u32, actual: u32 },
}

/// Mirrored point: position from the last full cycle, latest value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MirrorPoint {
    pub position: [f32; 3],
    pub value: f32,
}

/// Summary of one completed cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CycleReport {
    pub tick: u64,
    pub mode: Mode,
    pub band: u8,
    pub sensor_count: u16,
    pub particle_count: u32,
    pub sensor_records: usize,
    pub particle_records: usize,
    pub header_bytes: usize,
    pub sensors_bytes: usize,
    pub particles_bytes: usize,
    pub footer_bytes: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Mirror {
    header: Option<Header>,
    last_complete: Option<Header>,
    sensors: BTreeMap<u16, MirrorPoint>,
    particles: BTreeMap<u32, MirrorPoint>,
    next: Option<FrameType>,
    crc: crc32fast::Hasher,
    partial: CyclePartial,
    full_cycles: u64,
    cycles: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct CyclePartial {
    header_bytes: usize,
    sensors_bytes: usize,
    particles_bytes: usize,
    sensor_records: usize,
    particle_records: usize,
}

impl Mirror {
    pub fn new() -> Self {
        Mirror::default()
    }

    /// Header of the last completed cycle.
    pub fn header(&self) -> Option<&Header> {
        self.last_complete.as_ref()
    }

    pub fn sensors(&self) -> &BTreeMap<u16, MirrorPoint> {
        &self.sensors
    }

    /// Particles ordered by wire id.
    pub fn particles(&self) -> &BTreeMap<u32, MirrorPoint> {
        &self.particles
    }

    pub fn particles_mut(&mut self) -> &mut BTreeMap<u32, MirrorPoint> {
        &mut self.particles
    }

    pub fn full_cycles(&self) -> u64 {
        self.full_cycles
    }

    pub fn cycles(&self) -> u64 {
        self.cycles
    }

    /// True once a full cycle has completed.
    pub fn is_complete(&self) -> bool {
        self.full_cycles > 0
    }

    /// True between a HEADER and its FOOTER.
    pub fn in_cycle(&self) -> bool {
        self.next.is_some()
    }

    /// Applies a server frame. `wire_len` is the frame's encoded size and
    /// `payload` its raw payload bytes (needed for the footer checksum).
    /// Returns the cycle summary when a FOOTER closes the cycle.
    pub fn apply(
        &mut self,
        frame: &Frame,
        wire_len: usize,
        payload: &[u8],
    ) -> Result<Option<CycleReport>, MirrorError> {
        let got = frame.frame_type();
        let expected = self.next.unwrap_or(FrameType::Header);
        if got != expected {
            self.next = None;
            return Err(MirrorError::OutOfOrder { expected, got });
        }
        match frame {
            Frame::Header(h) => {
                self.header = Some(*h);
                self.crc = crc32fast::Hasher::new();
                self.partial = CyclePartial {
                    header_bytes: wire_len,
                    ..CyclePartial::default()
                };
                self.next = Some(FrameType::Sensors);
            }
            Frame::Sensors(payload_records) => {
                self.crc.update(payload);
                self.partial.sensors_bytes = wire_len;
                let header = self.header.expect("header precedes sensors");
                match payload_records {
                    SensorsPayload::Full(records) => {
                        self.partial.sensor_records = records.len();
                        self.sensors = records
                            .iter()
                            .map(|r| {
                                (
                                    r.id,
                                    MirrorPoint {
                                        position: r.position,
                                        value: r.value,
                                    },
                                )
                            })
                            .collect();
                    }
                    SensorsPayload::Delta(records) => {
                        self.partial.sensor_records = records.len();
                        for r in records {
                            let slot = self.sensors.get_mut(&r.id).ok_or(MirrorError::UnknownId {
                                kind: "sensor",
                                id: r.id as u32,
                            })?;
                            slot.value = r.value;
                        }
                    }
                }
                check_count("sensors", header.sensor_count as usize, self.sensors.len())?;
                self.next = Some(FrameType::Particles);
            }
            Frame::Particles(payload_records) => {
                self.crc.update(payload);
                self.partial.particles_bytes = wire_len;
                let header = self.header.expect("header precedes particles");
                match payload_records {
                    ParticlesPayload::Full(records) => {
                        self.partial.particle_records = records.len();
                        self.particles = records
                            .iter()
                            .map(|r| {
                                (
                                    r.id,
                                    MirrorPoint {
                                        position: r.position,
                                        value: r.value,
                                    },
                                )
                            })
                            .collect();
                    }
                    ParticlesPayload::Delta(records) => {
                        self.partial.particle_records = records.len();
                        for r in records {
                            let slot = self.particles.get_mut(&r.id).ok_or(MirrorError::UnknownId {
                                kind: "particle",
                                id: r.id,
                            })?;
                            slot.value = r.value;
                        }
                    }
                }
                check_count("particles", header.particle_count as usize, self.particles.len())?;
                self.next = Some(FrameType::Footer);
            }
            Frame::Footer(f) => {
                self.next = None;
                let header = self.header.expect("header precedes footer");
                if f.tick != header.tick {
                    return Err(MirrorError::TickMismatch {
                        header: header.tick,
                        footer: f.tick,
                    });
                }
                let actual = std::mem::take(&mut self.crc).finalize();
                if actual != f.crc32 {
                    return Err(MirrorError::Checksum {
                        tick: f.tick,
                        expected: f.crc32,
                        actual,
                    });
                }
                self.cycles += 1;
                if header.mode == Mode::Full {
                    self.full_cycles += 1;
                }
                self.last_complete = Some(header);
                let p = self.partial;
                return Ok(Some(CycleReport {
                    tick: header.tick,
                    mode: header.mode,
                    band: header.band,
                    sensor_count: header.sensor_count,
                    particle_count: header.particle_count,
                    sensor_records: p.sensor_records,
                    particle_records: p.particle_records,
                    header_bytes: p.header_bytes,
                    sensors_bytes: p.sensors_bytes,
                    particles_bytes: p.particles_bytes,
                    footer_bytes: wire_len,
                }));
            }
            Frame::Ack(_) | Frame::Command(_) => unreachable!("expected type is always a server frame"),
        }
        Ok(None)
    }
}

fn check_count(kind: &'static str, expected: usize, actual: usize) -> Result<(), MirrorError> {
    if expected == actual {
        Ok(())
    } else {
        Err(MirrorError::CountMismatch { kind, expected, actual })
    }
}
