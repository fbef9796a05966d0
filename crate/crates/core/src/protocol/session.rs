//! Server side of the acknowledged five-step exchange.
//!
//! A cycle is HEADER, SENSORS, PARTICLES, FOOTER, each answered by the
//! client before the next is sent. The footer answer is either an ACK or a
//! COMMAND; both close the cycle, and only then does the session record the
//! cycle's values as delivered.

use thiserror::Error;

use super::delta::{changed_records, commit, SentValues};
use super::frame::{
    encode_raw, wire_f32, wire_u16, wire_u32, wire_u8, Ack, AckStatus, Command, EncodeError, Footer, Frame, FrameType,
    Header, Mode, ParticleDelta, ParticleRecord, ParticlesPayload, SensorDelta, SensorRecord, SensorsPayload,
};
use crate::field::Point;
use crate::lod::{next_wave, select_band, BandConfig, DiffusionSchedule, LodError, LodKind, LodLevel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Idle,
    AwaitHeaderAck,
    AwaitSensorsAck,
    AwaitParticlesAck,
    AwaitFooterAck,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("protocol violation: {got} received in phase {phase:?}")]
    OutOfPhase { phase: Phase, got: String },
    #[error("client reported an error for {0}")]
    ClientError(FrameType),
    #[error("cannot start a cycle in phase {0:?}")]
    Busy(Phase),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Lod(#[from] LodError),
}

impl SessionError {
    /// Errors after which the session was reset to a fresh full cycle.
    pub fn is_reset(&self) -> bool {
        matches!(self, SessionError::OutOfPhase { .. } | SessionError::ClientError(_))
    }
}

/// A level in wire form: ids, positions and values narrowed to `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct WireLevel {
    pub band: usize,
    pub ids: Vec<u32>,
    pub positions: Vec<[f32; 3]>,
    pub values: Vec<f32>,
    /// Fingerprint of (band, kind, id set); a change forces a full cycle.
    pub key: u64,
}

impl WireLevel {
    pub fn from_level(level: &LodLevel) -> Result<Self, EncodeError> {
        let n = level.len();
        wire_u32(n, "particle count")?;
        let ids = level.wire_ids();
        let mut positions = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        for p in &level.points {
            positions.push([
                wire_f32(p.position.x, "particle position")?,
                wire_f32(p.position.y, "particle position")?,
                wire_f32(p.position.z, "particle position")?,
            ]);
            values.push(wire_f32(p.value, "particle value")?);
        }
        let key = level_key(level.band, level.kind, &ids);
        Ok(WireLevel {
            band: level.band,
            ids,
            positions,
            values,
            key,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// FNV-1a over the band, kind and ids.
fn level_key(band: usize, kind: LodKind, ids: &[u32]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    eat(&(band as u64).to_le_bytes());
    eat(&[kind as u8]);
    eat(&(ids.len() as u64).to_le_bytes());
    for id in ids {
        eat(&id.to_le_bytes());
    }
    h
}

/// Everything one cycle needs from the current snapshot.
#[derive(Debug, Clone, Copy)]
pub struct CycleInput<'a> {
    pub tick: u64,
    /// Room length, width, height in meters.
    pub room: [f32; 3],
    /// All sensors, full records.
    pub sensors: &'a [SensorRecord],
    pub level: &'a WireLevel,
    /// Wave schedule over `level`'s point indices, when diffusion is on.
    pub schedule: Option<&'a DiffusionSchedule>,
    pub max_payload: usize,
}

/// The four encoded frames of one cycle.
#[derive(Debug, Clone)]
pub struct Cycle {
    pub tick: u64,
    pub mode: Mode,
    pub band: usize,
    pub sensor_records: usize,
    pub particle_records: usize,
    pub header: Vec<u8>,
    pub sensors: Vec<u8>,
    pub particles: Vec<u8>,
    pub footer: Vec<u8>,
}

impl Cycle {
    /// Encoded frame for a server-sent type.
    pub fn frame(&self, frame_type: FrameType) -> Option<&[u8]> {
        match frame_type {
            FrameType::Header => Some(&self.header),
            FrameType::Sensors => Some(&self.sensors),
            FrameType::Particles => Some(&self.particles),
            FrameType::Footer => Some(&self.footer),
            FrameType::Ack | FrameType::Command => None,
        }
    }

    pub fn payload_len(&self, frame_type: FrameType) -> usize {
        self.frame(frame_type)
            .map_or(0, |f| f.len() - super::frame::PREAMBLE_LEN)
    }
}

/// What the handler should do after a client frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Next {
    Send(FrameType),
    /// The cycle closed; the session is idle until the next tick.
    CycleComplete,
}

#[derive(Debug, Clone, Default)]
struct Pending {
    full: bool,
    sensors: Vec<(u32, f32)>,
    particles: Vec<(u32, f32)>,
    key: u64,
    wave: bool,
}

#[derive(Debug, Clone)]
pub struct SessionState {
    mode: Mode,
    phase: Phase,
    /// Camera position in centimeters.
    viewpoint: Point,
    /// Band selection target (room center) in centimeters.
    target: Point,
    bands: BandConfig,
    band: usize,
    cursor: usize,
    epsilon: f64,
    force_full: bool,
    last_sent: SentValues,
    last_sensors: SentValues,
    committed_key: Option<u64>,
    pending: Option<Pending>,
}

impl SessionState {
    /// A new session looking at `target` from `viewpoint` (both in
    /// centimeters). The first cycle is always full.
    pub fn new(mode: Mode, viewpoint: Point, target: Point, bands: BandConfig, epsilon: f64) -> Result<Self, LodError> {
        bands.validate()?;
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(LodError::InvalidArgument(format!(
                "epsilon must be finite and >= 0, got {epsilon}"
            )));
        }
        let band = select_band(&viewpoint, &target, &bands);
        Ok(SessionState {
            mode,
            phase: Phase::Idle,
            viewpoint,
            target,
            bands,
            band,
            cursor: 0,
            epsilon,
            force_full: true,
            last_sent: SentValues::new(),
            last_sensors: SentValues::new(),
            committed_key: None,
            pending: None,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn viewpoint(&self) -> Point {
        self.viewpoint
    }

    pub fn band(&self) -> usize {
        self.band
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn last_sent(&self) -> &SentValues {
        &self.last_sent
    }

    /// True when the next cycle will be full regardless of the level.
    pub fn full_pending(&self) -> bool {
        self.force_full || self.mode == Mode::Full
    }

    /// Drops delivery state; the next cycle is full.
    pub fn reset(&mut self) {
        self.phase = Phase::Idle;
        self.force_full = true;
        self.last_sent.clear();
        self.last_sensors.clear();
        self.committed_key = None;
        self.pending = None;
        self.cursor = 0;
    }

    /// Starts a cycle from an idle session: decides full or delta, encodes
    /// the four frames and moves to `AwaitHeaderAck`.
    pub fn start_cycle(&mut self, input: &CycleInput<'_>) -> Result<Cycle, SessionError> {
        if self.phase != Phase::Idle {
            return Err(SessionError::Busy(self.phase));
        }
        let level = input.level;
        let full = self.force_full || self.mode == Mode::Full || self.committed_key != Some(level.key);
        let mode = if full { Mode::Full } else { Mode::Delta };

        let mut crc = crc32fast::Hasher::new();
        let mut pending = Pending {
            full,
            key: level.key,
            ..Pending::default()
        };
        let (sensors_frame, particles_frame) = if full {
            pending.sensors = input.sensors.iter().map(|s| (s.id as u32, s.value)).collect();
            pending.particles = level.ids.iter().copied().zip(level.values.iter().copied()).collect();
            let sensors = Frame::Sensors(SensorsPayload::Full(input.sensors.to_vec()));
            let particles = Frame::Particles(ParticlesPayload::Full(
                (0..level.len())
                    .map(|i| ParticleRecord {
                        id: level.ids[i],
                        position: level.positions[i],
                        value: level.values[i],
                    })
                    .collect(),
            ));
            (sensors, particles)
        } else {
            let sensor_ids: Vec<u32> = input.sensors.iter().map(|s| s.id as u32).collect();
            let sensor_values: Vec<f32> = input.sensors.iter().map(|s| s.value).collect();
            pending.sensors = changed_records(&self.last_sensors, &sensor_ids, &sensor_values, self.epsilon);
            pending.particles = match input.schedule {
                Some(schedule) => {
                    pending.wave = true;
                    let cursor = self.cursor % schedule.wave_count().max(1);
                    next_wave(
                        schedule,
                        cursor,
                        &self.last_sent,
                        &level.ids,
                        &level.values,
                        self.epsilon,
                    )?
                }
                None => changed_records(&self.last_sent, &level.ids, &level.values, self.epsilon),
            };
            let sensors = Frame::Sensors(SensorsPayload::Delta(
                pending
                    .sensors
                    .iter()
                    .map(|&(id, value)| SensorDelta { id: id as u16, value })
                    .collect(),
            ));
            let particles = Frame::Particles(ParticlesPayload::Delta(
                pending
                    .particles
                    .iter()
                    .map(|&(id, value)| ParticleDelta { id, value })
                    .collect(),
            ));
            (sensors, particles)
        };

        let header = Frame::Header(Header {
            mode,
            tick: input.tick,
            sensor_count: wire_u16(input.sensors.len(), "sensor count")?,
            particle_count: wire_u32(level.len(), "particle count")?,
            room: input.room,
            band: wire_u8(self.band, "band")?,
        });
        let mut sensors_payload = Vec::new();
        sensors_frame.encode_payload(&mut sensors_payload)?;
        let mut particles_payload = Vec::new();
        particles_frame.encode_payload(&mut particles_payload)?;
        crc.update(&sensors_payload);
        crc.update(&particles_payload);
        let footer = Frame::Footer(Footer {
            tick: input.tick,
            crc32: crc.finalize(),
        });

        let cycle = Cycle {
            tick: input.tick,
            mode,
            band: self.band,
            sensor_records: pending.sensors.len(),
            particle_records: pending.particles.len(),
            header: header.encode_with_limit(input.max_payload)?,
            sensors: encode_raw(FrameType::Sensors, &sensors_payload, input.max_payload)?,
            particles: encode_raw(FrameType::Particles, &particles_payload, input.max_payload)?,
            footer: footer.encode_with_limit(input.max_payload)?,
        };
        self.pending = Some(pending);
        self.phase = Phase::AwaitHeaderAck;
        Ok(cycle)
    }

    /// Advances on a frame received from the client.
    ///
    /// Any frame the current phase does not expect resets the session and
    /// is reported as an error.
    pub fn on_frame(&mut self, frame: &Frame) -> Result<Next, SessionError> {
        let expected = match self.phase {
            Phase::Idle => None,
            Phase::AwaitHeaderAck => Some(FrameType::Header),
            Phase::AwaitSensorsAck => Some(FrameType::Sensors),
            Phase::AwaitParticlesAck => Some(FrameType::Particles),
            Phase::AwaitFooterAck => Some(FrameType::Footer),
        };
        match (frame, expected) {
            (Frame::Ack(Ack { acked_type, status }), Some(exp)) if *acked_type == exp => {
                if *status == AckStatus::Error {
                    self.reset();
                    return Err(SessionError::ClientError(exp));
                }
                Ok(self.advance())
            }
            (Frame::Command(cmd), Some(FrameType::Footer)) => {
                let next = self.advance();
                self.apply_command(cmd);
                Ok(next)
            }
            _ => {
                let phase = self.phase;
                self.reset();
                Err(SessionError::OutOfPhase {
                    phase,
                    got: describe(frame),
                })
            }
        }
    }

    fn advance(&mut self) -> Next {
        match self.phase {
            Phase::AwaitHeaderAck => {
                self.phase = Phase::AwaitSensorsAck;
                Next::Send(FrameType::Sensors)
            }
            Phase::AwaitSensorsAck => {
                self.phase = Phase::AwaitParticlesAck;
                Next::Send(FrameType::Particles)
            }
            Phase::AwaitParticlesAck => {
                self.phase = Phase::AwaitFooterAck;
                Next::Send(FrameType::Footer)
            }
            Phase::AwaitFooterAck | Phase::Idle => {
                self.phase = Phase::Idle;
                self.commit_pending();
                Next::CycleComplete
            }
        }
    }

    fn commit_pending(&mut self) {
        let Some(p) = self.pending.take() else { return };
        if p.full {
            self.last_sent.clear();
            self.last_sensors.clear();
            self.cursor = 0;
            self.force_full = false;
        } else if p.wave {
            self.cursor += 1;
        }
        commit(&mut self.last_sensors, p.sensors);
        commit(&mut self.last_sent, p.particles);
        self.committed_key = Some(p.key);
    }

    fn apply_command(&mut self, cmd: &Command) {
        match *cmd {
            Command::SetViewpoint([x, y, z]) => {
                self.viewpoint = Point::new(x as f64, y as f64, z as f64);
                self.band = select_band(&self.viewpoint, &self.target, &self.bands);
            }
            Command::SetMode(m) => self.mode = m,
            Command::RequestFull => self.force_full = true,
        }
    }

    /// Wraps the diffusion cursor to a schedule's wave count.
    pub fn wave_cursor(&self, schedule: &DiffusionSchedule) -> usize {
        self.cursor % schedule.wave_count().max(1)
    }
}

fn describe(frame: &Frame) -> String {
    match frame {
        Frame::Ack(a) => format!("ACK({})", a.acked_type),
        Frame::Command(c) => format!("COMMAND({c:?})"),
        other => other.frame_type().to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn level(values: &[f32]) -> WireLevel {
        let ids: Vec<u32> = (0..values.len() as u32).collect();
        WireLevel {
            band: 0,
            key: level_key(0, LodKind::Resolution, &ids),
            positions: ids.iter().map(|&i| [i as f32, 0.0, 0.0]).collect(),
            ids,
            values: values.to_vec(),
        }
    }

    fn session(mode: Mode) -> SessionState {
        let target = Point::new(200.0, 150.0, 125.0);
        SessionState::new(mode, target, target, BandConfig::default(), 0.0).unwrap()
    }

    fn ack(t: FrameType) -> Frame {
        Frame::Ack(Ack {
            acked_type: t,
            status: AckStatus::Ok,
        })
    }

    fn run_cycle(s: &mut SessionState, lvl: &WireLevel, tick: u64, closing: Frame) -> Cycle {
        let sensors = [SensorRecord {
            id: 0,
            position: [1.0, 1.0, 1.0],
            value: 20.0,
        }];
        let input = CycleInput {
            tick,
            room: [4.0, 3.0, 2.5],
            sensors: &sensors,
            level: lvl,
            schedule: None,
            max_payload: 1 << 20,
        };
        let cycle = s.start_cycle(&input).unwrap();
        assert_eq!(s.phase(), Phase::AwaitHeaderAck);
        assert_eq!(
            s.on_frame(&ack(FrameType::Header)).unwrap(),
            Next::Send(FrameType::Sensors)
        );
        assert_eq!(
            s.on_frame(&ack(FrameType::Sensors)).unwrap(),
            Next::Send(FrameType::Particles)
        );
        assert_eq!(
            s.on_frame(&ack(FrameType::Particles)).unwrap(),
            Next::Send(FrameType::Footer)
        );
        assert_eq!(s.phase(), Phase::AwaitFooterAck);
        assert_eq!(s.on_frame(&closing).unwrap(), Next::CycleComplete);
        assert_eq!(s.phase(), Phase::Idle);
        cycle
    }

    #[test]
    fn first_cycle_full_then_delta() {
        let mut s = session(Mode::Delta);
        let lvl = level(&[1.0, 2.0, 3.0]);
        let c = run_cycle(&mut s, &lvl, 1, ack(FrameType::Footer));
        assert_eq!(c.mode, Mode::Full);
        assert_eq!(c.payload_len(FrameType::Particles), 60);
        let c = run_cycle(&mut s, &lvl, 2, ack(FrameType::Footer));
        assert_eq!(c.mode, Mode::Delta);
        assert_eq!(c.particle_records, 0);
        let changed = level(&[1.0, 2.5, 3.0]);
        let c = run_cycle(&mut s, &changed, 3, ack(FrameType::Footer));
        assert_eq!(c.particle_records, 1);
        assert_eq!(c.payload_len(FrameType::Particles), 8);
    }

    #[test]
    fn viewpoint_command_closes_cycle_and_rebands() {
        let mut s = session(Mode::Delta);
        assert_eq!(s.band(), 0);
        let lvl = level(&[1.0]);
        run_cycle(
            &mut s,
            &lvl,
            1,
            Frame::Command(Command::SetViewpoint([200.0 + 750.0, 150.0, 125.0])),
        );
        assert_eq!(s.band(), 1);
        assert_eq!(s.viewpoint(), Point::new(950.0, 150.0, 125.0));
    }

    #[test]
    fn request_full_forces_full() {
        let mut s = session(Mode::Delta);
        let lvl = level(&[1.0]);
        run_cycle(&mut s, &lvl, 1, ack(FrameType::Footer));
        run_cycle(&mut s, &lvl, 2, Frame::Command(Command::RequestFull));
        assert_eq!(run_cycle(&mut s, &lvl, 3, ack(FrameType::Footer)).mode, Mode::Full);
        assert_eq!(run_cycle(&mut s, &lvl, 4, ack(FrameType::Footer)).mode, Mode::Delta);
    }

    #[test]
    fn full_mode_stays_full() {
        let mut s = session(Mode::Full);
        let lvl = level(&[1.0]);
        for t in 0..3 {
            assert_eq!(run_cycle(&mut s, &lvl, t, ack(FrameType::Footer)).mode, Mode::Full);
        }
    }

    #[test]
    fn particles_frame_from_client_is_a_violation() {
        let mut s = session(Mode::Delta);
        let lvl = level(&[1.0]);
        run_cycle(&mut s, &lvl, 1, ack(FrameType::Footer));
        let sensors = [];
        s.start_cycle(&CycleInput {
            tick: 2,
            room: [1.0; 3],
            sensors: &sensors,
            level: &lvl,
            schedule: None,
            max_payload: 1024,
        })
        .unwrap();
        let err = s
            .on_frame(&Frame::Particles(ParticlesPayload::Delta(vec![])))
            .unwrap_err();
        assert!(err.is_reset());
        assert_eq!(s.phase(), Phase::Idle);
        assert!(s.last_sent().is_empty());
        assert_eq!(run_cycle(&mut s, &lvl, 3, ack(FrameType::Footer)).mode, Mode::Full);
    }

    #[test]
    fn wrong_ack_type_and_early_command_are_violations() {
        let mut s = session(Mode::Delta);
        let lvl = level(&[1.0]);
        let sensors = [];
        let input = CycleInput {
            tick: 1,
            room: [1.0; 3],
            sensors: &sensors,
            level: &lvl,
            schedule: None,
            max_payload: 1024,
        };
        s.start_cycle(&input).unwrap();
        assert!(matches!(s.start_cycle(&input), Err(SessionError::Busy(_))));
        assert!(s.on_frame(&ack(FrameType::Sensors)).is_err());
        s.start_cycle(&input).unwrap();
        assert!(s.on_frame(&Frame::Command(Command::RequestFull)).is_err());
        assert!(
            s.on_frame(&ack(FrameType::Header)).is_err(),
            "idle session expects nothing"
        );
    }

    #[test]
    fn client_error_status_resets() {
        let mut s = session(Mode::Delta);
        let lvl = level(&[1.0]);
        run_cycle(&mut s, &lvl, 1, ack(FrameType::Footer));
        let sensors = [];
        s.start_cycle(&CycleInput {
            tick: 2,
            room: [1.0; 3],
            sensors: &sensors,
            level: &lvl,
            schedule: None,
            max_payload: 1024,
        })
        .unwrap();
        let err = s
            .on_frame(&Frame::Ack(Ack {
                acked_type: FrameType::Header,
                status: AckStatus::Error,
            }))
            .unwrap_err();
        assert_eq!(err, SessionError::ClientError(FrameType::Header));
        assert!(s.full_pending());
    }

    #[test]
    fn abandoned_cycle_is_not_committed() {
        let mut s = session(Mode::Delta);
        let lvl = level(&[1.0, 2.0]);
        let sensors = [];
        s.start_cycle(&CycleInput {
            tick: 1,
            room: [1.0; 3],
            sensors: &sensors,
            level: &lvl,
            schedule: None,
            max_payload: 1024,
        })
        .unwrap();
        s.on_frame(&ack(FrameType::Header)).unwrap();
        assert!(s.last_sent().is_empty());
    }
}
