//! Byte layout of protocol frames.
//!
//! Every frame starts with an 8-byte preamble:
//!
//! ```text
//! 0x44 0x43 | version u8 (=1) | frame_type u8 | payload_length u32 LE
//! ```
//!
//! followed by `payload_length` bytes. All integers and `f32` fields are
//! little-endian. SENSORS and PARTICLES payloads are sequences of fixed-size
//! records whose size depends on the cycle mode announced by the preceding
//! HEADER, so decoding them needs that mode.

use std::fmt;

use thiserror::Error;

pub const MAGIC: [u8; 2] = [0x44, 0x43];
pub const VERSION: u8 = 1;
pub const PREAMBLE_LEN: usize = 8;
/// Default cap on a single payload.
pub const DEFAULT_MAX_PAYLOAD: usize = 16 * 1024 * 1024;

pub const HEADER_PAYLOAD_LEN: usize = 28;
pub const FOOTER_PAYLOAD_LEN: usize = 12;
pub const ACK_PAYLOAD_LEN: usize = 2;
pub const SENSOR_FULL_RECORD: usize = 18;
pub const SENSOR_DELTA_RECORD: usize = 6;
pub const PARTICLE_FULL_RECORD: usize = 20;
pub const PARTICLE_DELTA_RECORD: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FrameType {
    Header = 1,
    Sensors = 2,
    Particles = 3,
    Footer = 4,
    Ack = 5,
    Command = 6,
}

impl FrameType {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            1 => FrameType::Header,
            2 => FrameType::Sensors,
            3 => FrameType::Particles,
            4 => FrameType::Footer,
            5 => FrameType::Ack,
            6 => FrameType::Command,
            _ => return None,
        })
    }
}

impl fmt::Display for FrameType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrameType::Header => "HEADER",
            FrameType::Sensors => "SENSORS",
            FrameType::Particles => "PARTICLES",
            FrameType::Footer => "FOOTER",
            FrameType::Ack => "ACK",
            FrameType::Command => "COMMAND",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum Mode {
    Full = 0,
    Delta = 1,
}

impl Mode {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Mode::Full),
            1 => Some(Mode::Delta),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Full => "full",
            Mode::Delta => "delta",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Mode::Full),
            "delta" => Ok(Mode::Delta),
            other => Err(format!("unknown mode `{other}` (full | delta)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Header {
    pub mode: Mode,
    pub tick: u64,
    pub sensor_count: u16,
    pub particle_count: u32,
    /// Room length, width, height in meters.
    pub room: [f32; 3],
    pub band: u8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorRecord {
    pub id: u16,
    pub position: [f32; 3],
    pub value: f32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorDelta {
    pub id: u16,
    pub value: f32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleRecord {
    pub id: u32,
    pub position: [f32; 3],
    pub value: f32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleDelta {
    pub id: u32,
    pub value: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SensorsPayload {
    Full(Vec<SensorRecord>),
    Delta(Vec<SensorDelta>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParticlesPayload {
    Full(Vec<ParticleRecord>),
    Delta(Vec<ParticleDelta>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Footer {
    pub tick: u64,
    /// CRC32 (IEEE) of this tick's SENSORS payload followed by its
    /// PARTICLES payload.
    pub crc32: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum AckStatus {
    Ok = 0,
    Error = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ack {
    pub acked_type: FrameType,
    pub status: AckStatus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Command {
    /// Camera position in centimeters.
    SetViewpoint([f32; 3]),
    SetMode(Mode),
    RequestFull,
}

impl Command {
    pub const SET_VIEWPOINT: u8 = 1;
    pub const SET_MODE: u8 = 2;
    pub const REQUEST_FULL: u8 = 3;
}

#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    Header(Header),
    Sensors(SensorsPayload),
    Particles(ParticlesPayload),
    Footer(Footer),
    Ack(Ack),
    Command(Command),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodeError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{what} = {value} does not fit the wire field")]
    OutOfRange { what: &'static str, value: u64 },
    #[error("payload of {len} bytes exceeds the {max}-byte limit")]
    PayloadTooLarge { len: usize, max: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 2]),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown frame type {0}")]
    UnknownFrameType(u8),
    #[error("payload length {len} exceeds the {max}-byte limit")]
    LengthOverrun { len: usize, max: usize },
    #[error("{frame_type} payload of {len} bytes is too short")]
    ShortPayload { frame_type: FrameType, len: usize },
    #[error("{frame_type} payload has {extra} trailing bytes")]
    TrailingBytes { frame_type: FrameType, extra: usize },
    #[error("invalid {field} value {value}")]
    InvalidField { field: &'static str, value: u64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

impl Frame {
    pub fn frame_type(&self) -> FrameType {
        match self {
            Frame::Header(_) => FrameType::Header,
            Frame::Sensors(_) => FrameType::Sensors,
            Frame::Particles(_) => FrameType::Particles,
            Frame::Footer(_) => FrameType::Footer,
            Frame::Ack(_) => FrameType::Ack,
            Frame::Command(_) => FrameType::Command,
        }
    }

    /// Appends the payload bytes (no preamble) to `out`.
    pub fn encode_payload(&self, out: &mut Vec<u8>) -> Result<(), EncodeError> {
        match self {
            Frame::Header(h) => {
                out.push(h.mode as u8);
                out.extend_from_slice(&h.tick.to_le_bytes());
                out.extend_from_slice(&h.sensor_count.to_le_bytes());
                out.extend_from_slice(&h.particle_count.to_le_bytes());
                put_f32s(out, &h.room, "HEADER room")?;
                out.push(h.band);
            }
            Frame::Sensors(SensorsPayload::Full(records)) => {
                out.reserve(records.len() * SENSOR_FULL_RECORD);
                for r in records {
                    out.extend_from_slice(&r.id.to_le_bytes());
                    put_f32s(out, &r.position, "sensor position")?;
                    put_f32s(out, &[r.value], "sensor value")?;
                }
            }
            Frame::Sensors(SensorsPayload::Delta(records)) => {
                out.reserve(records.len() * SENSOR_DELTA_RECORD);
                for r in records {
                    out.extend_from_slice(&r.id.to_le_bytes());
                    put_f32s(out, &[r.value], "sensor value")?;
                }
            }
            Frame::Particles(ParticlesPayload::Full(records)) => {
                out.reserve(records.len() * PARTICLE_FULL_RECORD);
                for r in records {
                    out.extend_from_slice(&r.id.to_le_bytes());
                    put_f32s(out, &r.position, "particle position")?;
                    put_f32s(out, &[r.value], "particle value")?;
                }
            }
            Frame::Particles(ParticlesPayload::Delta(records)) => {
                out.reserve(records.len() * PARTICLE_DELTA_RECORD);
                for r in records {
                    out.extend_from_slice(&r.id.to_le_bytes());
                    put_f32s(out, &[r.value], "particle value")?;
                }
            }
            Frame::Footer(f) => {
                out.extend_from_slice(&f.tick.to_le_bytes());
                out.extend_from_slice(&f.crc32.to_le_bytes());
            }
            Frame::Ack(a) => {
                out.push(a.acked_type as u8);
                out.push(a.status as u8);
            }
            Frame::Command(Command::SetViewpoint(p)) => {
                out.push(Command::SET_VIEWPOINT);
                put_f32s(out, p, "viewpoint")?;
            }
            Frame::Command(Command::SetMode(m)) => {
                out.push(Command::SET_MODE);
                out.push(*m as u8);
            }
            Frame::Command(Command::RequestFull) => out.push(Command::REQUEST_FULL),
        }
        Ok(())
    }

    /// Full wire encoding with the default payload cap.
    pub fn encode(&self) -> Result<Vec<u8>, EncodeError> {
        self.encode_with_limit(DEFAULT_MAX_PAYLOAD)
    }

    pub fn encode_with_limit(&self, max_payload: usize) -> Result<Vec<u8>, EncodeError> {
        let mut payload = Vec::new();
        self.encode_payload(&mut payload)?;
        encode_raw(self.frame_type(), &payload, max_payload)
    }
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32], what: &'static str) -> Result<(), EncodeError> {
    for v in values {
        if !v.is_finite() {
            return Err(EncodeError::NonFinite(what));
        }
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

/// Wraps an already-encoded payload in a preamble.
pub fn encode_raw(frame_type: FrameType, payload: &[u8], max_payload: usize) -> Result<Vec<u8>, EncodeError> {
    if payload.len() > max_payload.min(u32::MAX as usize) {
        return Err(EncodeError::PayloadTooLarge {
            len: payload.len(),
            max: max_payload,
        });
    }
    let mut out = Vec::with_capacity(PREAMBLE_LEN + payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(frame_type as u8);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
    Ok(out)
}

/// Narrows a count or id to a wire integer.
pub fn wire_u32(value: usize, what: &'static str) -> Result<u32, EncodeError> {
    u32::try_from(value).map_err(|_| EncodeError::OutOfRange {
        what,
        value: value as u64,
    })
}

pub fn wire_u16(value: usize, what: &'static str) -> Result<u16, EncodeError> {
    u16::try_from(value).map_err(|_| EncodeError::OutOfRange {
        what,
        value: value as u64,
    })
}

pub fn wire_u8(value: usize, what: &'static str) -> Result<u8, EncodeError> {
    u8::try_from(value).map_err(|_| EncodeError::OutOfRange {
        what,
        value: value as u64,
    })
}

/// Narrows a double to a finite `f32`.
pub fn wire_f32(value: f64, what: &'static str) -> Result<f32, EncodeError> {
    let v = value as f32;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EncodeError::NonFinite(what))
    }
}

/// Checks the preamble in `buf`. Returns `(frame_type, payload_len)` once
/// all 8 bytes are present; rejects bad bytes as soon as they arrive.
pub fn decode_preamble(buf: &[u8], max_payload: usize) -> Result<Option<(FrameType, usize)>, DecodeError> {
    for (i, &m) in MAGIC.iter().enumerate() {
        if let Some(&b) = buf.get(i) {
            if b != m {
                return Err(DecodeError::BadMagic([buf[0], buf.get(1).copied().unwrap_or(0)]));
            }
        }
    }
    if let Some(&v) = buf.get(2) {
        if v != VERSION {
            return Err(DecodeError::UnsupportedVersion(v));
        }
    }
    let frame_type = match buf.get(3) {
        Some(&t) => FrameType::from_u8(t).ok_or(DecodeError::UnknownFrameType(t))?,
        None => return Ok(None),
    };
    if buf.len() < PREAMBLE_LEN {
        return Ok(None);
    }
    let len = u32::from_le_bytes([buf[4], buf[5], buf[6], buf[7]]) as usize;
    if len > max_payload {
        return Err(DecodeError::LengthOverrun { len, max: max_payload });
    }
    Ok(Some((frame_type, len)))
}

/// Decodes one frame from the front of `buf`.
///
/// Returns `Ok(None)` when more bytes are needed (nothing is consumed in
/// that case) and `Ok(Some((frame, consumed)))` otherwise. `mode` selects
/// the record layout of SENSORS and PARTICLES payloads.
pub fn decode_frame(buf: &[u8], mode: Mode, max_payload: usize) -> Result<Option<(Frame, usize)>, DecodeError> {
    let Some((frame_type, len)) = decode_preamble(buf, max_payload)? else {
        return Ok(None);
    };
    let total = PREAMBLE_LEN + len;
    if buf.len() < total {
        return Ok(None);
    }
    let frame = decode_payload(frame_type, &buf[PREAMBLE_LEN..total], mode)?;
    Ok(Some((frame, total)))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let mut out = [0u8; N];
        out.copy_from_slice(&self.buf[self.pos..self.pos + N]);
        self.pos += N;
        out
    }

    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }

    fn u16(&mut self) -> u16 {
        u16::from_le_bytes(self.take())
    }

    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }

    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }

    fn f32(&mut self, what: &'static str) -> Result<f32, DecodeError> {
        let v = f32::from_le_bytes(self.take());
        if v.is_finite() {
            Ok(v)
        } else {
            Err(DecodeError::NonFinite(what))
        }
    }

    fn f32x3(&mut self, what: &'static str) -> Result<[f32; 3], DecodeError> {
        Ok([self.f32(what)?, self.f32(what)?, self.f32(what)?])
    }
}

fn exact_len(frame_type: FrameType, payload: &[u8], expected: usize) -> Result<(), DecodeError> {
    match payload.len().cmp(&expected) {
        std::cmp::Ordering::Less => Err(DecodeError::ShortPayload {
            frame_type,
            len: payload.len(),
        }),
        std::cmp::Ordering::Greater => Err(DecodeError::TrailingBytes {
            frame_type,
            extra: payload.len() - expected,
        }),
        std::cmp::Ordering::Equal => Ok(()),
    }
}

fn record_count(frame_type: FrameType, payload: &[u8], record: usize) -> Result<usize, DecodeError> {
    let extra = payload.len() % record;
    if extra != 0 {
        return Err(DecodeError::TrailingBytes { frame_type, extra });
    }
    Ok(payload.len() / record)
}

/// Decodes a payload of known type.
pub fn decode_payload(frame_type: FrameType, payload: &[u8], mode: Mode) -> Result<Frame, DecodeError> {
    let mut c = Cursor { buf: payload, pos: 0 };
    let frame = match frame_type {
        FrameType::Header => {
            exact_len(frame_type, payload, HEADER_PAYLOAD_LEN)?;
            let raw_mode = c.u8();
            let mode = Mode::from_u8(raw_mode).ok_or(DecodeError::InvalidField {
                field: "HEADER mode",
                value: raw_mode as u64,
            })?;
            Frame::Header(Header {
                mode,
                tick: c.u64(),
                sensor_count: c.u16(),
                particle_count: c.u32(),
                room: c.f32x3("HEADER room")?,
                band: c.u8(),
            })
        }
        FrameType::Sensors => match mode {
            Mode::Full => {
                let n = record_count(frame_type, payload, SENSOR_FULL_RECORD)?;
                let mut v = Vec::with_capacity(n);
                for _ in 0..n {
                    v.push(SensorRecord {
                        id: c.u16(),
                        position: c.f32x3("sensor position")?,
                        value: c.f32("sensor value")?,
                    });
                }
                Frame::Sensors(SensorsPayload::Full(v))
            }
            Mode::Delta => {
                let n = record_count(frame_type, payload, SENSOR_DELTA_RECORD)?;
                let mut v = Vec::with_capacity(n);
                for _ in 0..n {
                    v.push(SensorDelta {
                        id: c.u16(),
                        value: c.f32("sensor value")?,
                    });
                }
                Frame::Sensors(SensorsPayload::Delta(v))
            }
        },
        FrameType::Particles => match mode {
            Mode::Full => {
                let n = record_count(frame_type, payload, PARTICLE_FULL_RECORD)?;
                let mut v = Vec::with_capacity(n);
                for _ in 0..n {
                    v.push(ParticleRecord {
                        id: c.u32(),
                        position: c.f32x3("particle position")?,
                        value: c.f32("particle value")?,
                    });
                }
                Frame::Particles(ParticlesPayload::Full(v))
            }
            Mode::Delta => {
                let n = record_count(frame_type, payload, PARTICLE_DELTA_RECORD)?;
                let mut v = Vec::with_capacity(n);
                for _ in 0..n {
                    v.push(ParticleDelta {
                        id: c.u32(),
                        value: c.f32("particle value")?,
                    });
                }
                Frame::Particles(ParticlesPayload::Delta(v))
            }
        },
        FrameType::Footer => {
            exact_len(frame_type, payload, FOOTER_PAYLOAD_LEN)?;
            Frame::Footer(Footer {
                tick: c.u64(),
                crc32: c.u32(),
            })
        }
        FrameType::Ack => {
            exact_len(frame_type, payload, ACK_PAYLOAD_LEN)?;
            let raw_type = c.u8();
            let acked_type = FrameType::from_u8(raw_type).ok_or(DecodeError::InvalidField {
                field: "ACK acked_type",
                value: raw_type as u64,
            })?;
            let status = match c.u8() {
                0 => AckStatus::Ok,
                1 => AckStatus::Error,
                other => {
                    return Err(DecodeError::InvalidField {
                        field: "ACK status",
                        value: other as u64,
                    })
                }
            };
            Frame::Ack(Ack { acked_type, status })
        }
        FrameType::Command => {
            let Some(&cmd) = payload.first() else {
                return Err(DecodeError::ShortPayload { frame_type, len: 0 });
            };
            match cmd {
                Command::SET_VIEWPOINT => {
                    exact_len(frame_type, payload, 13)?;
                    c.u8();
                    Frame::Command(Command::SetViewpoint(c.f32x3("viewpoint")?))
                }
                Command::SET_MODE => {
                    exact_len(frame_type, payload, 2)?;
                    c.u8();
                    let raw = c.u8();
                    let m = Mode::from_u8(raw).ok_or(DecodeError::InvalidField {
                        field: "SET_MODE mode",
                        value: raw as u64,
                    })?;
                    Frame::Command(Command::SetMode(m))
                }
                Command::REQUEST_FULL => {
                    exact_len(frame_type, payload, 1)?;
                    Frame::Command(Command::RequestFull)
                }
                other => {
                    return Err(DecodeError::InvalidField {
                        field: "COMMAND cmd",
                        value: other as u64,
                    })
                }
            }
        }
    };
    Ok(frame)
}

/// Streaming decoder that tracks the cycle mode from the last HEADER seen.
#[derive(Debug, Clone)]
pub struct FrameDecoder {
    mode: Mode,
    max_payload: usize,
}

impl Default for FrameDecoder {
    fn default() -> Self {
        FrameDecoder::new(DEFAULT_MAX_PAYLOAD)
    }
}

impl FrameDecoder {
    pub fn new(max_payload: usize) -> Self {
        FrameDecoder {
            mode: Mode::Full,
            max_payload,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Like [`decode_frame`]; a decoded HEADER switches the record layout
    /// for the frames that follow it.
    pub fn decode(&mut self, buf: &[u8]) -> Result<Option<(Frame, usize)>, DecodeError> {
        let out = decode_frame(buf, self.mode, self.max_payload)?;
        if let Some((Frame::Header(h), _)) = &out {
            self.mode = h.mode;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ack_bytes() {
        let ack = Frame::Ack(Ack {
            acked_type: FrameType::Header,
            status: AckStatus::Ok,
        });
        assert_eq!(
            ack.encode().unwrap(),
            vec![0x44, 0x43, 0x01, 0x05, 0x02, 0x00, 0x00, 0x00, 0x01, 0x00]
        );
    }

    #[test]
    fn particle_record_sizes() {
        let delta = Frame::Particles(ParticlesPayload::Delta(vec![ParticleDelta { id: 7, value: 21.5 }]));
        let bytes = delta.encode().unwrap();
        assert_eq!(bytes.len() - PREAMBLE_LEN, 8);
        assert_eq!(&bytes[4..8], &8u32.to_le_bytes());
        let full = Frame::Particles(ParticlesPayload::Full(vec![ParticleRecord {
            id: 7,
            position: [0.0, 1.0, 2.0],
            value: 21.5,
        }]));
        assert_eq!(full.encode().unwrap().len() - PREAMBLE_LEN, 20);
    }

    #[test]
    fn empty_sensor_delta_is_bare_preamble() {
        let bytes = Frame::Sensors(SensorsPayload::Delta(vec![])).encode().unwrap();
        assert_eq!(bytes, vec![0x44, 0x43, 1, 2, 0, 0, 0, 0]);
    }

    #[test]
    fn header_layout() {
        let h = Header {
            mode: Mode::Delta,
            tick: 0x0102030405060708,
            sensor_count: 35,
            particle_count: 30000,
            room: [4.0, 3.0, 2.5],
            band: 2,
        };
        let bytes = Frame::Header(h).encode().unwrap();
        assert_eq!(bytes.len(), PREAMBLE_LEN + HEADER_PAYLOAD_LEN);
        assert_eq!(bytes[8], 1);
        assert_eq!(&bytes[9..17], &[8, 7, 6, 5, 4, 3, 2, 1]);
        assert_eq!(&bytes[17..19], &35u16.to_le_bytes());
        assert_eq!(&bytes[19..23], &30000u32.to_le_bytes());
        assert_eq!(&bytes[23..27], &4.0f32.to_le_bytes());
        assert_eq!(bytes[35], 2);
        let (decoded, used) = decode_frame(&bytes, Mode::Full, DEFAULT_MAX_PAYLOAD).unwrap().unwrap();
        assert_eq!(used, bytes.len());
        assert_eq!(decoded, Frame::Header(h));
    }

    #[test]
    fn bad_magic_version_type() {
        assert_eq!(
            decode_frame(&[0, 0, 1, 5, 2, 0, 0, 0, 1, 0], Mode::Full, 64),
            Err(DecodeError::BadMagic([0, 0]))
        );
        assert_eq!(
            decode_frame(&[0x44, 0x43, 9], Mode::Full, 64),
            Err(DecodeError::UnsupportedVersion(9))
        );
        assert_eq!(
            decode_frame(&[0x44, 0x43, 1, 0], Mode::Full, 64),
            Err(DecodeError::UnknownFrameType(0))
        );
        assert_eq!(
            decode_frame(&[0x44, 0x43, 1, 3, 0xff, 0xff, 0xff, 0x7f], Mode::Full, 64),
            Err(DecodeError::LengthOverrun {
                len: 0x7fff_ffff,
                max: 64
            })
        );
    }

    #[test]
    fn truncated_header_needs_more() {
        let bytes = Frame::Header(Header {
            mode: Mode::Full,
            tick: 1,
            sensor_count: 1,
            particle_count: 1,
            room: [1.0; 3],
            band: 0,
        })
        .encode()
        .unwrap();
        for cut in 0..bytes.len() {
            assert_eq!(decode_frame(&bytes[..cut], Mode::Full, 64), Ok(None), "cut at {cut}");
        }
    }

    #[test]
    fn trailing_and_short_payloads() {
        let mut ack = Frame::Ack(Ack {
            acked_type: FrameType::Footer,
            status: AckStatus::Ok,
        })
        .encode()
        .unwrap();
        ack[4] = 3;
        ack.push(0);
        assert!(matches!(
            decode_frame(&ack, Mode::Full, 64),
            Err(DecodeError::TrailingBytes { extra: 1, .. })
        ));
        let short = [0x44, 0x43, 1, 4, 1, 0, 0, 0, 9];
        assert!(matches!(
            decode_frame(&short, Mode::Full, 64),
            Err(DecodeError::ShortPayload { .. })
        ));
        let ragged = [0x44, 0x43, 1, 3, 9, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9];
        assert!(matches!(
            decode_frame(&ragged, Mode::Delta, 64),
            Err(DecodeError::TrailingBytes { extra: 1, .. })
        ));
    }

    #[test]
    fn non_finite_floats_are_rejected_both_ways() {
        let f = Frame::Command(Command::SetViewpoint([f32::NAN, 0.0, 0.0]));
        assert!(matches!(f.encode(), Err(EncodeError::NonFinite(_))));
        let mut bytes = Frame::Command(Command::SetViewpoint([1.0, 0.0, 0.0])).encode().unwrap();
        bytes[9..13].copy_from_slice(&f32::INFINITY.to_le_bytes());
        assert!(matches!(
            decode_frame(&bytes, Mode::Full, 64),
            Err(DecodeError::NonFinite(_))
        ));
    }

    #[test]
    fn encode_enforces_payload_cap() {
        let big = Frame::Particles(ParticlesPayload::Delta(vec![ParticleDelta { id: 1, value: 1.0 }; 10]));
        assert!(matches!(
            big.encode_with_limit(16),
            Err(EncodeError::PayloadTooLarge { .. })
        ));
        assert!(matches!(
            wire_u16(70000, "sensor count"),
            Err(EncodeError::OutOfRange { .. })
        ));
    }

    #[test]
    fn decoder_switches_layout_on_header() {
        let mut dec = FrameDecoder::default();
        let header = Frame::Header(Header {
            mode: Mode::Delta,
            tick: 3,
            sensor_count: 0,
            particle_count: 0,
            room: [1.0; 3],
            band: 0,
        });
        let particles = Frame::Particles(ParticlesPayload::Delta(vec![ParticleDelta { id: 9, value: 2.0 }]));
        let mut stream = header.encode().unwrap();
        stream.extend(particles.encode().unwrap());
        let (f1, n1) = dec.decode(&stream).unwrap().unwrap();
        assert_eq!(f1, header);
        assert_eq!(dec.mode(), Mode::Delta);
        let (f2, _) = dec.decode(&stream[n1..]).unwrap().unwrap();
        assert_eq!(f2, particles);
    }
}
