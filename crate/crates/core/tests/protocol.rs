mod common;

use std::time::Duration;

use proptest::prelude::*;
use thermocloud_core::ingest::{SyntheticParams, SyntheticStream};
use thermocloud_core::lod::{BandConfig, LodKind, LodLevel, LodPoint};
use thermocloud_core::protocol::{
    decode_frame, Ack, AckStatus, Command, Cycle, CycleInput, DecodeError, Footer, Frame, FrameDecoder, FrameType,
    Header, Mirror, Mode, Next, ParticleDelta, ParticleRecord, ParticlesPayload, SensorDelta, SensorRecord,
    SensorsPayload, SessionState, WireLevel, DEFAULT_MAX_PAYLOAD, PREAMBLE_LEN,
};
use thermocloud_core::segmentation::{interpolate, segment};
use thermocloud_core::Point;

fn fixture(name: &str) -> Vec<u8> {
    let path = format!("{}/../../fixtures/frames/{name}.hex", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{path}: {e}"))
        .split_whitespace()
        .map(|b| u8::from_str_radix(b, 16).unwrap())
        .collect()
}

fn golden() -> Vec<(&'static str, Mode, Frame)> {
    vec![
        (
            "ack_header_ok",
            Mode::Full,
            Frame::Ack(Ack {
                acked_type: FrameType::Header,
                status: AckStatus::Ok,
            }),
        ),
        (
            "ack_footer_error",
            Mode::Full,
            Frame::Ack(Ack {
                acked_type: FrameType::Footer,
                status: AckStatus::Error,
            }),
        ),
        (
            "header_full",
            Mode::Full,
            Frame::Header(Header {
                mode: Mode::Full,
                tick: 7,
                sensor_count: 35,
                particle_count: 30000,
                room: [4.0, 3.0, 2.5],
                band: 1,
            }),
        ),
        (
            "header_delta",
            Mode::Full,
            Frame::Header(Header {
                mode: Mode::Delta,
                tick: 8,
                sensor_count: 35,
                particle_count: 1875,
                room: [4.0, 3.0, 2.5],
                band: 3,
            }),
        ),
        (
            "sensors_full",
            Mode::Full,
            Frame::Sensors(SensorsPayload::Full(vec![SensorRecord {
                id: 3,
                position: [0.5, 1.5, 1.0],
                value: 21.5,
            }])),
        ),
        (
            "sensors_delta",
            Mode::Delta,
            Frame::Sensors(SensorsPayload::Delta(vec![SensorDelta { id: 3, value: 22.25 }])),
        ),
        (
            "sensors_delta_empty",
            Mode::Delta,
            Frame::Sensors(SensorsPayload::Delta(vec![])),
        ),
        (
            "particles_full",
            Mode::Full,
            Frame::Particles(ParticlesPayload::Full(vec![ParticleRecord {
                id: 7,
                position: [0.25, 0.5, 0.75],
                value: 21.5,
            }])),
        ),
        (
            "particles_delta",
            Mode::Delta,
            Frame::Particles(ParticlesPayload::Delta(vec![
                ParticleDelta { id: 7, value: 21.5 },
                ParticleDelta { id: 29999, value: -3.5 },
            ])),
        ),
        (
            "footer",
            Mode::Full,
            Frame::Footer(Footer {
                tick: 7,
                crc32: 0xDEAD_BEEF,
            }),
        ),
        (
            "command_set_viewpoint",
            Mode::Full,
            Frame::Command(Command::SetViewpoint([200.0, 150.0, 1125.0])),
        ),
        (
            "command_set_mode_delta",
            Mode::Full,
            Frame::Command(Command::SetMode(Mode::Delta)),
        ),
        ("command_request_full", Mode::Full, Frame::Command(Command::RequestFull)),
    ]
}

#[test]
fn golden_fixtures_encode_and_decode() {
    for (name, mode, frame) in golden() {
        let bytes = fixture(name);
        assert_eq!(frame.encode().unwrap(), bytes, "{name}");
        let (decoded, used) = decode_frame(&bytes, mode, DEFAULT_MAX_PAYLOAD).unwrap().unwrap();
        assert_eq!(used, bytes.len(), "{name}");
        assert_eq!(decoded, frame, "{name}");
    }
}

/// Bitwise reflected CRC-32 (IEEE 802.3).
fn crc32_oracle(data: &[u8]) -> u32 {
    let mut crc = 0xFFFF_FFFFu32;
    for &b in data {
        crc ^= b as u32;
        for _ in 0..8 {
            crc = if crc & 1 != 0 {
                (crc >> 1) ^ 0xEDB8_8320
            } else {
                crc >> 1
            };
        }
    }
    !crc
}

#[test]
fn crc_oracle_check_value() {
    assert_eq!(crc32_oracle(b"123456789"), 0xCBF4_3926);
}

fn finite() -> impl Strategy<Value = f32> {
    prop_oneof![
        -1.0e6f32..1.0e6,
        Just(0.0f32),
        Just(-0.0f32),
        Just(f32::MAX),
        Just(f32::MIN_POSITIVE)
    ]
}

fn xyz() -> impl Strategy<Value = [f32; 3]> {
    [finite(), finite(), finite()]
}

fn mode() -> impl Strategy<Value = Mode> {
    prop_oneof![Just(Mode::Full), Just(Mode::Delta)]
}

fn frame_type() -> impl Strategy<Value = FrameType> {
    (1u8..=6).prop_map(|t| FrameType::from_u8(t).unwrap())
}

/// Any valid frame plus the mode its payload layout needs.
fn any_frame() -> impl Strategy<Value = (Frame, Mode)> {
    prop_oneof![
        (mode(), any::<u64>(), any::<u16>(), any::<u32>(), xyz(), any::<u8>()).prop_map(
            |(mode, tick, sensor_count, particle_count, room, band)| (
                Frame::Header(Header {
                    mode,
                    tick,
                    sensor_count,
                    particle_count,
                    room,
                    band
                }),
                Mode::Full
            )
        ),
        prop::collection::vec((any::<u16>(), xyz(), finite()), 0..20).prop_map(|v| (
            Frame::Sensors(SensorsPayload::Full(
                v.into_iter()
                    .map(|(id, position, value)| SensorRecord { id, position, value })
                    .collect()
            )),
            Mode::Full
        )),
        prop::collection::vec((any::<u16>(), finite()), 0..20).prop_map(|v| (
            Frame::Sensors(SensorsPayload::Delta(
                v.into_iter().map(|(id, value)| SensorDelta { id, value }).collect()
            )),
            Mode::Delta
        )),
        prop::collection::vec((any::<u32>(), xyz(), finite()), 0..20).prop_map(|v| (
            Frame::Particles(ParticlesPayload::Full(
                v.into_iter()
                    .map(|(id, position, value)| ParticleRecord { id, position, value })
                    .collect()
            )),
            Mode::Full
        )),
        prop::collection::vec((any::<u32>(), finite()), 0..20).prop_map(|v| (
            Frame::Particles(ParticlesPayload::Delta(
                v.into_iter().map(|(id, value)| ParticleDelta { id, value }).collect()
            )),
            Mode::Delta
        )),
        (any::<u64>(), any::<u32>()).prop_map(|(tick, crc32)| (Frame::Footer(Footer { tick, crc32 }), Mode::Full)),
        (frame_type(), any::<bool>()).prop_map(|(acked_type, err)| (
            Frame::Ack(Ack {
                acked_type,
                status: if err { AckStatus::Error } else { AckStatus::Ok }
            }),
            Mode::Full
        )),
        xyz().prop_map(|p| (Frame::Command(Command::SetViewpoint(p)), Mode::Full)),
        mode().prop_map(|m| (Frame::Command(Command::SetMode(m)), Mode::Full)),
        Just((Frame::Command(Command::RequestFull), Mode::Full)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3000))]

    #[test]
    fn decode_inverts_encode((frame, mode) in any_frame()) {
        let bytes = frame.encode().unwrap();
        let (back, used) = decode_frame(&bytes, mode, DEFAULT_MAX_PAYLOAD).unwrap().unwrap();
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(&back, &frame);
        for cut in [0, 1, 4, PREAMBLE_LEN - 1, bytes.len().saturating_sub(1)] {
            if cut < bytes.len() {
                prop_assert_eq!(decode_frame(&bytes[..cut], mode, DEFAULT_MAX_PAYLOAD), Ok(None));
            }
        }
    }

    #[test]
    fn decode_is_total_on_random_bytes(bytes in prop::collection::vec(any::<u8>(), 0..64), delta in any::<bool>()) {
        let mode = if delta { Mode::Delta } else { Mode::Full };
        if let Ok(Some((_, used))) = decode_frame(&bytes, mode, 1024) {
            prop_assert!(used <= bytes.len());
        }
    }

    #[test]
    fn decode_is_total_on_mutated_frames((frame, mode) in any_frame(), at in any::<prop::sample::Index>(), byte in any::<u8>()) {
        let mut bytes = frame.encode().unwrap();
        let i = at.index(bytes.len());
        bytes[i] = byte;
        if let Ok(Some((_, used))) = decode_frame(&bytes, mode, DEFAULT_MAX_PAYLOAD) {
            prop_assert!(used <= bytes.len());
        }
    }
}

#[test]
fn distinct_errors_for_distinct_faults() {
    let ok = fixture("ack_header_ok");
    let mut magic = ok.clone();
    magic[1] = 0;
    let mut version = ok.clone();
    version[2] = 2;
    let mut ty = ok.clone();
    ty[3] = 7;
    let mut trailing = ok.clone();
    trailing[4] = 3;
    trailing.push(0);
    let errs = [
        decode_frame(&magic, Mode::Full, 64).unwrap_err(),
        decode_frame(&version, Mode::Full, 64).unwrap_err(),
        decode_frame(&ty, Mode::Full, 64).unwrap_err(),
        decode_frame(&[0x44, 0x43, 1, 3, 0, 0, 1, 0], Mode::Full, 64).unwrap_err(),
        decode_frame(&trailing, Mode::Full, 64).unwrap_err(),
    ];
    assert!(matches!(errs[0], DecodeError::BadMagic(_)));
    assert!(matches!(errs[1], DecodeError::UnsupportedVersion(2)));
    assert!(matches!(errs[2], DecodeError::UnknownFrameType(7)));
    assert!(matches!(errs[3], DecodeError::LengthOverrun { .. }));
    assert!(matches!(errs[4], DecodeError::TrailingBytes { .. }));
}

fn ack(t: FrameType) -> Frame {
    Frame::Ack(Ack {
        acked_type: t,
        status: AckStatus::Ok,
    })
}

/// Drives one cycle through a decoder and mirror; the client closes with
/// `closing` (an ACK or a COMMAND).
fn deliver(session: &mut SessionState, cycle: &Cycle, mirror: &mut Mirror, closing: Frame) {
    let mut dec = FrameDecoder::default();
    for ft in [
        FrameType::Header,
        FrameType::Sensors,
        FrameType::Particles,
        FrameType::Footer,
    ] {
        let bytes = cycle.frame(ft).unwrap();
        let (frame, used) = dec.decode(bytes).unwrap().unwrap();
        assert_eq!(used, bytes.len());
        mirror.apply(&frame, used, &bytes[PREAMBLE_LEN..]).unwrap();
        let reply = if ft == FrameType::Footer {
            closing.clone()
        } else {
            ack(ft)
        };
        let next = session.on_frame(&reply).unwrap();
        if ft == FrameType::Footer {
            assert_eq!(next, Next::CycleComplete);
        }
    }
}

#[test]
fn mirror_tracks_server_through_delta_cycles() {
    let mut grid = common::grid();
    let set = common::sensors();
    let (_, wm, _) = segment(&grid, &set).unwrap();
    let mut stream = SyntheticStream::new(&set, SyntheticParams::default(), Duration::from_millis(500)).unwrap();
    let target = Point::new(200.0, 150.0, 125.0);
    let view = Point::new(200.0 + 700.0, 150.0, 125.0);
    let mut session = SessionState::new(Mode::Delta, view, target, BandConfig::default(), 0.0).unwrap();
    let mut mirror = Mirror::new();
    let mut modes = Vec::new();
    for tick in 0..21u64 {
        let batch = stream.next_batch();
        interpolate(&wm, &batch.readings, &mut grid).unwrap();
        let sensors: Vec<SensorRecord> = set
            .sorted_by_id()
            .iter()
            .map(|s| {
                let p = s.position();
                SensorRecord {
                    id: s.id.0,
                    position: [p.x as f32, p.y as f32, p.z as f32],
                    value: batch.readings.get(s.id).unwrap() as f32,
                }
            })
            .collect();
        let points = (0..grid.len())
            .map(|p| LodPoint {
                position: grid.position(p),
                value: grid.values()[p],
            })
            .collect();
        let level = LodLevel::new(LodKind::Resolution, points, Some((0..grid.len() as u32).collect())).with_band(1);
        let wire = WireLevel::from_level(&level).unwrap();
        let cycle = session
            .start_cycle(&CycleInput {
                tick,
                room: [4.0, 3.0, 2.5],
                sensors: &sensors,
                level: &wire,
                schedule: None,
                max_payload: DEFAULT_MAX_PAYLOAD,
            })
            .unwrap();
        modes.push(cycle.mode);
        deliver(&mut session, &cycle, &mut mirror, ack(FrameType::Footer));
        for (i, &id) in wire.ids.iter().enumerate() {
            assert_eq!(
                mirror.particles()[&id].value,
                wire.values[i],
                "tick {tick} particle {id}"
            );
        }
        for s in &sensors {
            assert_eq!(mirror.sensors()[&s.id].value, s.value);
        }
    }
    assert_eq!(modes[0], Mode::Full);
    assert!(modes[1..].iter().all(|m| *m == Mode::Delta));
}

#[test]
fn single_change_costs_eight_bytes_against_six_hundred_thousand() {
    let n = 30000u32;
    let mk = |bump: bool| {
        let points = (0..n)
            .map(|i| LodPoint {
                position: Point::new(i as f64, 0.0, 0.0),
                value: if bump && i == 12345 { 25.0 } else { 20.0 },
            })
            .collect();
        WireLevel::from_level(&LodLevel::new(LodKind::Resolution, points, Some((0..n).collect())).with_band(1)).unwrap()
    };
    let (base, bumped) = (mk(false), mk(true));
    let target = Point::new(0.0, 0.0, 0.0);
    let mut session = SessionState::new(
        Mode::Delta,
        Point::new(700.0, 0.0, 0.0),
        target,
        BandConfig::default(),
        0.01,
    )
    .unwrap();
    let mut mirror = Mirror::new();
    let input = |level| CycleInput {
        tick: 0,
        room: [4.0, 3.0, 2.5],
        sensors: &[],
        level,
        schedule: None,
        max_payload: DEFAULT_MAX_PAYLOAD,
    };
    let full = session.start_cycle(&input(&base)).unwrap();
    deliver(&mut session, &full, &mut mirror, ack(FrameType::Footer));
    let delta = session
        .start_cycle(&CycleInput {
            tick: 1,
            ..input(&bumped)
        })
        .unwrap();
    deliver(&mut session, &delta, &mut mirror, ack(FrameType::Footer));
    assert_eq!(full.payload_len(FrameType::Particles), 600_000);
    assert_eq!(delta.payload_len(FrameType::Particles), 8);
    assert_eq!(
        crc32_oracle(&[&delta.sensors[PREAMBLE_LEN..], &delta.particles[PREAMBLE_LEN..]].concat()),
        u32::from_le_bytes(delta.footer[PREAMBLE_LEN + 8..].try_into().unwrap())
    );
}
