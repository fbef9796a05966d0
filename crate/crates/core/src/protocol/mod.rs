//! Binary wire protocol: frame codec, per-client session state machine,
//! delta bookkeeping and the client-side mirror.

pub mod delta;
pub mod frame;
pub mod mirror;
pub mod session;

pub use delta::{changed_records, commit, is_changed, SentValues};
pub use frame::{
    decode_frame, decode_payload, decode_preamble, encode_raw, Ack, AckStatus, Command, DecodeError, EncodeError,
    Footer, Frame, FrameDecoder, FrameType, Header, Mode, ParticleDelta, ParticleRecord, ParticlesPayload, SensorDelta,
    SensorRecord, SensorsPayload, DEFAULT_MAX_PAYLOAD, PREAMBLE_LEN,
};
pub use mirror::{CycleReport, Mirror, MirrorError, MirrorPoint};
pub use session::{Cycle, CycleInput, Next, Phase, SessionError, SessionState, WireLevel};
