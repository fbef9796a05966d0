//! Headless reference client: runs the protocol over TCP, mirrors the
//! field, plays camera scripts, exports the mirror and checks the server's
//! invariants.

use std::collections::{BTreeMap, VecDeque};
use std::io::{self, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::Path;
use std::time::{Duration, Instant};

use serde::Serialize;
use thermocloud_core::lod::{select_band, BandConfig};
use thermocloud_core::protocol::{
    Ack, AckStatus, Command, CycleReport, DecodeError, Frame, FrameDecoder, FrameType, Mirror, MirrorError, Mode,
    DEFAULT_MAX_PAYLOAD, PREAMBLE_LEN,
};
use thermocloud_core::Point;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("connection refused by {0}")]
    Refused(String),
    #[error("connection lost: {0}")]
    ConnectionLost(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("checksum mismatch at tick {tick}: footer {expected:#010x}, payloads {actual:#010x}")]
    Checksum { tick: u64, expected: u32, actual: u32 },
    #[error("script line {line}: {message}")]
    Script { line: u64, message: String },
    #[error("mirror holds no complete cycle; run at least one full-mode cycle before exporting")]
    IncompleteMirror,
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

impl ClientError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            ClientError::Refused(_) => 2,
            ClientError::Protocol(_) => 3,
            ClientError::Checksum { .. } => 4,
            ClientError::ConnectionLost(_) => 5,
            _ => 1,
        }
    }
}

impl From<DecodeError> for ClientError {
    fn from(e: DecodeError) -> Self {
        ClientError::Protocol(e.to_string())
    }
}

impl From<MirrorError> for ClientError {
    fn from(e: MirrorError) -> Self {
        match e {
            MirrorError::Checksum { tick, expected, actual } => ClientError::Checksum { tick, expected, actual },
            other => ClientError::Protocol(other.to_string()),
        }
    }
}

fn lost(e: io::Error) -> ClientError {
    ClientError::ConnectionLost(e.to_string())
}

/// One protocol connection with its mirror.
#[derive(Debug)]
pub struct Connection {
    stream: TcpStream,
    buf: Vec<u8>,
    decoder: FrameDecoder,
    mirror: Mirror,
}

impl Connection {
    pub fn connect(addr: &str) -> Result<Self, ClientError> {
        let addrs: Vec<_> = addr
            .to_socket_addrs()
            .map_err(|e| ClientError::Refused(format!("{addr}: {e}")))?
            .collect();
        let mut last = None;
        for a in addrs {
            match TcpStream::connect(a) {
                Ok(stream) => return Connection::from_stream(stream),
                Err(e) => last = Some(e),
            }
        }
        Err(ClientError::Refused(match last {
            Some(e) => format!("{addr}: {e}"),
            None => format!("{addr}: no address"),
        }))
    }

    pub fn from_stream(stream: TcpStream) -> Result<Self, ClientError> {
        stream.set_nodelay(true)?;
        Ok(Connection {
            stream,
            buf: Vec::with_capacity(1 << 16),
            decoder: FrameDecoder::new(DEFAULT_MAX_PAYLOAD),
            mirror: Mirror::new(),
        })
    }

    /// Gives up on a silent server after `timeout`.
    pub fn set_timeout(&self, timeout: Option<Duration>) -> Result<(), ClientError> {
        self.stream.set_read_timeout(timeout)?;
        Ok(())
    }

    pub fn mirror(&self) -> &Mirror {
        &self.mirror
    }

    pub fn mirror_mut(&mut self) -> &mut Mirror {
        &mut self.mirror
    }

    fn send(&mut self, frame: &Frame) -> Result<(), ClientError> {
        let bytes = frame.encode().map_err(|e| ClientError::Protocol(e.to_string()))?;
        self.stream.write_all(&bytes).map_err(lost)
    }

    fn next_frame(&mut self) -> Result<(FrameType, Option<CycleReport>), ClientError> {
        loop {
            if let Some((frame, used)) = self.decoder.decode(&self.buf)? {
                let report = self.mirror.apply(&frame, used, &self.buf[PREAMBLE_LEN..used]);
                self.buf.drain(..used);
                return Ok((frame.frame_type(), report?));
            }
            let mut chunk = [0u8; 1 << 16];
            let n = self.stream.read(&mut chunk).map_err(lost)?;
            if n == 0 {
                return Err(ClientError::ConnectionLost("server closed the connection".into()));
            }
            self.buf.extend_from_slice(&chunk[..n]);
        }
    }

    /// Receives one full cycle, acknowledging each frame. `command`, if
    /// any, answers the FOOTER in place of its ACK.
    pub fn run_cycle(&mut self, command: Option<Command>) -> Result<CycleReport, ClientError> {
        let expected = [
            FrameType::Header,
            FrameType::Sensors,
            FrameType::Particles,
            FrameType::Footer,
        ];
        let mut report = None;
        for ft in expected {
            let (got, cycle) = self.next_frame()?;
            if got != ft {
                return Err(ClientError::Protocol(format!("expected {ft}, got {got}")));
            }
            if ft == FrameType::Footer {
                report = cycle;
                match command {
                    Some(c) => self.send(&Frame::Command(c))?,
                    None => self.ack(ft)?,
                }
            } else {
                self.ack(ft)?;
            }
        }
        report.ok_or_else(|| ClientError::Protocol("cycle ended without a report".into()))
    }

    fn ack(&mut self, acked_type: FrameType) -> Result<(), ClientError> {
        self.send(&Frame::Ack(Ack {
            acked_type,
            status: AckStatus::Ok,
        }))
    }
}

/// A camera script entry: send `viewpoint` (centimeters) once `t_ms` has
/// elapsed since the run started.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptStep {
    pub t_ms: u64,
    pub viewpoint: [f32; 3],
}

/// Parses a `t_ms,x,y,z` CSV with a header row.
pub fn parse_script<R: Read>(reader: R) -> Result<Vec<ScriptStep>, ClientError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut steps = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| ClientError::Script {
            line,
            message: e.to_string(),
        })?;
        if rec.len() != 4 {
            return Err(ClientError::Script {
                line,
                message: format!("expected 4 fields (t_ms,x,y,z), got {}", rec.len()),
            });
        }
        let t_ms = rec[0].parse::<u64>().map_err(|e| ClientError::Script {
            line,
            message: format!("t_ms `{}`: {e}", &rec[0]),
        })?;
        let mut viewpoint = [0f32; 3];
        for (k, v) in viewpoint.iter_mut().enumerate() {
            let s = &rec[k + 1];
            *v = s
                .parse::<f32>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| ClientError::Script {
                    line,
                    message: format!("coordinate `{s}` is not a finite number"),
                })?;
        }
        if steps.last().is_some_and(|p: &ScriptStep| p.t_ms > t_ms) {
            return Err(ClientError::Script {
                line,
                message: "t_ms must not decrease".into(),
            });
        }
        steps.push(ScriptStep { t_ms, viewpoint });
    }
    Ok(steps)
}

pub fn load_script(path: &Path) -> Result<Vec<ScriptStep>, ClientError> {
    let file = std::fs::File::open(path)?;
    parse_script(file)
}

/// One JSON line of a run report.
#[derive(Debug, Clone, Serialize)]
pub struct ReportLine {
    pub cycle: u64,
    pub elapsed_ms: u64,
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
    /// Viewpoint sent in answer to this cycle's FOOTER.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<[f32; 3]>,
}

impl ReportLine {
    fn new(cycle: u64, elapsed: Duration, r: &CycleReport, command: Option<[f32; 3]>) -> Self {
        ReportLine {
            cycle,
            elapsed_ms: elapsed.as_millis() as u64,
            tick: r.tick,
            mode: r.mode,
            band: r.band,
            sensor_count: r.sensor_count,
            particle_count: r.particle_count,
            sensor_records: r.sensor_records,
            particle_records: r.particle_records,
            header_bytes: r.header_bytes,
            sensors_bytes: r.sensors_bytes,
            particles_bytes: r.particles_bytes,
            footer_bytes: r.footer_bytes,
            command,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep cycling at least this many times.
    pub min_cycles: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { min_cycles: 1 }
    }
}

/// Plays `script` over `conn`. Due steps are sent first-in first-out, one
/// per FOOTER; the run ends one cycle after the last step, and not before
/// `min_cycles`. Every cycle is written to `report` and flushed, so a
/// failed run leaves the cycles it completed.
pub fn run_script<W: Write>(
    conn: &mut Connection,
    script: &[ScriptStep],
    options: RunOptions,
    report: &mut W,
) -> Result<Vec<ReportLine>, ClientError> {
    let started = Instant::now();
    let mut pending: VecDeque<ScriptStep> = script.iter().copied().collect();
    let mut lines = Vec::new();
    let mut cycle = 0u64;
    loop {
        let elapsed = started.elapsed().as_millis() as u64;
        let step = match pending.front() {
            Some(s) if s.t_ms <= elapsed => pending.pop_front(),
            _ => None,
        };
        let r = conn.run_cycle(step.map(|s| Command::SetViewpoint(s.viewpoint)))?;
        cycle += 1;
        let line = ReportLine::new(cycle, started.elapsed(), &r, step.map(|s| s.viewpoint));
        serde_json::to_writer(&mut *report, &line).map_err(io::Error::from)?;
        report.write_all(b"\n")?;
        report.flush()?;
        lines.push(line);
        // the cycle after the last command shows its effect
        if pending.is_empty() && step.is_none() && cycle >= options.min_cycles {
            break;
        }
    }
    Ok(lines)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Ply,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "ply" => Ok(ExportFormat::Ply),
            other => Err(format!("unknown format `{other}` (csv | ply)")),
        }
    }
}

/// Writes the mirrored particles in id order as `x,y,z,value` CSV or an
/// ASCII PLY point cloud, positions in meters.
pub fn export<W: Write>(mirror: &Mirror, format: ExportFormat, mut out: W) -> Result<(), ClientError> {
    if !mirror.is_complete() {
        return Err(ClientError::IncompleteMirror);
    }
    let particles = mirror.particles();
    match format {
        ExportFormat::Csv => {
            writeln!(out, "x,y,z,value")?;
            for p in particles.values() {
                let [x, y, z] = p.position;
                writeln!(out, "{x},{y},{z},{}", p.value)?;
            }
        }
        ExportFormat::Ply => {
            writeln!(out, "ply")?;
            writeln!(out, "format ascii 1.0")?;
            writeln!(out, "element vertex {}", particles.len())?;
            for prop in ["x", "y", "z", "value"] {
                writeln!(out, "property float {prop}")?;
            }
            writeln!(out, "end_header")?;
            for p in particles.values() {
                let [x, y, z] = p.position;
                writeln!(out, "{x} {y} {z} {}", p.value)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// A completed cycle as seen by one connection.
#[derive(Debug, Clone)]
pub struct Observation {
    pub report: CycleReport,
    /// Command sent in answer to this cycle's FOOTER.
    pub sent: Option<Command>,
    /// Mirrored particle values after the cycle.
    pub values: BTreeMap<u32, f32>,
}

/// What [`verify`] checks: a delta-mode connection that moved its camera
/// and a full-mode connection at the same final camera position.
#[derive(Debug, Clone)]
pub struct VerifyInput {
    pub delta: Vec<Observation>,
    pub full: Vec<Observation>,
    /// Checksum failures seen by either connection.
    pub checksum_errors: Vec<String>,
    pub epsilon: f32,
    pub bands: BandConfig,
    /// Band selection target in centimeters.
    pub target: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Checksums, delta soundness against the full-mode stream at common ticks,
/// and band switches one cycle after each threshold-crossing command.
pub fn verify(input: &VerifyInput) -> Vec<Check> {
    let mut checks = Vec::new();
    let cycles = input.delta.len() + input.full.len();
    checks.push(Check {
        name: "checksum",
        passed: input.checksum_errors.is_empty() && cycles > 0,
        detail: if input.checksum_errors.is_empty() {
            format!("{cycles} cycles matched their footer CRC")
        } else {
            input.checksum_errors.join("; ")
        },
    });
    checks.push(delta_soundness(input));
    checks.push(band_switches(input));
    checks
}

fn delta_soundness(input: &VerifyInput) -> Check {
    let name = "delta_soundness";
    let first_full = input.delta.iter().position(|o| o.report.mode == Mode::Full);
    let Some(first_full) = first_full else {
        return Check {
            name,
            passed: false,
            detail: "delta connection saw no full cycle".into(),
        };
    };
    let full_by_tick: BTreeMap<u64, &Observation> = input
        .full
        .iter()
        .filter(|o| o.report.mode == Mode::Full)
        .map(|o| (o.report.tick, o))
        .collect();
    let mut compared = 0;
    let tolerance = input.epsilon + 1e-6;
    for obs in &input.delta[first_full + 1..] {
        if obs.report.mode != Mode::Delta {
            continue;
        }
        let Some(reference) = full_by_tick.get(&obs.report.tick) else {
            continue;
        };
        if reference.report.band != obs.report.band {
            continue;
        }
        compared += 1;
        if reference.values.len() != obs.values.len() {
            return Check {
                name,
                passed: false,
                detail: format!(
                    "tick {}: delta mirror holds {} particles, full snapshot {}",
                    obs.report.tick,
                    obs.values.len(),
                    reference.values.len()
                ),
            };
        }
        for (id, &full) in &reference.values {
            let mirrored = obs.values.get(id).copied();
            let ok = mirrored.is_some_and(|v| (v - full).abs() <= tolerance);
            if !ok {
                return Check {
                    name,
                    passed: false,
                    detail: format!(
                        "tick {}: particle {id} mirrored {} vs full {full}",
                        obs.report.tick,
                        mirrored.map_or("missing".to_string(), |v| v.to_string())
                    ),
                };
            }
        }
    }
    if compared == 0 {
        return Check {
            name,
            passed: false,
            detail: "no delta cycle shares a tick and band with the full-mode stream".into(),
        };
    }
    Check {
        name,
        passed: true,
        detail: format!("{compared} delta cycles within {} of the full snapshot", input.epsilon),
    }
}

fn band_switches(input: &VerifyInput) -> Check {
    let name = "band_switch";
    let mut switches = 0;
    for (i, obs) in input.delta.iter().enumerate() {
        let Some(Command::SetViewpoint(v)) = obs.sent else {
            continue;
        };
        let viewpoint = Point::new(v[0] as f64, v[1] as f64, v[2] as f64);
        let expected = select_band(&viewpoint, &input.target, &input.bands);
        if expected == obs.report.band as usize {
            continue;
        }
        switches += 1;
        match input.delta.get(i + 1) {
            Some(next) if next.report.band as usize == expected => {}
            Some(next) => {
                return Check {
                    name,
                    passed: false,
                    detail: format!(
                        "viewpoint {v:?} after tick {} should select band {expected}, next header has band {}",
                        obs.report.tick, next.report.band
                    ),
                }
            }
            None => {
                return Check {
                    name,
                    passed: false,
                    detail: format!("no cycle observed after the viewpoint {v:?} command"),
                }
            }
        }
    }
    Check {
        name,
        passed: switches > 0,
        detail: if switches > 0 {
            format!("{switches} threshold crossings each switched band on the next cycle")
        } else {
            "no viewpoint command crossed a band threshold".into()
        },
    }
}

/// A viewpoint `distance` centimeters from the room center along +x.
pub fn viewpoint_at(room_m: [f32; 3], distance: f32) -> [f32; 3] {
    [room_m[0] * 50.0 + distance, room_m[1] * 50.0, room_m[2] * 50.0]
}

/// Runs `commands` (one per FOOTER, in order) then idles until `cycles`
/// cycles have completed, recording each cycle.
fn observe(
    conn: &mut Connection,
    mut commands: VecDeque<Command>,
    cycles: usize,
    checksum_errors: &mut Vec<String>,
) -> Result<Vec<Observation>, ClientError> {
    let mut out = Vec::with_capacity(cycles);
    while out.len() < cycles {
        let sent = commands.pop_front();
        let report = match conn.run_cycle(sent) {
            Ok(r) => r,
            Err(e @ ClientError::Checksum { .. }) => {
                checksum_errors.push(e.to_string());
                return Ok(out);
            }
            Err(e) => return Err(e),
        };
        let values = conn.mirror().particles().iter().map(|(&id, p)| (id, p.value)).collect();
        out.push(Observation { report, sent, values });
    }
    Ok(out)
}

/// Collects [`VerifyInput`] from a live server with two connections: one in
/// delta mode stepping through two band changes, one in full mode parked at
/// the delta connection's final viewpoint.
pub fn collect_verify(addr: &str, cycles: usize, epsilon: f32, bands: BandConfig) -> Result<VerifyInput, ClientError> {
    let mut a = Connection::connect(addr)?;
    let mut b = Connection::connect(addr)?;
    let timeout = Some(Duration::from_secs(30));
    a.set_timeout(timeout)?;
    b.set_timeout(timeout)?;

    // the first cycle tells us the room, and with it the target
    let mut a_errors = Vec::new();
    let mut b_errors = Vec::new();
    let first = observe(
        &mut a,
        VecDeque::from([Command::SetMode(Mode::Delta)]),
        1,
        &mut a_errors,
    )?;
    let room = a.mirror().header().map(|h| h.room).unwrap_or([0.0; 3]);
    let target = Point::new(room[0] as f64 * 50.0, room[1] as f64 * 50.0, room[2] as f64 * 50.0);
    let thresholds = &bands.thresholds;
    let pick = |band: usize| -> f32 {
        let lo = if band == 0 { 0.0 } else { thresholds[band - 1] };
        let hi = thresholds.get(band).copied().unwrap_or(lo + 1000.0);
        ((lo + hi) / 2.0) as f32
    };
    let last = bands.len().saturating_sub(1);
    let mid = last.saturating_sub(1);
    let near = viewpoint_at(room, pick(mid));
    let far = viewpoint_at(room, pick(last));

    let a_cmds = VecDeque::from([Command::SetViewpoint(near), Command::SetViewpoint(far)]);
    let b_cmds = VecDeque::from([Command::SetMode(Mode::Full), Command::SetViewpoint(far)]);
    let (a_obs, b_obs) = std::thread::scope(|s| {
        let ha = s.spawn(|| observe(&mut a, a_cmds, cycles, &mut a_errors));
        let hb = s.spawn(|| observe(&mut b, b_cmds, cycles + 1, &mut b_errors));
        (ha.join(), hb.join())
    });
    let mut delta = first;
    delta.extend(a_obs.map_err(|_| ClientError::Protocol("delta connection thread panicked".into()))??);
    let full = b_obs.map_err(|_| ClientError::Protocol("full connection thread panicked".into()))??;
    a_errors.extend(b_errors);
    Ok(VerifyInput {
        delta,
        full,
        checksum_errors: a_errors,
        epsilon,
        bands,
        target,
    })
}
