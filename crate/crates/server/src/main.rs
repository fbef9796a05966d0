use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use thermocloud_core::ingest::SyntheticParams;
use thermocloud_core::lod::LodKind;
use thermocloud_core::protocol::{Command, Mode};
use thermocloud_server::client::{self, ClientError, Connection, ExportFormat, RunOptions};
use thermocloud_server::config::SourceConfig;
use thermocloud_server::{Engine, ServerConfig};
use tracing::info;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(
    name = "thermocloud",
    version,
    about = "Particle-grid temperature field server and client"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the streaming server.
    Serve(ServeArgs),
    /// Headless protocol client.
    #[command(subcommand)]
    Client(ClientCmd),
    /// Dump preprocessing products.
    #[command(subcommand)]
    Debug(DebugCmd),
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "config/default.toml")]
    config: PathBuf,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    ws_port: Option<u16>,
    #[arg(long)]
    tick_ms: Option<u64>,
    /// `synthetic`, or a readings CSV to replay.
    #[arg(long)]
    source: Option<String>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    lod_kind: Option<LodKind>,
}

#[derive(Subcommand)]
enum ClientCmd {
    /// Play a camera script and write a JSON-lines report.
    Run {
        #[arg(long, default_value = "127.0.0.1:7878")]
        connect: String,
        /// CSV `t_ms,x,y,z`, centimeters.
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Minimum number of cycles.
        #[arg(long, default_value_t = 1)]
        cycles: u64,
    },
    /// Mirror the field and write it as CSV or PLY.
    Export {
        #[arg(long, default_value = "127.0.0.1:7878")]
        connect: String,
        #[arg(long, default_value = "csv")]
        format: ExportFormat,
        #[arg(long)]
        out: PathBuf,
        /// Camera position `x,y,z` in centimeters.
        #[arg(long, value_parser = parse_viewpoint)]
        viewpoint: Option<[f32; 3]>,
    },
    /// Check checksums, delta soundness and band switching against a
    /// running server.
    Verify {
        #[arg(long, default_value = "127.0.0.1:7878")]
        connect: String,
        #[arg(long, default_value_t = 20)]
        cycles: usize,
        /// Server's value-change threshold.
        #[arg(long, default_value_t = 0.01)]
        epsilon: f32,
        /// Band configuration is read from this server config when given.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum DebugCmd {
    /// Weight map as `particle_id,kind,tet_or_sensor,w0,w1,w2,w3`.
    Weights {
        #[arg(long, default_value = "config/default.toml")]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One level of detail as `x,y,z,value`.
    Lod {
        #[arg(long, default_value = "config/default.toml")]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        band: usize,
        #[arg(long, default_value = "resolution")]
        kind: LodKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_viewpoint(s: &str) -> Result<[f32; 3], String> {
    let parts: Vec<f32> = s
        .split(',')
        .map(|p| p.trim().parse::<f32>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [x, y, z] if parts.iter().all(|v| v.is_finite()) => Ok([*x, *y, *z]),
        _ => Err(format!("expected three finite numbers `x,y,z`, got `{s}`")),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<ClientError>().map_or(1, ClientError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Cmd::Serve(args) => serve(args),
        Cmd::Client(cmd) => run_client(cmd),
        Cmd::Debug(cmd) => debug(cmd),
    }
}

fn serve(args: ServeArgs) -> Result<ExitCode> {
    let mut config = ServerConfig::load(&args.config)?;
    if let Some(p) = args.port {
        config.server.port = p;
    }
    if let Some(p) = args.ws_port {
        config.server.ws_port = p;
    }
    if let Some(t) = args.tick_ms {
        config.server.tick_ms = t;
    }
    if let Some(m) = args.mode {
        config.server.mode = m;
    }
    if let Some(k) = args.lod_kind {
        config.server.lod_kind = k;
    }
    match args.source.as_deref() {
        None => {}
        Some("synthetic") => {
            if !matches!(config.source, SourceConfig::Synthetic(_)) {
                config.source = SourceConfig::Synthetic(SyntheticParams::default());
            }
        }
        Some(path) => {
            config.source = SourceConfig::Csv {
                path: PathBuf::from(path),
                speed: 1.0,
                channel: thermocloud_core::ingest::DEFAULT_CHANNEL.to_string(),
            }
        }
    }
    config.validate()?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let server = thermocloud_server::start(config).await?;
        tokio::signal::ctrl_c().await?;
        info!("shutting down");
        server.shutdown().await;
        Ok(ExitCode::SUCCESS)
    })
}

fn writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn run_client(cmd: ClientCmd) -> Result<ExitCode> {
    match cmd {
        ClientCmd::Run {
            connect,
            script,
            report,
            cycles,
        } => {
            let steps = match &script {
                Some(p) => client::load_script(p)?,
                None => Vec::new(),
            };
            let mut out = writer(report.as_deref())?;
            let mut conn = Connection::connect(&connect)?;
            client::run_script(&mut conn, &steps, RunOptions { min_cycles: cycles }, &mut out)?;
            Ok(ExitCode::SUCCESS)
        }
        ClientCmd::Export {
            connect,
            format,
            out,
            viewpoint,
        } => {
            let mut conn = Connection::connect(&connect)?;
            conn.run_cycle(viewpoint.map(Command::SetViewpoint))?;
            if viewpoint.is_some() {
                conn.run_cycle(None)?;
            }
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            client::export(conn.mirror(), format, BufWriter::new(file))?;
            info!(particles = conn.mirror().particles().len(), out = %out.display(), "exported");
            Ok(ExitCode::SUCCESS)
        }
        ClientCmd::Verify {
            connect,
            cycles,
            epsilon,
            config,
        } => {
            let bands = match &config {
                Some(p) => ServerConfig::load(p)?.bands,
                None => Default::default(),
            };
            let input = client::collect_verify(&connect, cycles, epsilon, bands)?;
            let checks = client::verify(&input);
            let mut stdout = std::io::stdout().lock();
            for c in &checks {
                writeln!(stdout, "{}", serde_json::to_string(c)?)?;
            }
            Ok(if checks.iter().all(|c| c.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(6)
            })
        }
    }
}

fn debug(cmd: DebugCmd) -> Result<ExitCode> {
    match cmd {
        DebugCmd::Weights { config, out } => {
            let engine = Engine::new(&ServerConfig::load(&config)?)?;
            let mut w = writer(out.as_deref())?;
            engine.weights().write_csv(&mut w)?;
            w.flush()?;
        }
        DebugCmd::Lod {
            config,
            band,
            kind,
            out,
        } => {
            let engine = Engine::new(&ServerConfig::load(&config)?)?;
            let snapshot = engine.snapshot();
            if band >= snapshot.statics().bands.len() {
                bail!("band {band} out of range (0..{})", snapshot.statics().bands.len());
            }
            let level = snapshot.level(band, kind)?;
            let mut w = writer(out.as_deref())?;
            writeln!(w, "x,y,z,value")?;
            for (p, v) in level.wire.positions.iter().zip(&level.wire.values) {
                writeln!(w, "{},{},{},{v}", p[0], p[1], p[2])?;
            }
            w.flush()?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
