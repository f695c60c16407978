//! The `bodynet` command.
//!
//! Every subcommand writes stable `key=value` lines to stdout so its output
//! can be diffed or grepped. Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | validation or decoding failure (including any rejected frame) |
//! | 2 | local I/O failure |
//! | 3 | network failure |

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use bodynet_core::emg::{analyze, analyze_pair, EmgConfig, SampleSeries};
use bodynet_core::fixtures::{hxm_fields_into, shimmer_fields_into};
use bodynet_core::framer::FramerState;
use bodynet_core::hxm::Hxm;
use bodynet_core::kv::KvMap;
use bodynet_core::metrics::SessionSummary;
use bodynet_core::shimmer::Shimmer;
use bodynet_core::sim::Scenario;
use bodynet_core::status::format_status;
use bodynet_core::wire::{ApiError, ShareReceipt, ShareRequest, WorkoutReceipt};
use bodynet_core::{Protocol, Session};
use bodynet_gateway::{run_from_config, upload, upload_pending, GatewayConfig, GatewayError, UploadError};
use bodynet_server::{state_from_config, ServerConfig, ServerHandle, StartError};
use clap::{Args, Parser, Subcommand, ValueEnum};
use uuid::Uuid;

pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NETWORK: i32 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn invalid(message: impl fmt::Display) -> Self {
        Self { code: EXIT_INVALID, message: message.to_string() }
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        Self { code: EXIT_IO, message: format!("{}: {e}", path.display()) }
    }

    pub fn network(message: impl fmt::Display) -> Self {
        Self { code: EXIT_NETWORK, message: message.to_string() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Parser)]
#[command(name = "bodynet", version, about = "Body sensor network telemetry toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a sensor byte stream and its ground truth from a profile.
    Simulate(SimulateArgs),
    /// Frame and decode a recorded byte stream.
    Decode(DecodeArgs),
    /// EMG signal analysis.
    Emg {
        #[command(subcommand)]
        command: EmgCommand,
    },
    /// Run the ingestion service until interrupted.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Record one gateway session from the configured sources.
    Session {
        #[arg(long)]
        config: PathBuf,
        /// Upload the finished session. Without it nothing leaves this machine.
        #[arg(long)]
        post: bool,
    },
    /// Upload every recorded session that has no receipt yet.
    Upload {
        #[arg(long)]
        config: PathBuf,
    },
    /// Post a stored workout's status line to a webhook through the service.
    Share(ShareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    Hxm,
    Shimmer,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Hxm => Protocol::Hxm,
            ProtocolArg::Shimmer => Protocol::Shimmer,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub protocol: ProtocolArg,
    /// Scenario file (`key=value`).
    #[arg(long)]
    pub profile: PathBuf,
    #[arg(long)]
    pub duration: f64,
    /// Overrides the profile's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Ground truth (`key=value`). For EMG the generated series is written
    /// alongside it with an `.emg` suffix.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Emit {
    /// Every decoded frame's fields, keyed by frame index.
    Fields,
    /// The folded session summary.
    Summary,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    pub protocol: ProtocolArg,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "summary")]
    pub emit: Emit,
}

#[derive(Debug, Subcommand)]
pub enum EmgCommand {
    /// Analyse a sample series, or a raw Shimmer stream.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Contralateral channel for the symmetry ratio.
    #[arg(long)]
    pub right: Option<PathBuf>,
    /// Also write the report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Fixed activation threshold; the default derives it from the first second.
    #[arg(long)]
    pub threshold_mv: Option<f64>,
    #[arg(long)]
    pub smooth_window_s: Option<f64>,
    #[arg(long)]
    pub min_activation_s: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ShareArgs {
    #[arg(long)]
    pub workout: Uuid,
    #[arg(long)]
    pub webhook: String,
    /// Base URL of the ingestion service.
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    pub server: String,
    #[arg(long)]
    pub token: String,
    /// Owner of the workout.
    #[arg(long)]
    pub user: Uuid,
    #[arg(long)]
    pub idempotency_key: Option<String>,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&a, out),
        Command::Decode(a) => decode(&a, out),
        Command::Emg { command: EmgCommand::Analyze(a) } => emg_analyze(&a, out),
        Command::Serve { config } => serve(&config, out),
        Command::Session { config, post } => session(&config, post, out),
        Command::Upload { config } => upload_all(&config, out),
        Command::Share(a) => share(&a, out),
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

fn base_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Stable `key=value` rendering of a summary. EMG keys carry an `emg.` prefix.
pub fn summary_kv(s: &SessionSummary) -> String {
    let d = &s.diagnostics;
    let mut kv = KvMap::default();
    kv.insert("duration_s", s.duration_s);
    kv.insert("avg_hr_bpm", opt(s.avg_hr_bpm));
    kv.insert("msg_avg_hr_bpm", opt(s.msg_avg_hr_bpm));
    kv.insert("min_hr_bpm", opt(s.min_hr_bpm));
    kv.insert("max_hr_bpm", opt(s.max_hr_bpm));
    kv.insert("distance_m", s.distance_m);
    kv.insert("strides_total", s.strides_total);
    kv.insert("beats_total", s.beats_total);
    kv.insert("beats_unrecovered", s.beats_unrecovered);
    kv.insert("loss_fraction", s.loss_fraction);
    kv.insert("frames_ok", d.frames_ok);
    kv.insert("frames_rejected", d.frames_rejected);
    kv.insert("bytes_skipped", d.bytes_skipped);
    kv.insert("unknown_type_packets", d.unknown_type_packets);
    kv.insert("sequence_gaps", d.sequence_gaps);
    kv.insert("low_battery", d.low_battery);
    let mut text = kv.to_text();
    if let Some(r) = &s.emg {
        for line in r.to_kv().lines() {
            text.push_str("emg.");
            text.push_str(line);
            text.push('\n');
        }
    }
    text
}

fn simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let mut scenario = Scenario::parse(&read_text(&a.profile)?).map_err(CliError::invalid)?;
    let protocol = Protocol::from(a.protocol);
    if scenario.protocol() != protocol {
        return Err(CliError::invalid(format!(
            "{} describes a {} stream, not {protocol}",
            a.profile.display(),
            scenario.protocol()
        )));
    }
    if let Some(seed) = a.seed {
        scenario.set_seed(seed);
    }
    let (bytes, truth) = scenario.generate(a.duration).map_err(CliError::invalid)?;
    write_file(&a.out, &bytes)?;
    if let Some(path) = &a.truth {
        write_file(path, truth.to_kv().as_bytes())?;
        if let Some(series) = &truth.emg_series {
            write_file(&emg_path(path), series.to_text().as_bytes())?;
        }
    }
    emit(
        out,
        &format!("protocol={protocol}\nframes={}\nbytes={}\nout={}\n", truth.frames, bytes.len(), a.out.display()),
    )
}

/// Where `simulate` puts the EMG series for a truth file.
pub fn emg_path(truth: &Path) -> PathBuf {
    let mut s = truth.as_os_str().to_owned();
    s.push(".emg");
    PathBuf::from(s)
}

fn decode(a: &DecodeArgs, out: &mut dyn Write) -> Result<()> {
    let bytes = read(&a.input)?;
    let protocol = Protocol::from(a.protocol);
    let (framer, body) = match a.emit {
        Emit::Summary => {
            let s = Session::from_stream(protocol, &bytes);
            let framer = s.framer(protocol).cloned().unwrap_or_default();
            let mut text = summary_kv(&s.summary());
            text.push_str(&format!("status={}\n", format_status(&s.summary(), None)));
            (framer, text)
        }
        Emit::Fields => {
            let mut framer = FramerState::new();
            let mut kv = KvMap::default();
            let mut n = 0usize;
            match protocol {
                Protocol::Hxm => framer.scan_with::<Hxm>(&bytes, |m| {
                    hxm_fields_into(&mut kv, &format!("{n}."), &m);
                    n += 1;
                }),
                Protocol::Shimmer => framer.scan_with::<Shimmer>(&bytes, |p| {
                    shimmer_fields_into(&mut kv, &format!("{n}."), &p);
                    n += 1;
                }),
            }
            let mut text = kv.to_text();
            text.push_str(&format!(
                "frames_ok={}\nframes_rejected={}\nbytes_skipped={}\n",
                framer.frames_ok, framer.frames_rejected, framer.bytes_skipped
            ));
            (framer, text)
        }
    };
    emit(out, &body)?;
    if framer.frames_rejected > 0 {
        return Err(CliError::invalid(format!("{} frames rejected", framer.frames_rejected)));
    }
    Ok(())
}

/// Reads a series file, or decodes a raw Shimmer stream into one.
fn load_series(path: &Path) -> Result<SampleSeries> {
    let bytes = read(path)?;
    if bytes.starts_with(b"rate_hz=") {
        let text = String::from_utf8(bytes).map_err(|_| CliError::invalid("series file is not UTF-8"))?;
        return SampleSeries::parse(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())));
    }
    let s = Session::from_stream(Protocol::Shimmer, &bytes);
    let track = s.shimmer.expect("registered by from_stream");
    Ok(track.series())
}

fn emg_analyze(a: &AnalyzeArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = EmgConfig { threshold_mv: a.threshold_mv, ..EmgConfig::default() };
    if let Some(w) = a.smooth_window_s {
        cfg.smooth_window_s = w;
    }
    if let Some(m) = a.min_activation_s {
        cfg.min_activation_s = m;
    }
    let left = load_series(&a.input)?;
    let report = match &a.right {
        Some(r) => analyze_pair(&left, &load_series(r)?, &cfg),
        None => analyze(&left, &cfg),
    }
    .map_err(CliError::invalid)?;
    let text = report.to_kv();
    if let Some(p) = &a.report {
        write_file(p, text.as_bytes())?;
    }
    emit(out, &text)
}

fn serve(config: &Path, out: &mut dyn Write) -> Result<()> {
    let cfg = ServerConfig::parse(&read_text(config)?, base_dir(config)).map_err(CliError::invalid)?;
    let state = state_from_config(&cfg).map_err(|e| match e {
        StartError::Io { .. } => CliError { code: EXIT_IO, message: e.to_string() },
        other => CliError::invalid(other),
    })?;
    let server = ServerHandle::spawn(state, cfg.listen).map_err(|e| CliError::network(format!("{}: {e}", cfg.listen)))?;
    emit(out, &format!("listening={}\n", server.base_url()))?;
    let _ = out.flush();
    loop {
        std::thread::park();
    }
}

fn gateway_config(path: &Path) -> Result<GatewayConfig> {
    GatewayConfig::parse(&read_text(path)?, base_dir(path)).map_err(CliError::invalid)
}

fn upload_error(e: UploadError) -> CliError {
    match e {
        UploadError::NoEndpoint | UploadError::Rejected { .. } => CliError::invalid(e),
        UploadError::Local { .. } => CliError { code: EXIT_IO, message: e.to_string() },
        UploadError::Failed(_) => CliError::network(e),
    }
}

fn receipt_kv(r: &WorkoutReceipt) -> String {
    format!("receipt.workout_id={}\nreceipt.created={}\nreceipt.flags={}\n", r.workout_id, r.created, r.flags.join(","))
}

fn session(config: &Path, post: bool, out: &mut dyn Write) -> Result<()> {
    let cfg = gateway_config(config)?;
    let report = run_from_config(&cfg).map_err(|e| match e {
        GatewayError::NoSources | GatewayError::DuplicateProtocol(_) => CliError::invalid(e),
        GatewayError::Io { .. } => CliError { code: EXIT_IO, message: e.to_string() },
        GatewayError::SourceUnreachable(_) => CliError::network(e),
    })?;
    let mut text = summary_kv(&report.summary);
    text.push_str(&format!(
        "status={}\nsession_dir={}\nworkout_id={}\n",
        format_status(&report.summary, None),
        report.session_dir.display(),
        report.workout_id
    ));
    for (i, s) in report.sources.iter().enumerate() {
        text.push_str(&format!(
            "source.{i}.bytes={}\nsource.{i}.connects={}\nsource.{i}.disconnects={}\nsource.{i}.error={}\n",
            s.bytes,
            s.connects,
            s.disconnects,
            s.error.as_deref().unwrap_or("")
        ));
    }
    let outcome = match report.upload {
        Some(r) => Some(r),
        None if post => Some(upload(&report.session_dir, &cfg.policy)),
        None => None,
    };
    match outcome {
        Some(Ok(r)) => text.push_str(&receipt_kv(&r)),
        Some(Err(e)) => {
            text.push_str(&format!("upload_error={e}\n"));
            emit(out, &text)?;
            return Err(upload_error(e));
        }
        None => {}
    }
    emit(out, &text)
}

fn upload_all(config: &Path, out: &mut dyn Write) -> Result<()> {
    let cfg = gateway_config(config)?;
    let results = upload_pending(&cfg.data_dir, &cfg.policy).map_err(|e| CliError::io(&cfg.data_dir, e))?;
    let mut text = format!("pending={}\n", results.len());
    let mut first_err = None;
    for (dir, r) in results {
        match r {
            Ok(r) => text.push_str(&format!("uploaded={} {}\n", dir.display(), r.workout_id)),
            Err(e) => {
                text.push_str(&format!("failed={} {e}\n", dir.display()));
                first_err.get_or_insert(e);
            }
        }
    }
    emit(out, &text)?;
    first_err.map_or(Ok(()), |e| Err(upload_error(e)))
}

fn share(a: &ShareArgs, out: &mut dyn Write) -> Result<()> {
    let agent = ureq::Agent::config_builder().http_status_as_error(false).build().new_agent();
    let url = format!("{}/v1/share", a.server.trim_end_matches('/'));
    let mut req = agent.post(&url).header("authorization", &format!("Bearer {}", a.token));
    if let Some(k) = &a.idempotency_key {
        req = req.header("idempotency-key", k);
    }
    let body = ShareRequest { user_id: a.user, workout_id: a.workout, target: a.webhook.clone() };
    let resp = req.send_json(&body).map_err(CliError::network)?;
    let status = resp.status().as_u16();
    let text = resp.into_body().read_to_string().map_err(CliError::network)?;
    match status {
        200 | 201 => {
            let r: ShareReceipt =
                serde_json::from_str(&text).map_err(|e| CliError::network(format!("bad share receipt: {e}")))?;
            emit(out, &format!("delivered={}\nstatus={}\ntext={}\n", r.delivered, opt(r.status), r.text))
        }
        _ => {
            let msg = serde_json::from_str::<ApiError>(&text).map_or(text, |e| e.error);
            let e = format!("share failed with {status}: {msg}");
            Err(if status == 502 || status >= 500 { CliError::network(e) } else { CliError::invalid(e) })
        }
    }
}
