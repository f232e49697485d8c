//! Command-line front end: node launchers, a one-shot query client and an
//! in-process demo of the example network.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info};
use thiserror::Error;

use crate::client::{ClientError, DxqClient};
use crate::demo::{self, ExampleNetwork};
use crate::merge::{Algorithm, MergeRequest};
use crate::protocol::{Message, MessageType, NodeIdentifier, NodeName, TransactionId};
use crate::query::parse_xml;
use crate::transport::{Direction, Handler, RecordingTransport, TcpTransport, Transport, TransportError, WireRecorder};
use crate::xdp::{Xdp, XdpConfig};
use crate::xqd::{Xqd, XqdConfig};

pub const EXIT_PROTOCOL: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_TRANSPORT: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "dxq", version, about = "Distributed XML-Query Protocol nodes and client")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Network binding.
    #[arg(long, global = true, value_enum, default_value_t = TransportKind::Tcp)]
    pub transport: TransportKind,
    /// Append every frame sent or received to this file.
    #[arg(long, global = true, value_name = "FILE")]
    pub dump_wire: Option<PathBuf>,
    /// key=value file whose entries act as default flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransportKind {
    Tcp,
    /// All nodes inside this process, running the example network.
    Mem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputMode {
    Body,
    FullMessage,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// XML-Query Distributor.
    Xqd {
        #[command(subcommand)]
        action: XqdAction,
    },
    /// XML-Document Provider.
    Xdp {
        #[command(subcommand)]
        action: XdpAction,
    },
    /// Send a query to an XQD and print the merged result.
    Query(QueryArgs),
    /// Send an INFO-REQUEST to any node.
    Info(InfoArgs),
    /// Run the example network in-process and print its transcript.
    Demo,
}

#[derive(Debug, Subcommand)]
pub enum XqdAction {
    Serve(XqdServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum XdpAction {
    Serve(XdpServeArgs),
}

#[derive(Debug, Args)]
pub struct XqdServeArgs {
    /// Endpoint to bind, e.g. dxqp://0.0.0.0:8750/
    #[arg(long)]
    pub listen: String,
    /// Identifier announced to peers; defaults to the listen endpoint.
    #[arg(long)]
    pub identifier: Option<String>,
    #[arg(long, default_value = "XQD")]
    pub name: String,
    #[arg(long, default_value = "")]
    pub admin: String,
    #[arg(long, value_parser = humantime::parse_duration, default_value = "15s")]
    pub ping_interval: Duration,
    #[arg(long, value_parser = humantime::parse_duration, default_value = "5s")]
    pub ping_timeout: Duration,
    #[arg(long, value_parser = humantime::parse_duration, default_value = "10s")]
    pub query_timeout: Duration,
    /// Misses after removal from the distribution list before unregistering.
    #[arg(long, default_value_t = 3)]
    pub max_missed: u32,
    #[arg(long, value_parser = humantime::parse_duration, default_value = "120s")]
    pub merge_wait: Duration,
    /// Hex seed for client identifiers.
    #[arg(long, value_parser = parse_hex_seed)]
    pub seed: Option<u32>,
}

#[derive(Debug, Args)]
pub struct XdpServeArgs {
    #[arg(long)]
    pub listen: String,
    #[arg(long)]
    pub identifier: Option<String>,
    /// XML document to export.
    #[arg(long)]
    pub document: PathBuf,
    /// Identifier of the XQD to join.
    #[arg(long)]
    pub xqd: String,
    #[arg(long)]
    pub name: String,
    #[arg(long, default_value = "")]
    pub admin: String,
    #[arg(long, value_parser = humantime::parse_duration, default_value = "30s")]
    pub self_check_interval: Duration,
    #[arg(long, value_parser = humantime::parse_duration, default_value = "60s")]
    pub backoff_max: Duration,
    /// Leave with UNREGISTER only, without RMFROMDL first.
    #[arg(long)]
    pub no_sign_off: bool,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// Identifier of the XQD; ignored with --transport mem.
    #[arg(long, default_value = demo::XQD)]
    pub xqd: String,
    /// Query file, or - for standard input.
    #[arg(long)]
    pub query: String,
    #[arg(long, default_value = "concatenate")]
    pub merge: String,
    /// Merge query file, required for user-defined.
    #[arg(long)]
    pub merge_query: Option<PathBuf>,
    /// Required for remove-duplicates.
    #[arg(long)]
    pub depth: Option<u32>,
    /// Transaction-ID; random when absent.
    #[arg(long)]
    pub txn: Option<String>,
    #[arg(long, value_enum, default_value_t = OutputMode::Body)]
    pub output: OutputMode,
    #[arg(long, value_parser = humantime::parse_duration, default_value = "30s")]
    pub timeout: Duration,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    #[arg(long, default_value = demo::XQD)]
    pub target: String,
    /// Space-separated names, `*`, or empty for a ping.
    #[arg(long, default_value = "", allow_hyphen_values = true)]
    pub request: String,
    #[arg(long, value_parser = humantime::parse_duration, default_value = "10s")]
    pub timeout: Duration,
}

fn parse_hex_seed(s: &str) -> Result<u32, String> {
    u32::from_str_radix(s.trim_start_matches("0x"), 16).map_err(|e| e.to_string())
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Protocol(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Protocol(_) => EXIT_PROTOCOL,
            CliError::Transport(TransportError::Bind { .. }) => EXIT_CONFIG,
            CliError::Transport(_) => EXIT_TRANSPORT,
        }
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Transport(t) => CliError::Transport(t),
            other => CliError::Protocol(other.to_string()),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

const SUBCOMMANDS: [&str; 6] = ["xqd", "xdp", "serve", "query", "info", "demo"];

/// Splices `--key=value` flags from a config file in right after the
/// subcommand words, so flags given on the command line win.
pub fn expand_config(args: Vec<String>) -> Result<Vec<String>, CliError> {
    let mut path = None;
    let mut iter = args.iter().enumerate();
    while let Some((_, a)) = iter.next() {
        if a == "--config" {
            path = iter.next().map(|(_, p)| p.clone());
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = fs::read_to_string(&path).map_err(|e| config_err(format!("{path}: {e}")))?;
    let mut flags = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| config_err(format!("{path}:{}: expected key=value", n + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        match value {
            "true" => flags.push(format!("--{key}")),
            "false" => {}
            _ => flags.push(format!("--{key}={value}")),
        }
    }
    let insert_at = args
        .iter()
        .rposition(|a| SUBCOMMANDS.contains(&a.as_str()))
        .map_or(args.len(), |i| i + 1);
    let mut out = args;
    out.splice(insert_at..insert_at, flags);
    Ok(out)
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DXQ_LOG", "info")).init();
    let args = match expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("dxq: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli, &mut io::stdout(), &mut io::stderr()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dxq: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Runs a parsed command, writing results to `out` and diagnostics to `diag`.
pub fn run(cli: Cli, out: &mut dyn Write, diag: &mut dyn Write) -> Result<(), CliError> {
    let recorder = cli.dump_wire.as_ref().map(|_| WireRecorder::new());
    let result = match cli.command {
        Command::Xqd {
            action: XqdAction::Serve(args),
        } => serve_xqd(args, cli.transport, recorder.clone()),
        Command::Xdp {
            action: XdpAction::Serve(args),
        } => serve_xdp(args, cli.transport, recorder.clone()),
        Command::Query(args) => with_transport(cli.transport, recorder.clone(), |t| run_query(args, t, out, diag)),
        Command::Info(args) => with_transport(cli.transport, recorder.clone(), |t| run_info(args, t, out)),
        Command::Demo => run_demo(out, diag, recorder.clone()),
    };
    if let (Some(path), Some(recorder)) = (&cli.dump_wire, &recorder) {
        let file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        recorder.dump(file).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    }
    result
}

fn identifier(s: &str) -> Result<NodeIdentifier, CliError> {
    NodeIdentifier::new(s).map_err(config_err)
}

fn node_name(s: &str) -> Result<NodeName, CliError> {
    NodeName::new(s).map_err(config_err)
}

fn recording(inner: Arc<dyn Transport>, recorder: Option<Arc<WireRecorder>>) -> Arc<dyn Transport> {
    match recorder {
        Some(r) => Arc::new(RecordingTransport::new(inner, r)),
        None => inner,
    }
}

/// Gives `f` a transport: TCP, or a freshly started example network.
fn with_transport<T>(
    kind: TransportKind,
    recorder: Option<Arc<WireRecorder>>,
    f: impl FnOnce(Arc<dyn Transport>) -> Result<T, CliError>,
) -> Result<T, CliError> {
    match kind {
        TransportKind::Tcp => f(recording(Arc::new(TcpTransport::new()), recorder)),
        TransportKind::Mem => {
            let net = ExampleNetwork::start(true)?;
            net.join_all().map_err(|e| CliError::Protocol(e.to_string()))?;
            let result = f(recording(Arc::new(net.network.clone()), recorder));
            let _ = net.leave_all();
            result
        }
    }
}

fn read_source(spec: &str) -> Result<String, CliError> {
    if spec == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s).map_err(config_err)?;
        return Ok(s);
    }
    fs::read_to_string(spec).map_err(|e| config_err(format!("{spec}: {e}")))
}

fn random_txn() -> String {
    format!("{:08x}", rand::random::<u32>())
}

fn write_message(out: &mut dyn Write, m: &Message) -> io::Result<()> {
    out.write_all(&m.to_bytes().map_err(io::Error::other)?)?;
    writeln!(out)
}

fn run_query(args: QueryArgs, transport: Arc<dyn Transport>, out: &mut dyn Write, diag: &mut dyn Write) -> Result<(), CliError> {
    let xqd = identifier(&args.xqd)?;
    let query = read_source(&args.query)?;
    let merge = match Algorithm::from_name(&args.merge) {
        Some(Algorithm::Concatenate) => MergeRequest::Concatenate,
        Some(Algorithm::RemoveDuplicates) => MergeRequest::RemoveDuplicates {
            depth: args.depth.ok_or_else(|| config_err("--depth is required for remove-duplicates"))?,
        },
        Some(Algorithm::UserDefined) => {
            let path = args
                .merge_query
                .as_ref()
                .ok_or_else(|| config_err("--merge-query is required for user-defined"))?;
            MergeRequest::UserDefined {
                query: read_source(&path.to_string_lossy())?,
            }
        }
        None => {
            return query_unknown_algorithm(&args, transport, xqd, &query, out, diag);
        }
    };
    let txn = TransactionId::new(args.txn.clone().unwrap_or_else(random_txn)).map_err(config_err)?;
    let client = DxqClient::new(transport, xqd).with_timeout(args.timeout);
    match client.query(&query, &merge, &txn) {
        Ok(outcome) => {
            let io = |e: io::Error| config_err(e);
            match args.output {
                OutputMode::Body => {
                    out.write_all(&outcome.body).map_err(io)?;
                    writeln!(out).map_err(io)?;
                }
                OutputMode::FullMessage => {
                    for m in &outcome.exchanged {
                        write_message(out, m).map_err(io)?;
                    }
                }
            }
            let names: Vec<&str> = outcome.sources.iter().map(|n| n.as_str()).collect();
            writeln!(diag, "Result-Sources: {{{}}}", names.join("} {")).map_err(io)?;
            Ok(())
        }
        Err(ClientError::Protocol { code, detail, .. }) => {
            let _ = writeln!(diag, "Error-Code: {code}");
            if !detail.is_empty() {
                let _ = writeln!(diag, "{detail}");
            }
            Err(CliError::Protocol(format!("the XQD answered error {code}")))
        }
        Err(e) => Err(e.into()),
    }
}

/// Passes an algorithm name this client does not know straight to the XQD,
/// which decides whether it is supported.
fn query_unknown_algorithm(
    args: &QueryArgs,
    transport: Arc<dyn Transport>,
    xqd: NodeIdentifier,
    query: &str,
    out: &mut dyn Write,
    diag: &mut dyn Write,
) -> Result<(), CliError> {
    let txn = args.txn.clone().unwrap_or_else(random_txn);
    let m = Message::new(MessageType::XmlQuery, &NodeIdentifier::empty(), &xqd)
        .try_header(crate::protocol::TRANSACTION_ID, txn)
        .and_then(|m| m.try_header(crate::protocol::MERGE_ALGORITHM, args.merge.clone()))
        .map_err(config_err)?
        .with_body(query);
    let reply = transport.request(&xqd, &m, args.timeout)?;
    if args.output == OutputMode::FullMessage {
        let _ = write_message(out, &m);
        let _ = write_message(out, &reply);
    }
    match reply.error_code() {
        Some(code) => {
            let _ = writeln!(diag, "Error-Code: {code}");
            Err(CliError::Protocol(format!("the XQD answered error {code}")))
        }
        None => Err(CliError::Protocol(format!("unexpected {} reply", reply.msg_type))),
    }
}

fn run_info(args: InfoArgs, transport: Arc<dyn Transport>, out: &mut dyn Write) -> Result<(), CliError> {
    let target = identifier(&args.target)?;
    let client = DxqClient::new(transport, NodeIdentifier::empty()).with_timeout(args.timeout);
    let reply = client.info(&target, &args.request)?;
    for h in reply.headers() {
        if matches!(h.name(), "Msg-From" | "Msg-To") {
            continue;
        }
        writeln!(out, "{}\t{}", h.name(), h.value()).map_err(config_err)?;
    }
    Ok(())
}

fn run_demo(out: &mut dyn Write, diag: &mut dyn Write, recorder: Option<Arc<WireRecorder>>) -> Result<(), CliError> {
    let (net, outcome) = demo::run_example().map_err(|e| CliError::Protocol(e.to_string()))?;
    for frame in net.recorder.frames() {
        out.write_all(&frame.bytes).map_err(config_err)?;
        if !frame.bytes.ends_with(b"\r\n") {
            writeln!(out).map_err(config_err)?;
        }
    }
    if let Some(r) = recorder {
        let frames = net.recorder.frames();
        for req in frames.iter().filter(|f| f.direction == Direction::Request) {
            if let Some(resp) = frames
                .iter()
                .find(|f| f.exchange == req.exchange && f.direction == Direction::Response)
            {
                r.record_exchange(&req.target, req.bytes.clone(), resp.bytes.clone());
            }
        }
    }
    let names: Vec<&str> = outcome.sources.iter().map(|n| n.as_str()).collect();
    writeln!(diag, "merged result {} from {{{}}}", outcome.body_str(), names.join("} {")).map_err(config_err)?;
    Ok(())
}

/// Logs each served exchange as one line and optionally records it.
struct Logged<H> {
    inner: H,
    recorder: Option<Arc<WireRecorder>>,
}

impl<H: Handler> Handler for Logged<H> {
    fn handle(&self, request: Message) -> Message {
        let peer = request.msg_from();
        let raw = self.recorder.as_ref().and_then(|_| request.to_bytes().ok());
        let summary = format!(
            "type={} from={:?} to={:?} txn={}",
            request.msg_type,
            peer.as_str(),
            request.msg_to().as_str(),
            request.transaction_id().unwrap_or("-")
        );
        let reply = self.inner.handle(request);
        match reply.error_code() {
            Some(code) => info!("exchange {summary} reply={} code={code}", reply.msg_type),
            None => info!("exchange {summary} reply={}", reply.msg_type),
        }
        if let (Some(r), Some(raw), Ok(out)) = (&self.recorder, raw, reply.to_bytes()) {
            r.record_exchange(&peer, raw, out);
        }
        reply
    }
}

fn serve_transport(kind: TransportKind) -> Result<Arc<dyn Transport>, CliError> {
    match kind {
        TransportKind::Tcp => Ok(Arc::new(TcpTransport::new())),
        TransportKind::Mem => Err(config_err("serve commands need --transport tcp; use `dxq demo` for an in-process network")),
    }
}

fn stop_flag() -> Result<Arc<AtomicBool>, CliError> {
    let stop = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&stop);
    ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst)).map_err(config_err)?;
    Ok(stop)
}

const TICK: Duration = Duration::from_millis(100);

fn serve_xqd(args: XqdServeArgs, kind: TransportKind, recorder: Option<Arc<WireRecorder>>) -> Result<(), CliError> {
    let endpoint = identifier(&args.listen)?;
    let own = identifier(args.identifier.as_deref().unwrap_or(&args.listen))?;
    let mut config = XqdConfig::new(own.clone(), node_name(&args.name)?);
    config.admin = args.admin;
    config.ping_interval = args.ping_interval;
    config.ping_timeout = args.ping_timeout;
    config.query_timeout = args.query_timeout;
    config.max_missed = args.max_missed;
    config.merge_wait = args.merge_wait;
    config.identifier_seed = args.seed;
    let transport = recording(serve_transport(kind)?, recorder.clone());
    let xqd = Xqd::new(config, Arc::clone(&transport));
    let handler = Arc::new(Logged {
        inner: xqd.clone(),
        recorder,
    });
    let listener = transport.listen(&endpoint, &own, handler)?;
    info!("xqd {own} listening on {}", listener.local_addr().map_or(endpoint.to_string(), |a| a.to_string()));
    let stop = stop_flag()?;
    while !stop.load(Ordering::SeqCst) {
        if let Some(report) = xqd.tick() {
            for r in &report.removed_from_dl {
                info!("connectivity removed={} name={:?}", r.identifier, r.name.as_str());
            }
            for r in &report.unregistered {
                info!("connectivity unregistered={} name={:?}", r.identifier, r.name.as_str());
            }
        }
        thread::sleep(TICK);
    }
    info!("xqd {own} shutting down");
    listener.close();
    Ok(())
}

fn load_document(path: &Path) -> Result<crate::query::XmlNode, CliError> {
    let bytes = fs::read(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    parse_xml(bytes).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn serve_xdp(args: XdpServeArgs, kind: TransportKind, recorder: Option<Arc<WireRecorder>>) -> Result<(), CliError> {
    let document = load_document(&args.document)?;
    let endpoint = identifier(&args.listen)?;
    let own = identifier(args.identifier.as_deref().unwrap_or(&args.listen))?;
    let mut config = XdpConfig::new(own.clone(), node_name(&args.name)?, identifier(&args.xqd)?, document);
    if args.admin.contains(['\r', '\n']) {
        return Err(config_err("--admin must be a single line"));
    }
    config.admin = args.admin;
    config.self_check_interval = args.self_check_interval;
    config.backoff_max = args.backoff_max;
    config.sign_off_before_unregister = !args.no_sign_off;
    let transport = recording(serve_transport(kind)?, recorder.clone());
    let xdp = Xdp::new(config, Arc::clone(&transport));
    let handler = Arc::new(Logged {
        inner: xdp.clone(),
        recorder,
    });
    let listener = transport.listen(&endpoint, &own, handler)?;
    info!("xdp {own} listening on {}", listener.local_addr().map_or(endpoint.to_string(), |a| a.to_string()));
    let stop = stop_flag()?;
    if let Err(e) = xdp.join() {
        error!("xdp {own} could not join yet: {e}");
    }
    while !stop.load(Ordering::SeqCst) {
        xdp.tick();
        thread::sleep(TICK);
    }
    info!("xdp {own} leaving");
    if let Err(e) = xdp.leave() {
        error!("xdp {own} leave failed: {e}");
    }
    listener.close();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &[&str]) -> Vec<String> {
        s.iter().map(|a| a.to_string()).collect()
    }

    #[test]
    fn config_entries_precede_command_line_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("xqd.conf");
        fs::write(&path, "# comment\nlisten = dxqp://127.0.0.1:1/\nname=FromFile\nadmin=ops\n").unwrap();
        let p = path.to_string_lossy().to_string();
        let expanded = expand_config(args(&["dxq", "--config", &p, "xqd", "serve", "--name", "Cli"])).unwrap();
        assert_eq!(
            &expanded[5..],
            &args(&["--listen=dxqp://127.0.0.1:1/", "--name=FromFile", "--admin=ops", "--name", "Cli"])[..]
        );
        let cli = Cli::try_parse_from(expanded).unwrap();
        let Command::Xqd {
            action: XqdAction::Serve(a),
        } = cli.command
        else {
            panic!()
        };
        assert_eq!(a.name, "Cli");
        assert_eq!(a.admin, "ops");
    }

    #[test]
    fn missing_config_file_is_a_config_error() {
        let err = expand_config(args(&["dxq", "--config", "/nonexistent/x", "demo"])).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_CONFIG);
    }

    #[test]
    fn exit_codes_by_outcome() {
        assert_eq!(CliError::Protocol("x".into()).exit_code(), EXIT_PROTOCOL);
        let t = TransportError::Connect {
            target: "x".into(),
            reason: "y".into(),
        };
        assert_eq!(CliError::Transport(t).exit_code(), EXIT_TRANSPORT);
    }
}
