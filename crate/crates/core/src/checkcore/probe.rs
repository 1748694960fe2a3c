//! Built-in network probes: TCP connect/banner, HTTP status line and a
//! wrapper around the system ping command.

use std::io;
use std::time::{Duration, Instant};

use chrono::Utc;
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::TcpStream;

use super::plugin::{run_captured, timeout_message, RunOutcome};
use super::status::{CheckOrigin, CheckResult, CheckStatus};
use crate::Timestamp;

pub const REFUSED: &str = "Connection refused by host";

fn result(status: CheckStatus, output: String, started: Timestamp, source: &str) -> CheckResult {
    CheckResult::new(status, output, started, Utc::now(), CheckOrigin::Active, source)
}

enum ConnectError {
    Resolve(String),
    Refused,
    Other(io::Error),
}

async fn connect(address: &str, port: u16) -> Result<TcpStream, ConnectError> {
    let addrs: Vec<_> = tokio::net::lookup_host((address, port))
        .await
        .map_err(|e| ConnectError::Resolve(e.to_string()))?
        .collect();
    if addrs.is_empty() {
        return Err(ConnectError::Resolve("no addresses found".into()));
    }
    let mut last = None;
    for addr in addrs {
        match TcpStream::connect(addr).await {
            Ok(s) => return Ok(s),
            Err(e) => last = Some(e),
        }
    }
    match last {
        Some(e) if e.kind() == io::ErrorKind::ConnectionRefused => Err(ConnectError::Refused),
        Some(e) => Err(ConnectError::Other(e)),
        None => Err(ConnectError::Resolve("no addresses found".into())),
    }
}

fn connect_failure(err: ConnectError, address: &str, kind: &str) -> (CheckStatus, String) {
    match err {
        ConnectError::Resolve(msg) => (
            CheckStatus::Unknown,
            format!("{kind} UNKNOWN - cannot resolve '{address}': {msg}"),
        ),
        ConnectError::Refused => (CheckStatus::Critical, REFUSED.to_string()),
        ConnectError::Other(e) => (CheckStatus::Critical, format!("{kind} CRITICAL - {e}")),
    }
}

/// Connects to `address:port`; with `expect`, the first line the server
/// sends must start with it.
pub async fn check_tcp(
    address: &str,
    port: u16,
    expect: Option<&str>,
    timeout: Duration,
) -> CheckResult {
    let started = Utc::now();
    let source = "tcp";
    if port == 0 {
        return result(CheckStatus::Unknown, "TCP UNKNOWN - port must be in 1..65535".into(), started, source);
    }
    let clock = Instant::now();
    let probe = async {
        let stream = match connect(address, port).await {
            Ok(s) => s,
            Err(e) => return connect_failure(e, address, "TCP"),
        };
        let Some(expect) = expect else {
            return (
                CheckStatus::Ok,
                format!(
                    "TCP ok - {} second response time on port {port}",
                    clock.elapsed().as_secs()
                ),
            );
        };
        let mut banner = Vec::new();
        let mut reader = BufReader::new(stream).take(1024);
        if let Err(e) = reader.read_until(b'\n', &mut banner).await {
            return (CheckStatus::Critical, format!("TCP CRITICAL - error reading banner: {e}"));
        }
        let banner = String::from_utf8_lossy(&banner).trim().to_string();
        if banner.starts_with(expect) {
            (
                CheckStatus::Ok,
                format!(
                    "TCP ok - {} second response time on port {port}",
                    clock.elapsed().as_secs()
                ),
            )
        } else {
            (
                CheckStatus::Critical,
                format!("TCP CRITICAL - unexpected response on port {port}: \"{banner}\""),
            )
        }
    };
    let (status, output) = tokio::time::timeout(timeout, probe)
        .await
        .unwrap_or_else(|_| (CheckStatus::Critical, timeout_message(timeout)));
    result(status, output, started, source)
}

/// Issues one `GET` and reports the raw status line. Redirects are not
/// followed; 2xx and 3xx are OK, 4xx and 5xx CRITICAL.
pub async fn check_http(url: &str, timeout: Duration) -> CheckResult {
    let started = Utc::now();
    let source = "http";
    let parsed = match url::Url::parse(url) {
        Ok(u) if u.scheme() == "http" && u.host_str().is_some() => u,
        Ok(u) => {
            return result(
                CheckStatus::Unknown,
                format!("HTTP UNKNOWN - unsupported url '{url}' (scheme {})", u.scheme()),
                started,
                source,
            )
        }
        Err(e) => {
            return result(
                CheckStatus::Unknown,
                format!("HTTP UNKNOWN - malformed url '{url}': {e}"),
                started,
                source,
            )
        }
    };
    let host = parsed.host_str().expect("checked").trim_matches(['[', ']']).to_string();
    let port = parsed.port_or_known_default().unwrap_or(80);
    let mut path = parsed.path().to_string();
    if let Some(q) = parsed.query() {
        path.push('?');
        path.push_str(q);
    }
    let host_header = match parsed.port() {
        Some(p) => format!("{}:{p}", parsed.host_str().expect("checked")),
        None => parsed.host_str().expect("checked").to_string(),
    };

    let clock = Instant::now();
    let probe = async {
        let mut stream = match connect(&host, port).await {
            Ok(s) => s,
            Err(e) => return connect_failure(e, &host, "HTTP"),
        };
        let request = format!(
            "GET {path} HTTP/1.1\r\nHost: {host_header}\r\nUser-Agent: sentinel-check\r\nConnection: close\r\n\r\n"
        );
        if let Err(e) = stream.write_all(request.as_bytes()).await {
            return (CheckStatus::Critical, format!("HTTP CRITICAL - error sending request: {e}"));
        }
        let mut line = Vec::new();
        let mut reader = BufReader::new(stream).take(8192);
        if let Err(e) = reader.read_until(b'\n', &mut line).await {
            return (CheckStatus::Critical, format!("HTTP CRITICAL - error reading response: {e}"));
        }
        let status_line = String::from_utf8_lossy(&line).trim().to_string();
        let secs = clock.elapsed().as_secs();
        match parse_status_code(&status_line) {
            Some(code) if (200..400).contains(&code) => (
                CheckStatus::Ok,
                format!("HTTP ok: {status_line} - {secs} second response time"),
            ),
            Some(code) if (400..600).contains(&code) => (
                CheckStatus::Critical,
                format!("HTTP CRITICAL: {status_line} - {secs} second response time"),
            ),
            _ => (
                CheckStatus::Critical,
                format!("HTTP CRITICAL - invalid HTTP response received from host: \"{status_line}\""),
            ),
        }
    };
    let (status, output) = tokio::time::timeout(timeout, probe)
        .await
        .unwrap_or_else(|_| (CheckStatus::Critical, timeout_message(timeout)));
    result(status, output, started, source)
}

fn parse_status_code(status_line: &str) -> Option<u16> {
    let mut parts = status_line.split_whitespace();
    let version = parts.next()?;
    if !version.starts_with("HTTP/") {
        return None;
    }
    let code = parts.next()?;
    if code.len() != 3 {
        return None;
    }
    code.parse().ok()
}

/// External ping invocation. `$HOSTADDRESS$` and `$TIMEOUT$` (whole
/// seconds, at least 1) are substituted into the arguments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PingCommand {
    pub argv: Vec<String>,
}

impl Default for PingCommand {
    fn default() -> Self {
        PingCommand {
            argv: ["ping", "-n", "-c", "1", "-W", "$TIMEOUT$", "$HOSTADDRESS$"]
                .map(String::from)
                .to_vec(),
        }
    }
}

impl PingCommand {
    pub fn with_program(program: impl Into<String>) -> Self {
        let mut cmd = Self::default();
        cmd.argv[0] = program.into();
        cmd
    }

    fn expand(&self, address: &str, timeout: Duration) -> Vec<String> {
        let secs = timeout.as_secs_f64().ceil().max(1.0).to_string();
        self.argv
            .iter()
            .map(|a| a.replace("$HOSTADDRESS$", address).replace("$TIMEOUT$", &secs))
            .collect()
    }
}

/// Pings `address` once through the configured ping command.
pub async fn check_ping(address: &str, timeout: Duration, ping: &PingCommand) -> CheckResult {
    let started = Utc::now();
    let argv = ping.expand(address, timeout);
    let program = argv.first().cloned().unwrap_or_default();
    let (status, output) = match run_captured(&argv, timeout).await {
        RunOutcome::Exited { code: Some(0), stdout, .. } => match round_trip_ms(&stdout) {
            Some(rtt) => (CheckStatus::Ok, format!("PING OK - {address} rta {rtt} ms")),
            None => (CheckStatus::Ok, format!("PING OK - {address} is alive")),
        },
        RunOutcome::Exited { .. } => (
            CheckStatus::Critical,
            format!("PING CRITICAL - {address} is unreachable"),
        ),
        RunOutcome::TimedOut => (CheckStatus::Critical, timeout_message(timeout)),
        RunOutcome::SpawnFailed(e) => (
            CheckStatus::Unknown,
            format!("PING UNKNOWN - cannot run ping command '{program}': {e}"),
        ),
    };
    result(status, output, started, "ping")
}

fn round_trip_ms(output: &str) -> Option<String> {
    let idx = output.find("time=")?;
    let rest = &output[idx + 5..];
    let end = rest.find(|c: char| !(c.is_ascii_digit() || c == '.'))?;
    (end > 0).then(|| rest[..end].to_string())
}
