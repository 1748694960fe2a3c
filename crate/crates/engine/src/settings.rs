use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context};
use sentinel_core::checkcore::{DEFAULT_CHECK_TIMEOUT, DEFAULT_MAX_CONCURRENT};
use sentinel_core::notify::{DEFAULT_DISPATCH_TIMEOUT, DEFAULT_DISPATCH_WORKERS};
use sentinel_core::passive::DEFAULT_SKEW_WINDOW;
use sentinel_core::statestore::DEFAULT_STATUS_INTERVAL;
use sentinel_core::Zone;

/// Prefix of environment variables overriding main config keys, e.g.
/// `SENTINEL_STATUS_DIR`.
pub const ENV_PREFIX: &str = "SENTINEL_";

const KEYS: &[&str] = &[
    "cfg_file",
    "status_dir",
    "retention_file",
    "status_interval_seconds",
    "interval_length",
    "api_listen",
    "api_token_file",
    "gateway_listen",
    "gateway_token_file",
    "event_log",
    "dispatch_log",
    "tz",
    "engine_name",
    "max_concurrent_checks",
    "check_timeout_seconds",
    "skew_window_seconds",
    "notification_workers",
    "notification_timeout_seconds",
    "ping_command",
];

/// Settings of the central engine, read from the main config file.
#[derive(Debug, Clone)]
pub struct EngineSettings {
    pub object_files: Vec<PathBuf>,
    pub status_dir: PathBuf,
    pub retention_file: PathBuf,
    pub status_interval: Duration,
    pub interval_length: Duration,
    pub api_listen: Option<SocketAddr>,
    pub api_token: Option<String>,
    pub gateway_listen: Option<SocketAddr>,
    pub gateway_token: Option<String>,
    pub event_log: Option<PathBuf>,
    pub dispatch_log: Option<PathBuf>,
    pub zone: Zone,
    pub engine_name: String,
    pub engine_version: String,
    pub max_concurrent_checks: usize,
    pub check_timeout: Duration,
    pub skew_window: Duration,
    pub notification_workers: usize,
    pub notification_timeout: Duration,
    pub ping_command: Option<Vec<String>>,
}

impl Default for EngineSettings {
    fn default() -> Self {
        EngineSettings {
            object_files: Vec::new(),
            status_dir: PathBuf::from("var"),
            retention_file: PathBuf::from("var/retention.dat"),
            status_interval: DEFAULT_STATUS_INTERVAL,
            interval_length: Duration::from_secs(60),
            api_listen: Some(SocketAddr::from(([127, 0, 0, 1], 8080))),
            api_token: None,
            gateway_listen: None,
            gateway_token: None,
            event_log: None,
            dispatch_log: None,
            zone: Zone::UTC,
            engine_name: "sentinel".into(),
            engine_version: env!("CARGO_PKG_VERSION").into(),
            max_concurrent_checks: DEFAULT_MAX_CONCURRENT,
            check_timeout: DEFAULT_CHECK_TIMEOUT,
            skew_window: DEFAULT_SKEW_WINDOW,
            notification_workers: DEFAULT_DISPATCH_WORKERS,
            notification_timeout: DEFAULT_DISPATCH_TIMEOUT,
            ping_command: None,
        }
    }
}

/// Parses `key=value` lines; `#` starts a comment line. `cfg_file` may
/// repeat, every other key keeps its last value.
pub fn parse_main_config(text: &str) -> anyhow::Result<BTreeMap<String, Vec<String>>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("line {}: expected key=value", i + 1);
        };
        let k = k.trim();
        if !KEYS.contains(&k) {
            bail!("line {}: unknown key '{k}'", i + 1);
        }
        out.entry(k.to_string()).or_default().push(v.trim().to_string());
    }
    Ok(out)
}

fn seconds(key: &str, v: &str) -> anyhow::Result<Duration> {
    let secs: f64 = v.parse().with_context(|| format!("{key}: not a number"))?;
    if !(secs > 0.0 && secs.is_finite()) {
        bail!("{key} must be positive");
    }
    Ok(Duration::from_secs_f64(secs))
}

impl EngineSettings {
    /// Reads the main config file, then applies `SENTINEL_*` overrides from
    /// `env`. Relative paths are resolved against the file's directory.
    pub fn load(path: &Path, env: impl IntoIterator<Item = (String, String)>) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_text(&text, base, env).with_context(|| path.display().to_string())
    }

    pub fn from_text(text: &str, base: &Path, env: impl IntoIterator<Item = (String, String)>) -> anyhow::Result<Self> {
        let mut values = parse_main_config(text)?;
        for (k, v) in env {
            let Some(key) = k.strip_prefix(ENV_PREFIX) else { continue };
            let key = key.to_ascii_lowercase();
            if !KEYS.contains(&key.as_str()) {
                continue;
            }
            let list = if key == "cfg_file" {
                v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
            } else {
                vec![v]
            };
            values.insert(key, list);
        }
        let get = |k: &str| values.get(k).and_then(|v| v.last()).map(String::as_str);
        let path = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };

        let mut s = EngineSettings::default();
        s.object_files = values.get("cfg_file").into_iter().flatten().map(|v| path(v)).collect();
        if s.object_files.is_empty() {
            bail!("no cfg_file given");
        }
        s.status_dir = path(get("status_dir").unwrap_or("var"));
        s.retention_file = match get("retention_file") {
            Some(v) => path(v),
            None => s.status_dir.join("retention.dat"),
        };
        if let Some(v) = get("status_interval_seconds") {
            s.status_interval = seconds("status_interval_seconds", v)?;
        }
        if let Some(v) = get("interval_length") {
            s.interval_length = seconds("interval_length", v)?;
        }
        s.api_listen = match get("api_listen") {
            Some("") => None,
            Some(v) => Some(v.parse().with_context(|| format!("api_listen: invalid address '{v}'"))?),
            None => s.api_listen,
        };
        s.gateway_listen = match get("gateway_listen") {
            None | Some("") => None,
            Some(v) => Some(v.parse().with_context(|| format!("gateway_listen: invalid address '{v}'"))?),
        };
        if let Some(v) = get("api_token_file") {
            s.api_token = crate::read_token_file(&path(v))?;
        }
        s.gateway_token = match get("gateway_token_file") {
            Some(v) => crate::read_token_file(&path(v))?,
            None => s.api_token.clone(),
        };
        s.event_log = get("event_log").filter(|v| !v.is_empty()).map(path);
        s.dispatch_log = get("dispatch_log").filter(|v| !v.is_empty()).map(path);
        if let Some(v) = get("tz") {
            s.zone = v.parse().map_err(anyhow::Error::msg)?;
        }
        if let Some(v) = get("engine_name") {
            s.engine_name = v.to_string();
        }
        if let Some(v) = get("max_concurrent_checks") {
            s.max_concurrent_checks = v.parse().context("max_concurrent_checks")?;
        }
        if let Some(v) = get("check_timeout_seconds") {
            s.check_timeout = seconds("check_timeout_seconds", v)?;
        }
        if let Some(v) = get("skew_window_seconds") {
            s.skew_window = seconds("skew_window_seconds", v)?;
        }
        if let Some(v) = get("notification_workers") {
            s.notification_workers = v.parse().context("notification_workers")?;
        }
        if let Some(v) = get("notification_timeout_seconds") {
            s.notification_timeout = seconds("notification_timeout_seconds", v)?;
        }
        if let Some(v) = get("ping_command") {
            s.ping_command = Some(shell_split(v)?);
        }
        Ok(s)
    }
}

fn shell_split(v: &str) -> anyhow::Result<Vec<String>> {
    let words = shell_words::split(v).context("ping_command")?;
    if words.is_empty() {
        bail!("ping_command is empty");
    }
    Ok(words)
}
