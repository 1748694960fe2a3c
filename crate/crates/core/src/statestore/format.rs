use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};

use crate::checkcore::CheckStatus;
use crate::statemachine::{Acknowledgement, Downtime, HostStatus, MonitorState, StateType, StateValue};
use crate::Timestamp;

pub const STATUS_FORMAT: &str = "sentinel-status 1";
pub const RETENTION_FORMAT: &str = "sentinel-retention 1";

/// Object states keyed by host name and by (host, service).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StateTables {
    pub hosts: BTreeMap<String, MonitorState<HostStatus>>,
    pub services: BTreeMap<(String, String), MonitorState<CheckStatus>>,
}

impl StateTables {
    pub fn len(&self) -> usize {
        self.hosts.len() + self.services.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct FormatError {
    pub line: usize,
    pub message: String,
}

pub fn escape(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            ';' => out.push_str("\\;"),
            c => out.push(c),
        }
    }
    out
}

/// Splits on unescaped `;` and unescapes each piece.
pub fn unescape_fields(value: &str) -> Result<Vec<String>, String> {
    let mut fields = vec![String::new()];
    let mut chars = value.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => {
                let cur = fields.last_mut().expect("non-empty");
                match chars.next() {
                    Some('\\') => cur.push('\\'),
                    Some('n') => cur.push('\n'),
                    Some('r') => cur.push('\r'),
                    Some(';') => cur.push(';'),
                    other => return Err(format!("invalid escape '\\{}'", other.map(String::from).unwrap_or_default())),
                }
            }
            ';' => fields.push(String::new()),
            c => fields.last_mut().expect("non-empty").push(c),
        }
    }
    Ok(fields)
}

pub fn unescape(value: &str) -> Result<String, String> {
    let fields = unescape_fields(value)?;
    if fields.len() != 1 {
        return Err("unescaped ';' in value".into());
    }
    Ok(fields.into_iter().next().expect("one field"))
}

fn ts(t: Timestamp) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

fn parse_ts(s: &str) -> Result<Timestamp, String> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("invalid timestamp '{s}': {e}"))
}

fn write_state<S: StateValue>(out: &mut String, state: &MonitorState<S>) {
    let mut kv = |k: &str, v: &str| {
        let _ = writeln!(out, "{k}={}", escape(v));
    };
    kv("current_status", &state.current_status.to_string());
    kv("state_type", state.state_type.name());
    kv("attempt", &state.attempt.to_string());
    kv("last_hard_status", &state.last_hard_status.to_string());
    for (k, v) in [
        ("last_check", state.last_check),
        ("last_state_change", state.last_state_change),
        ("last_hard_change", state.last_hard_change),
        ("last_notification", state.last_notification),
    ] {
        if let Some(v) = v {
            kv(k, &ts(v));
        }
    }
    if let Some(ack) = &state.acknowledgement {
        kv("ack_who", &ack.who);
        kv("ack_comment", &ack.comment);
        kv("ack_at", &ts(ack.at));
    }
    kv("last_output", &state.last_output);
    for d in &state.downtimes {
        let _ = writeln!(
            out,
            "downtime={};{};{};{}",
            ts(d.start),
            ts(d.end),
            escape(&d.who),
            escape(&d.comment)
        );
    }
}

/// Serializes a header and all object blocks.
pub fn write_tables(format: &str, header: &[(&str, String)], tables: &StateTables) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "format={format}");
    for (k, v) in header {
        let _ = writeln!(out, "{k}={}", escape(v));
    }
    for (host, state) in &tables.hosts {
        out.push('\n');
        let _ = writeln!(out, "type=host\nhost_name={}", escape(host));
        write_state(&mut out, state);
    }
    for ((host, service), state) in &tables.services {
        out.push('\n');
        let _ = writeln!(
            out,
            "type=service\nhost_name={}\nservice_description={}",
            escape(host),
            escape(service)
        );
        write_state(&mut out, state);
    }
    out
}

struct Block {
    first_line: usize,
    pairs: Vec<(usize, String, String)>,
}

impl Block {
    fn get(&self, key: &str) -> Option<(usize, &str)> {
        self.pairs
            .iter()
            .find(|(_, k, _)| k == key)
            .map(|(l, _, v)| (*l, v.as_str()))
    }

    fn require(&self, key: &str) -> Result<(usize, &str), FormatError> {
        self.get(key).ok_or_else(|| FormatError {
            line: self.first_line,
            message: format!("missing '{key}'"),
        })
    }

    fn text(&self, key: &str) -> Result<String, FormatError> {
        let (line, v) = self.require(key)?;
        unescape(v).map_err(|message| FormatError { line, message })
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<T, FormatError>
    where
        T::Err: std::fmt::Display,
    {
        let (line, v) = self.require(key)?;
        v.parse().map_err(|e: T::Err| FormatError {
            line,
            message: format!("invalid {key}: {e}"),
        })
    }

    fn time(&self, key: &str) -> Result<Option<Timestamp>, FormatError> {
        match self.get(key) {
            None => Ok(None),
            Some((line, v)) => parse_ts(v).map(Some).map_err(|message| FormatError { line, message }),
        }
    }
}

fn blocks(text: &str) -> Result<Vec<Block>, FormatError> {
    let mut out = Vec::new();
    let mut cur: Option<Block> = None;
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        if raw.starts_with('#') {
            continue;
        }
        if raw.trim().is_empty() {
            out.extend(cur.take());
            continue;
        }
        let (k, v) = raw.split_once('=').ok_or_else(|| FormatError {
            line: n,
            message: "expected key=value".into(),
        })?;
        cur.get_or_insert_with(|| Block {
            first_line: n,
            pairs: Vec::new(),
        })
        .pairs
        .push((n, k.to_string(), v.to_string()));
    }
    out.extend(cur);
    Ok(out)
}

fn read_state<S>(b: &Block) -> Result<MonitorState<S>, FormatError>
where
    S: StateValue + FromStr,
    S::Err: std::fmt::Display,
{
    let acknowledgement = match b.get("ack_who") {
        None => None,
        Some(_) => Some(Acknowledgement {
            who: b.text("ack_who")?,
            comment: b.text("ack_comment")?,
            at: b.time("ack_at")?.ok_or_else(|| FormatError {
                line: b.first_line,
                message: "missing 'ack_at'".into(),
            })?,
        }),
    };
    let mut downtimes = Vec::new();
    for (line, k, v) in &b.pairs {
        if k != "downtime" {
            continue;
        }
        let err = |message: String| FormatError { line: *line, message };
        let f = unescape_fields(v).map_err(err)?;
        let [start, end, who, comment] = <[String; 4]>::try_from(f).map_err(|_| err("downtime needs 4 fields".into()))?;
        downtimes.push(Downtime {
            start: parse_ts(&start).map_err(err)?,
            end: parse_ts(&end).map_err(err)?,
            who,
            comment,
        });
    }
    let state_type: StateType = b.parsed("state_type")?;
    Ok(MonitorState {
        current_status: b.parsed("current_status")?,
        state_type,
        attempt: b.parsed("attempt")?,
        last_hard_status: b.parsed("last_hard_status")?,
        last_check: b.time("last_check")?,
        last_state_change: b.time("last_state_change")?,
        last_hard_change: b.time("last_hard_change")?,
        last_notification: b.time("last_notification")?,
        acknowledgement,
        downtimes,
        last_output: b.text("last_output")?,
    })
}

/// Parses a file written by [`write_tables`]. Returns the header pairs
/// (unescaped, without `format`) and the object tables.
pub fn read_tables(expected_format: &str, text: &str) -> Result<(BTreeMap<String, String>, StateTables), FormatError> {
    let mut bs = blocks(text)?.into_iter();
    let header = bs.next().ok_or(FormatError {
        line: 1,
        message: "empty file".into(),
    })?;
    let (line, format) = header.require("format")?;
    if format != expected_format {
        return Err(FormatError {
            line,
            message: format!("unexpected format '{format}'"),
        });
    }
    let mut head = BTreeMap::new();
    for (line, k, v) in &header.pairs {
        if k != "format" {
            head.insert(k.clone(), unescape(v).map_err(|message| FormatError { line: *line, message })?);
        }
    }
    let mut tables = StateTables::default();
    for b in bs {
        let (line, kind) = b.require("type")?;
        let host = b.text("host_name")?;
        let dup = match kind {
            "host" => tables.hosts.insert(host, read_state(&b)?).is_some(),
            "service" => {
                let service = b.text("service_description")?;
                tables.services.insert((host, service), read_state(&b)?).is_some()
            }
            other => {
                return Err(FormatError {
                    line,
                    message: format!("unknown entry type '{other}'"),
                })
            }
        };
        if dup {
            return Err(FormatError {
                line: b.first_line,
                message: "duplicate entry".into(),
            });
        }
    }
    Ok((head, tables))
}
