use std::fmt;

use chrono::{DateTime, Utc};

use crate::checkcore::{CheckOrigin, CheckResult, CheckStatus};
use crate::{ObjectRef, Timestamp};

pub const SERVICE_KEYWORD: &str = "PROCESS_SERVICE_CHECK_RESULT";
pub const HOST_KEYWORD: &str = "PROCESS_HOST_CHECK_RESULT";

/// Default tolerance for producer clocks.
pub const DEFAULT_SKEW_WINDOW: std::time::Duration = std::time::Duration::from_secs(15 * 60);

/// One passive check result on the wire:
///
/// ```text
/// [<epoch>] PROCESS_SERVICE_CHECK_RESULT;<host>;<service>;<code>;<output>
/// [<epoch>] PROCESS_HOST_CHECK_RESULT;<host>;<code>;<output>
/// ```
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PassiveResultLine {
    /// Producer time, seconds since the epoch.
    pub received_at: i64,
    pub host: String,
    /// `None` for host results.
    pub service: Option<String>,
    /// 0..=3 for services, 0 (up) or 1 (down) for hosts.
    pub code: u8,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed result line '{line}': {reason}")]
pub struct DecodeError {
    pub line: String,
    pub reason: String,
}

fn bad_char(c: char) -> bool {
    matches!(c, '\t' | '\r' | '\n')
}

impl PassiveResultLine {
    pub fn service(
        received_at: i64,
        host: impl Into<String>,
        service: impl Into<String>,
        code: u8,
        output: impl Into<String>,
    ) -> Self {
        PassiveResultLine {
            received_at,
            host: host.into(),
            service: Some(service.into()),
            code,
            output: output.into(),
        }
    }

    pub fn host(received_at: i64, host: impl Into<String>, code: u8, output: impl Into<String>) -> Self {
        PassiveResultLine {
            received_at,
            host: host.into(),
            service: None,
            code,
            output: output.into(),
        }
    }

    pub fn is_host(&self) -> bool {
        self.service.is_none()
    }

    pub fn target(&self) -> ObjectRef {
        match &self.service {
            Some(s) => ObjectRef::service(&self.host, s),
            None => ObjectRef::host(&self.host),
        }
    }

    pub fn max_code(&self) -> u8 {
        if self.is_host() {
            1
        } else {
            3
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.received_at < 0 {
            return Err("negative timestamp".into());
        }
        if self.host.is_empty() {
            return Err("empty host".into());
        }
        let names = std::iter::once(&self.host).chain(self.service.as_ref());
        for name in names {
            if name.chars().any(|c| bad_char(c) || c == ';') {
                return Err(format!("invalid character in name '{name}'"));
            }
        }
        if self.service.as_deref() == Some("") {
            return Err("empty service".into());
        }
        if self.output.chars().any(bad_char) {
            return Err("line break or tab in output".into());
        }
        if self.code > self.max_code() {
            return Err(format!("code {} out of range", self.code));
        }
        Ok(())
    }

    /// The wire form, LF-terminated.
    pub fn encode(&self) -> String {
        match &self.service {
            Some(service) => format!(
                "[{}] {SERVICE_KEYWORD};{};{service};{};{}\n",
                self.received_at, self.host, self.code, self.output
            ),
            None => format!(
                "[{}] {HOST_KEYWORD};{};{};{}\n",
                self.received_at, self.host, self.code, self.output
            ),
        }
    }

    /// Parses one line; a single trailing LF is accepted.
    pub fn decode(text: &str) -> Result<Self, DecodeError> {
        let line = text.strip_suffix('\n').unwrap_or(text);
        let err = |reason: &str| DecodeError {
            line: line.to_string(),
            reason: reason.to_string(),
        };
        let rest = line.strip_prefix('[').ok_or_else(|| err("missing '['"))?;
        let (epoch, rest) = rest.split_once("] ").ok_or_else(|| err("missing '] '"))?;
        if epoch.is_empty() || !epoch.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err("invalid timestamp"));
        }
        let received_at: i64 = epoch.parse().map_err(|_| err("invalid timestamp"))?;
        let (keyword, fields) = rest.split_once(';').ok_or_else(|| err("missing fields"))?;
        let parsed = match keyword {
            SERVICE_KEYWORD => {
                let mut f = fields.splitn(4, ';');
                let (Some(host), Some(service), Some(code), Some(output)) = (f.next(), f.next(), f.next(), f.next())
                else {
                    return Err(err("expected 5 fields"));
                };
                PassiveResultLine::service(received_at, host, service, parse_code(code).ok_or_else(|| err("invalid code"))?, output)
            }
            HOST_KEYWORD => {
                let mut f = fields.splitn(3, ';');
                let (Some(host), Some(code), Some(output)) = (f.next(), f.next(), f.next()) else {
                    return Err(err("expected 4 fields"));
                };
                PassiveResultLine::host(received_at, host, parse_code(code).ok_or_else(|| err("invalid code"))?, output)
            }
            _ => return Err(err("unknown command keyword")),
        };
        parsed.validate().map_err(|r| err(&r))?;
        Ok(parsed)
    }

    pub fn status(&self) -> CheckStatus {
        match (self.is_host(), self.code) {
            (true, 0) => CheckStatus::Ok,
            (true, _) => CheckStatus::Critical,
            (false, c) => CheckStatus::from_code(i64::from(c)).unwrap_or(CheckStatus::Unknown),
        }
    }

    /// Producer timestamp, or `now` when it lies outside `now ± window`.
    /// The flag reports whether the substitution happened.
    pub fn effective_time(&self, now: Timestamp, window: std::time::Duration) -> (Timestamp, bool) {
        let window = chrono::Duration::from_std(window).unwrap_or(chrono::Duration::MAX);
        match DateTime::<Utc>::from_timestamp(self.received_at, 0) {
            Some(t) if (t - now).abs() <= window => (t, false),
            _ => (now, true),
        }
    }

    pub fn to_check_result(&self, at: Timestamp, source: impl Into<String>) -> CheckResult {
        CheckResult::new(self.status(), &self.output, at, at, CheckOrigin::Passive, source)
    }
}

fn parse_code(s: &str) -> Option<u8> {
    if s.len() != 1 {
        return None;
    }
    s.parse().ok()
}

impl fmt::Display for PassiveResultLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.encode().trim_end_matches('\n'))
    }
}
