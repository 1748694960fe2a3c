use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::Timestamp;

/// Plugin exit-code protocol: 0 OK, 1 WARNING, 2 CRITICAL, 3 UNKNOWN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CheckStatus {
    Ok,
    Warning,
    Critical,
    Unknown,
}

impl CheckStatus {
    pub const ALL: [CheckStatus; 4] = [
        CheckStatus::Ok,
        CheckStatus::Warning,
        CheckStatus::Critical,
        CheckStatus::Unknown,
    ];

    pub fn code(self) -> u8 {
        match self {
            CheckStatus::Ok => 0,
            CheckStatus::Warning => 1,
            CheckStatus::Critical => 2,
            CheckStatus::Unknown => 3,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            0 => Some(CheckStatus::Ok),
            1 => Some(CheckStatus::Warning),
            2 => Some(CheckStatus::Critical),
            3 => Some(CheckStatus::Unknown),
            _ => None,
        }
    }

    /// Total mapping of a process exit code. Codes outside 0..=3 become
    /// UNKNOWN and yield the prefix to put in front of the plugin output.
    pub fn from_exit_code(code: i32) -> (Self, Option<String>) {
        match Self::from_code(i64::from(code)) {
            Some(s) => (s, None),
            None => (
                CheckStatus::Unknown,
                Some(format!("(invalid exit code {code}) ")),
            ),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CheckStatus::Ok => "OK",
            CheckStatus::Warning => "WARNING",
            CheckStatus::Critical => "CRITICAL",
            CheckStatus::Unknown => "UNKNOWN",
        }
    }

    pub fn is_ok(self) -> bool {
        self == CheckStatus::Ok
    }

    /// Rank used for cluster monotonicity: OK < WARNING < CRITICAL, with
    /// UNKNOWN ranked alongside CRITICAL.
    pub fn cluster_rank(self) -> u8 {
        match self {
            CheckStatus::Ok => 0,
            CheckStatus::Warning => 1,
            CheckStatus::Critical | CheckStatus::Unknown => 2,
        }
    }
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CheckStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Ok(code) = s.parse::<i64>() {
            return Self::from_code(code).ok_or_else(|| format!("status code {code} out of range"));
        }
        CheckStatus::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown status '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CheckOrigin {
    Active,
    Passive,
}

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckResult {
    pub status: CheckStatus,
    /// First line of plugin output, trimmed; never contains line breaks.
    pub output: String,
    pub started_at: Timestamp,
    pub finished_at: Timestamp,
    pub origin: CheckOrigin,
    /// Plugin path, probe name or gateway peer.
    pub source: String,
}

impl CheckResult {
    pub fn new(
        status: CheckStatus,
        output: impl AsRef<str>,
        started_at: Timestamp,
        finished_at: Timestamp,
        origin: CheckOrigin,
        source: impl Into<String>,
    ) -> Self {
        CheckResult {
            status,
            output: first_line(output.as_ref(), MAX_OUTPUT_BYTES),
            started_at,
            finished_at: finished_at.max(started_at),
            origin,
            source: source.into(),
        }
    }
}

/// Longest output line kept from a plugin.
pub const MAX_OUTPUT_BYTES: usize = 4096;

/// First line of `text`, trimmed and cut to at most `max` bytes.
pub fn first_line(text: &str, max: usize) -> String {
    let line = text.split(['\n', '\r']).next().unwrap_or_default().trim();
    if line.len() <= max {
        return line.to_string();
    }
    let mut end = max;
    while !line.is_char_boundary(end) {
        end -= 1;
    }
    line[..end].trim_end().to_string()
}
