use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, SecondsFormat, Utc};
use tracing::warn;

use super::format::{read_tables, write_tables, FormatError, StateTables, RETENTION_FORMAT, STATUS_FORMAT};
use crate::objconf::ResolvedConfig;
use crate::Timestamp;

pub const STATUS_FILE: &str = "status.dat";
pub const DEFAULT_STATUS_INTERVAL: Duration = Duration::from_secs(10);

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: FormatError },
    #[error("injected fault at {0:?}")]
    Injected(FaultPoint),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StatusSnapshot {
    pub generated_at: Timestamp,
    pub tables: StateTables,
}

/// Steps of an atomic write at which a test can make it fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultPoint {
    AfterCreate,
    MidWrite,
    BeforeRename,
}

/// Writes `contents` to a temporary file next to `path` and renames it into
/// place. On any failure `path` keeps its previous contents.
pub fn write_atomic(path: &Path, contents: &str, fault: Option<FaultPoint>) -> Result<(), StoreError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut file = File::create(&tmp).map_err(io_err(&tmp))?;
        if fault == Some(FaultPoint::AfterCreate) {
            return Err(StoreError::Injected(FaultPoint::AfterCreate));
        }
        let bytes = contents.as_bytes();
        let half = bytes.len() / 2;
        file.write_all(&bytes[..half]).map_err(io_err(&tmp))?;
        if fault == Some(FaultPoint::MidWrite) {
            return Err(StoreError::Injected(FaultPoint::MidWrite));
        }
        file.write_all(&bytes[half..]).map_err(io_err(&tmp))?;
        file.sync_all().map_err(io_err(&tmp))?;
        if fault == Some(FaultPoint::BeforeRename) {
            return Err(StoreError::Injected(FaultPoint::BeforeRename));
        }
        fs::rename(&tmp, path).map_err(io_err(path))
    })();
    if result.is_err() && !matches!(result, Err(StoreError::Injected(_))) {
        let _ = fs::remove_file(&tmp);
    }
    result
}

pub fn encode_status(snapshot: &StatusSnapshot) -> String {
    let header = [(
        "generated_at",
        snapshot.generated_at.to_rfc3339_opts(SecondsFormat::AutoSi, true),
    )];
    write_tables(STATUS_FORMAT, &header, &snapshot.tables)
}

pub fn decode_status(text: &str) -> Result<StatusSnapshot, FormatError> {
    let (head, tables) = read_tables(STATUS_FORMAT, text)?;
    let generated_at = head
        .get("generated_at")
        .ok_or(FormatError {
            line: 1,
            message: "missing 'generated_at'".into(),
        })
        .and_then(|v| {
            DateTime::parse_from_rfc3339(v).map_err(|e| FormatError {
                line: 1,
                message: format!("invalid generated_at: {e}"),
            })
        })?
        .with_timezone(&Utc);
    Ok(StatusSnapshot { generated_at, tables })
}

pub fn read_status(dir: &Path) -> Result<StatusSnapshot, StoreError> {
    let path = dir.join(STATUS_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    decode_status(&text).map_err(|source| StoreError::Format { path, source })
}

/// Writes `status.dat` snapshots into one directory, keeping `generated_at`
/// non-decreasing across writes.
#[derive(Debug)]
pub struct StatusWriter {
    dir: PathBuf,
    last_generated: Option<Timestamp>,
    /// Fail the next write at this step.
    pub fault: Option<FaultPoint>,
}

impl StatusWriter {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        StatusWriter {
            dir: dir.into(),
            last_generated: None,
            fault: None,
        }
    }

    pub fn path(&self) -> PathBuf {
        self.dir.join(STATUS_FILE)
    }

    /// Returns the `generated_at` actually written.
    pub fn write(&mut self, snapshot: &StatusSnapshot) -> Result<Timestamp, StoreError> {
        let generated_at = match self.last_generated {
            Some(last) if last > snapshot.generated_at => last,
            _ => snapshot.generated_at,
        };
        let text = encode_status(&StatusSnapshot {
            generated_at,
            tables: snapshot.tables.clone(),
        });
        let result = write_atomic(&self.path(), &text, self.fault.take());
        match result {
            Ok(()) => {
                self.last_generated = Some(generated_at);
                Ok(generated_at)
            }
            Err(e) => {
                warn!(path = %self.path().display(), error = %e, "status write failed, previous file kept");
                Err(e)
            }
        }
    }
}

pub fn write_retention(tables: &StateTables, path: &Path) -> Result<(), StoreError> {
    let header = [("written_at", Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true))];
    write_atomic(path, &write_tables(RETENTION_FORMAT, &header, tables), None)
}

/// Reads a retention file. A missing file is an empty table.
pub fn read_retention(path: &Path) -> Result<StateTables, StoreError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(StateTables::default()),
        Err(e) => return Err(io_err(path)(e)),
    };
    read_tables(RETENTION_FORMAT, &text)
        .map(|(_, t)| t)
        .map_err(|source| StoreError::Format {
            path: path.to_path_buf(),
            source,
        })
}

#[derive(Debug, Default)]
pub struct RetentionLoad {
    pub tables: StateTables,
    /// Entries for objects no longer configured.
    pub dropped: usize,
    /// Set when the file could not be used and the engine starts cold.
    pub cold_start: Option<String>,
}

/// Loads retention for the objects still present in `config`. Never fails:
/// unreadable or corrupt files give a cold start.
pub fn load_retention(path: &Path, config: &ResolvedConfig) -> RetentionLoad {
    let mut tables = match read_retention(path) {
        Ok(t) => t,
        Err(e) => {
            warn!(error = %e, "retention unusable, starting cold");
            return RetentionLoad {
                cold_start: Some(e.to_string()),
                ..Default::default()
            };
        }
    };
    let before = tables.len();
    tables.hosts.retain(|h, _| config.hosts.contains_key(h));
    tables.services.retain(|k, _| config.services.contains_key(k));
    let dropped = before - tables.len();
    if dropped > 0 {
        warn!(dropped, "dropped retention entries for unconfigured objects");
    }
    RetentionLoad {
        tables,
        dropped,
        cold_start: None,
    }
}
