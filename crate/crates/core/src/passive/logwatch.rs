use std::collections::VecDeque;
use std::fs::File;
use std::io::{self, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use chrono::Utc;
use tracing::{info, warn};

use super::codec::PassiveResultLine;
use super::gateway::{ClientError, GatewayClient};
use super::rules::{match_line, LogRule};

pub const DEFAULT_BUFFER_CAPACITY: usize = 10_000;
pub const DEFAULT_POLL_INTERVAL: Duration = Duration::from_millis(250);

fn file_id(meta: &std::fs::Metadata) -> u64 {
    #[cfg(unix)]
    {
        use std::os::unix::fs::MetadataExt;
        meta.ino()
    }
    #[cfg(not(unix))]
    {
        let _ = meta;
        0
    }
}

/// Follows one file, surviving truncation and rotation.
#[derive(Debug)]
pub struct FileFollower {
    path: PathBuf,
    file: Option<File>,
    id: u64,
    pos: u64,
    partial: Vec<u8>,
    /// Whether the next open starts at the end (first open) or the start
    /// (a file that appeared or was rotated while we watched).
    from_end: bool,
    failing: bool,
}

impl FileFollower {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        FileFollower {
            path: path.into(),
            file: None,
            id: 0,
            pos: 0,
            partial: Vec::new(),
            from_end: true,
            failing: false,
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn open(&mut self) -> io::Result<()> {
        let mut file = File::open(&self.path)?;
        let meta = file.metadata()?;
        self.id = file_id(&meta);
        self.pos = if self.from_end { meta.len() } else { 0 };
        file.seek(SeekFrom::Start(self.pos))?;
        self.file = Some(file);
        self.partial.clear();
        self.from_end = false;
        Ok(())
    }

    /// Complete lines appended since the last poll.
    pub fn poll(&mut self) -> io::Result<Vec<String>> {
        let result = self.poll_inner();
        match &result {
            Err(e) if !self.failing => {
                warn!(path = %self.path.display(), error = %e, "cannot read watched file, will retry");
                self.failing = true;
            }
            Ok(_) if self.failing => {
                info!(path = %self.path.display(), "watched file readable again");
                self.failing = false;
            }
            _ => {}
        }
        result
    }

    fn poll_inner(&mut self) -> io::Result<Vec<String>> {
        let mut lines = Vec::new();
        if self.file.is_some() {
            match std::fs::metadata(&self.path) {
                Ok(meta) if file_id(&meta) != self.id => {
                    // Rotated: drain what the old file still holds, then switch.
                    self.read_available(&mut lines)?;
                    self.file = None;
                }
                Ok(meta) if meta.len() < self.pos => {
                    self.file = None;
                }
                Ok(_) => {}
                Err(e) => {
                    self.read_available(&mut lines)?;
                    self.file = None;
                    self.from_end = false;
                    if lines.is_empty() {
                        return Err(e);
                    }
                    return Ok(lines);
                }
            }
        }
        if self.file.is_none() {
            if let Err(e) = self.open() {
                // A file that shows up later is read from its start.
                self.from_end = false;
                return Err(e);
            }
        }
        self.read_available(&mut lines)?;
        Ok(lines)
    }

    fn read_available(&mut self, lines: &mut Vec<String>) -> io::Result<()> {
        let Some(file) = self.file.as_mut() else { return Ok(()) };
        let mut buf = Vec::new();
        let n = file.read_to_end(&mut buf)?;
        self.pos += n as u64;
        self.partial.extend_from_slice(&buf);
        while let Some(i) = self.partial.iter().position(|&b| b == b'\n') {
            let raw: Vec<u8> = self.partial.drain(..=i).collect();
            let text = String::from_utf8_lossy(&raw[..raw.len() - 1]);
            lines.push(text.trim_end_matches('\r').to_string());
        }
        Ok(())
    }
}

/// Bounded FIFO of pending submissions; the oldest entries go first when full.
#[derive(Debug)]
pub struct SubmitBuffer {
    queue: VecDeque<PassiveResultLine>,
    capacity: usize,
    pub dropped: u64,
}

impl SubmitBuffer {
    pub fn new(capacity: usize) -> Self {
        SubmitBuffer {
            queue: VecDeque::new(),
            capacity: capacity.max(1),
            dropped: 0,
        }
    }

    pub fn push(&mut self, line: PassiveResultLine) {
        if self.queue.len() == self.capacity {
            self.queue.pop_front();
            self.dropped += 1;
        }
        self.queue.push_back(line);
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn front(&self) -> Option<&PassiveResultLine> {
        self.queue.front()
    }

    pub fn pop_front(&mut self) -> Option<PassiveResultLine> {
        self.queue.pop_front()
    }
}

#[derive(Debug, Clone)]
pub struct LogWatchOptions {
    pub gateway: String,
    pub token: Option<String>,
    pub poll_interval: Duration,
    pub buffer_capacity: usize,
    pub connect_timeout: Duration,
}

impl LogWatchOptions {
    pub fn new(gateway: impl Into<String>) -> Self {
        LogWatchOptions {
            gateway: gateway.into(),
            token: None,
            poll_interval: DEFAULT_POLL_INTERVAL,
            buffer_capacity: DEFAULT_BUFFER_CAPACITY,
            connect_timeout: Duration::from_secs(5),
        }
    }
}

#[derive(Debug, Default)]
pub struct LogWatchStats {
    pub lines: AtomicU64,
    pub matched: AtomicU64,
    pub submitted: AtomicU64,
    pub dropped: AtomicU64,
    pub rejected: AtomicU64,
}

/// Tails `files`, matches new lines against `rules` and submits matches to
/// the gateway. Runs until the task is dropped.
///
/// Delivery is at least once while the gateway is reachable: a line leaves
/// the buffer only after the gateway acknowledged it. Lines the gateway
/// rejects are logged and discarded.
pub async fn run_logwatch(files: Vec<PathBuf>, rules: Vec<LogRule>, options: LogWatchOptions, stats: Arc<LogWatchStats>) {
    let mut followers: Vec<FileFollower> = files.into_iter().map(FileFollower::new).collect();
    let mut buffer = SubmitBuffer::new(options.buffer_capacity);
    let mut client: Option<GatewayClient> = None;
    let mut gateway_down = false;
    let mut ticker = tokio::time::interval(options.poll_interval);
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);

    loop {
        ticker.tick().await;
        for f in &mut followers {
            let Ok(lines) = f.poll() else { continue };
            let epoch = Utc::now().timestamp();
            for line in lines {
                stats.lines.fetch_add(1, Ordering::Relaxed);
                if let Some(r) = match_line(&rules, &line, epoch) {
                    stats.matched.fetch_add(1, Ordering::Relaxed);
                    buffer.push(r);
                }
            }
        }
        stats.dropped.store(buffer.dropped, Ordering::Relaxed);

        while let Some(next) = buffer.front() {
            if client.is_none() {
                match GatewayClient::connect(&options.gateway, options.token.as_deref(), options.connect_timeout).await {
                    Ok(c) => {
                        if gateway_down {
                            info!(gateway = %options.gateway, "gateway reachable again");
                        }
                        gateway_down = false;
                        client = Some(c);
                    }
                    Err(e) => {
                        if !gateway_down {
                            warn!(gateway = %options.gateway, error = %e, pending = buffer.len(), "gateway unreachable, buffering");
                        }
                        gateway_down = true;
                        break;
                    }
                }
            }
            let c = client.as_mut().expect("connected above");
            match c.submit(next).await {
                Ok(()) => {
                    buffer.pop_front();
                    stats.submitted.fetch_add(1, Ordering::Relaxed);
                }
                Err(ClientError::Rejected(reply)) => {
                    warn!(line = %next, %reply, "gateway rejected log match");
                    buffer.pop_front();
                    stats.rejected.fetch_add(1, Ordering::Relaxed);
                    if reply.starts_with("ERR auth") {
                        client = None;
                    }
                }
                Err(e) => {
                    if !gateway_down {
                        warn!(gateway = %options.gateway, error = %e, "gateway connection lost, buffering");
                    }
                    gateway_down = true;
                    client = None;
                    break;
                }
            }
        }
    }
}
