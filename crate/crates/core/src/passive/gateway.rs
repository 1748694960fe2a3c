use std::io;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use tokio::io::{AsyncBufRead, AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream, ToSocketAddrs};
use tokio::sync::mpsc;
use tracing::{debug, info, warn};

use super::codec::PassiveResultLine;

/// Longest accepted line, excluding the terminating LF.
pub const MAX_LINE_BYTES: usize = 8192;

pub const REPLY_OK: &str = "OK";
pub const REPLY_PARSE: &str = "ERR parse";
pub const REPLY_AUTH: &str = "ERR auth";
pub const REPLY_TOO_LONG: &str = "ERR too long";

#[derive(Debug, Clone, Default)]
pub struct GatewayOptions {
    /// When set, every connection must start with `AUTH <token>`.
    pub token: Option<String>,
}

/// A decoded line together with the connection it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Submission {
    pub line: PassiveResultLine,
    pub peer: SocketAddr,
}

#[derive(Debug, Default)]
pub struct GatewayStats {
    pub connections: AtomicU64,
    pub accepted: AtomicU64,
    pub rejected: AtomicU64,
    pub auth_failures: AtomicU64,
}

enum Line {
    Text(String),
    TooLong,
    Eof,
}

/// Reads one LF-terminated line without ever buffering more than
/// [`MAX_LINE_BYTES`]; longer lines are consumed and reported as too long.
async fn read_line<R: AsyncBufRead + Unpin>(reader: &mut R) -> io::Result<Line> {
    let mut buf = Vec::new();
    let mut overflow = false;
    loop {
        let chunk = reader.fill_buf().await?;
        if chunk.is_empty() {
            return Ok(if overflow {
                Line::TooLong
            } else if buf.is_empty() {
                Line::Eof
            } else {
                Line::Text(String::from_utf8_lossy(&buf).into_owned())
            });
        }
        let (take, done) = match chunk.iter().position(|&b| b == b'\n') {
            Some(i) => (i, true),
            None => (chunk.len(), false),
        };
        if !overflow {
            if buf.len() + take > MAX_LINE_BYTES {
                overflow = true;
                buf.clear();
            } else {
                buf.extend_from_slice(&chunk[..take]);
            }
        }
        reader.consume(if done { take + 1 } else { take });
        if done {
            if overflow {
                return Ok(Line::TooLong);
            }
            if buf.last() == Some(&b'\r') {
                buf.pop();
            }
            return Ok(Line::Text(String::from_utf8_lossy(&buf).into_owned()));
        }
    }
}

async fn handle_connection(
    stream: TcpStream,
    peer: SocketAddr,
    options: Arc<GatewayOptions>,
    sink: mpsc::Sender<Submission>,
    stats: Arc<GatewayStats>,
) -> io::Result<()> {
    let (read, mut write) = stream.into_split();
    let mut reader = BufReader::new(read);
    let reply = |text: &str| format!("{text}\n");

    if let Some(token) = &options.token {
        let ok = match read_line(&mut reader).await? {
            Line::Text(t) => t.strip_prefix("AUTH ").map(str::trim) == Some(token.as_str()),
            _ => false,
        };
        if !ok {
            stats.auth_failures.fetch_add(1, Ordering::Relaxed);
            warn!(%peer, "gateway authentication failed");
            write.write_all(reply(REPLY_AUTH).as_bytes()).await?;
            return Ok(());
        }
    }

    loop {
        let text = match read_line(&mut reader).await? {
            Line::Eof => return Ok(()),
            Line::TooLong => {
                stats.rejected.fetch_add(1, Ordering::Relaxed);
                write.write_all(reply(REPLY_TOO_LONG).as_bytes()).await?;
                continue;
            }
            Line::Text(t) => t,
        };
        if text.trim().is_empty() {
            continue;
        }
        if options.token.is_none() && text.starts_with("AUTH ") {
            continue;
        }
        match PassiveResultLine::decode(&text) {
            Ok(line) => {
                if sink.send(Submission { line, peer }).await.is_err() {
                    return Ok(());
                }
                stats.accepted.fetch_add(1, Ordering::Relaxed);
                write.write_all(reply(REPLY_OK).as_bytes()).await?;
            }
            Err(e) => {
                stats.rejected.fetch_add(1, Ordering::Relaxed);
                debug!(%peer, error = %e, "rejected gateway line");
                write.write_all(reply(REPLY_PARSE).as_bytes()).await?;
            }
        }
    }
}

/// Serves the line protocol on `listener` until the sink is closed.
///
/// Each valid line is forwarded before it is acknowledged, so an `OK`
/// always means the result reached the sink. Per-connection order is kept.
pub async fn run_gateway(
    listener: TcpListener,
    options: GatewayOptions,
    sink: mpsc::Sender<Submission>,
    stats: Arc<GatewayStats>,
) -> io::Result<()> {
    let options = Arc::new(options);
    if let Ok(addr) = listener.local_addr() {
        info!(%addr, "gateway listening");
    }
    loop {
        let (stream, peer) = tokio::select! {
            accepted = listener.accept() => accepted?,
            _ = sink.closed() => return Ok(()),
        };
        stats.connections.fetch_add(1, Ordering::Relaxed);
        let (options, sink, stats) = (options.clone(), sink.clone(), stats.clone());
        tokio::spawn(async move {
            if let Err(e) = handle_connection(stream, peer, options, sink, stats).await {
                debug!(%peer, error = %e, "gateway connection ended with error");
            }
        });
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("gateway i/o: {0}")]
    Io(#[from] io::Error),
    #[error("gateway closed the connection")]
    Closed,
    #[error("gateway replied '{0}'")]
    Rejected(String),
    #[error("gateway did not answer within {0:?}")]
    Timeout(Duration),
}

/// Connection to a gateway speaking the line protocol.
pub struct GatewayClient {
    reader: BufReader<tokio::net::tcp::OwnedReadHalf>,
    writer: tokio::net::tcp::OwnedWriteHalf,
    timeout: Duration,
}

impl GatewayClient {
    pub async fn connect(
        addr: impl ToSocketAddrs,
        token: Option<&str>,
        timeout: Duration,
    ) -> Result<Self, ClientError> {
        let stream = tokio::time::timeout(timeout, TcpStream::connect(addr))
            .await
            .map_err(|_| ClientError::Timeout(timeout))??;
        stream.set_nodelay(true)?;
        let (read, writer) = stream.into_split();
        let mut client = GatewayClient {
            reader: BufReader::new(read),
            writer,
            timeout,
        };
        if let Some(token) = token {
            client.writer.write_all(format!("AUTH {token}\n").as_bytes()).await?;
        }
        Ok(client)
    }

    async fn read_reply(&mut self) -> Result<String, ClientError> {
        let mut line = String::new();
        let n = tokio::time::timeout(self.timeout, self.reader.read_line(&mut line))
            .await
            .map_err(|_| ClientError::Timeout(self.timeout))??;
        if n == 0 {
            return Err(ClientError::Closed);
        }
        Ok(line.trim_end().to_string())
    }

    /// Sends one result and waits for its acknowledgement.
    pub async fn submit(&mut self, line: &PassiveResultLine) -> Result<(), ClientError> {
        self.writer.write_all(line.encode().as_bytes()).await?;
        match self.read_reply().await? {
            r if r == REPLY_OK => Ok(()),
            r => Err(ClientError::Rejected(r)),
        }
    }

    /// Pipelines `lines` and collects one reply per line, in order.
    pub async fn submit_batch(&mut self, lines: &[PassiveResultLine]) -> Result<Vec<Result<(), String>>, ClientError> {
        let mut payload = String::new();
        for l in lines {
            payload.push_str(&l.encode());
        }
        self.writer.write_all(payload.as_bytes()).await?;
        let mut replies = Vec::with_capacity(lines.len());
        for _ in lines {
            let r = self.read_reply().await?;
            replies.push(if r == REPLY_OK { Ok(()) } else { Err(r) });
        }
        Ok(replies)
    }

    /// Sends raw text and returns the next reply line. Meant for probing.
    pub async fn send_raw(&mut self, text: &str) -> Result<String, ClientError> {
        self.writer.write_all(text.as_bytes()).await?;
        self.read_reply().await
    }
}
