use std::io;
use std::process::Stdio;
use std::time::Duration;

use chrono::Utc;
use tokio::io::{AsyncRead, AsyncReadExt};
use tokio::process::Command;
use tracing::debug;

use super::status::{first_line, CheckOrigin, CheckResult, CheckStatus, MAX_OUTPUT_BYTES};

/// Extra time granted to a killed process to be reaped.
pub const TERMINATION_GRACE: Duration = Duration::from_secs(2);

/// Bytes of standard output captured before the rest is discarded.
const CAPTURE_LIMIT: usize = 64 * 1024;

pub(crate) enum RunOutcome {
    Exited { code: Option<i32>, signal: Option<i32>, stdout: String },
    TimedOut,
    SpawnFailed(io::Error),
}

/// Renders a timeout the way it appears in check output: `1`, `0.5`.
pub fn format_seconds(d: Duration) -> String {
    format!("{}", d.as_secs_f64())
}

pub(crate) fn timeout_message(timeout: Duration) -> String {
    format!("check timed out after {}s", format_seconds(timeout))
}

/// Runs `argv` directly (no shell) with stdout captured, killing the whole
/// process group when `timeout` expires.
pub(crate) async fn run_captured(argv: &[String], timeout: Duration) -> RunOutcome {
    let Some((program, args)) = argv.split_first() else {
        return RunOutcome::SpawnFailed(io::Error::new(io::ErrorKind::InvalidInput, "empty command"));
    };
    let mut cmd = Command::new(program);
    cmd.args(args)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .kill_on_drop(true);
    #[cfg(unix)]
    cmd.process_group(0);

    let mut child = match cmd.spawn() {
        Ok(c) => c,
        Err(e) => return RunOutcome::SpawnFailed(e),
    };
    let pid = child.id();
    let mut stdout = child.stdout.take().expect("stdout piped");

    let run = async {
        let (captured, status) = tokio::join!(capture(&mut stdout), child.wait());
        (captured, status)
    };
    match tokio::time::timeout(timeout, run).await {
        Ok((captured, status)) => match status {
            Ok(status) => RunOutcome::Exited {
                code: status.code(),
                signal: exit_signal(&status),
                stdout: captured,
            },
            Err(e) => RunOutcome::SpawnFailed(e),
        },
        Err(_) => {
            kill_group(pid);
            let _ = child.start_kill();
            let _ = tokio::time::timeout(TERMINATION_GRACE, child.wait()).await;
            RunOutcome::TimedOut
        }
    }
}

async fn capture<R: AsyncRead + Unpin>(reader: &mut R) -> String {
    let mut buf = Vec::new();
    let _ = (&mut *reader).take(CAPTURE_LIMIT as u64).read_to_end(&mut buf).await;
    let discarded = tokio::io::copy(reader, &mut tokio::io::sink()).await.unwrap_or(0);
    if discarded > 0 {
        debug!(discarded, "discarded plugin output beyond capture limit");
    }
    String::from_utf8_lossy(&buf).into_owned()
}

#[cfg(unix)]
fn exit_signal(status: &std::process::ExitStatus) -> Option<i32> {
    use std::os::unix::process::ExitStatusExt;
    status.signal()
}

#[cfg(not(unix))]
fn exit_signal(_: &std::process::ExitStatus) -> Option<i32> {
    None
}

fn kill_group(pid: Option<u32>) {
    #[cfg(unix)]
    if let Some(pid) = pid.and_then(|p| i32::try_from(p).ok()) {
        // SAFETY: kill(2) on our own child's process group has no memory effects.
        unsafe {
            libc::kill(-pid, libc::SIGKILL);
        }
    }
    #[cfg(not(unix))]
    let _ = pid;
}

/// Runs an external plugin under the exit-code protocol.
///
/// Never fails: spawn errors and invalid exit codes become UNKNOWN, a
/// timeout becomes CRITICAL so that it raises an alarm.
pub async fn execute_plugin(argv: &[String], timeout: Duration) -> CheckResult {
    let started = Utc::now();
    let source = argv.first().cloned().unwrap_or_default();
    let (status, output) = match run_captured(argv, timeout).await {
        RunOutcome::Exited { code, signal, stdout } => {
            let line = first_line(&stdout, MAX_OUTPUT_BYTES);
            if stdout.lines().nth(1).is_some() {
                debug!(plugin = %source, "discarding plugin output after the first line");
            }
            match (code, signal) {
                (Some(code), _) => {
                    let (status, prefix) = CheckStatus::from_exit_code(code);
                    (status, format!("{}{line}", prefix.unwrap_or_default()))
                }
                (None, Some(sig)) => (CheckStatus::Unknown, format!("(killed by signal {sig}) {line}")),
                (None, None) => (CheckStatus::Unknown, format!("(no exit code) {line}")),
            }
        }
        RunOutcome::TimedOut => (CheckStatus::Critical, timeout_message(timeout)),
        RunOutcome::SpawnFailed(e) => (
            CheckStatus::Unknown,
            format!("UNKNOWN - could not execute '{source}': {e}"),
        ),
    };
    CheckResult::new(status, output, started, Utc::now(), CheckOrigin::Active, source)
}
