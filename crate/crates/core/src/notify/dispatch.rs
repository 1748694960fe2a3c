use std::process::Stdio;
use std::sync::Arc;
use std::time::Duration;

use chrono::Utc;
use tokio::io::AsyncWriteExt;
use tokio::process::Command;
use tokio::sync::{mpsc, Semaphore};
use tracing::warn;

use super::message::NotificationMessage;
use crate::checkcore::expand_macros;
use crate::objconf::ResolvedConfig;
use crate::{Timestamp, Zone};

pub const DEFAULT_DISPATCH_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_DISPATCH_WORKERS: usize = 4;
/// Attempts per channel: the first try plus one retry.
pub const DISPATCH_ATTEMPTS: u32 = 2;

/// One resolved delivery target for a message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelJob {
    pub group: String,
    pub channel: String,
    pub command_line: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DispatchRecord {
    pub group: String,
    pub channel: String,
    pub at: Timestamp,
    pub success: bool,
    pub exit_code: Option<i32>,
    pub attempts: u32,
    pub error: Option<String>,
}

impl DispatchRecord {
    /// `<ISO8601> <recipient-group> <channel> <status>`
    pub fn log_line(&self) -> String {
        format!(
            "{} {} {} {}",
            self.at.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            self.group,
            self.channel,
            if self.success { "OK" } else { "FAILED" }
        )
    }
}

/// Resolves the message recipients into channel jobs. Channels whose
/// period override does not contain `now` are skipped, as are unknown
/// groups and commands.
pub fn channel_jobs(msg: &NotificationMessage, config: &ResolvedConfig, zone: &Zone, now: Timestamp) -> Vec<ChannelJob> {
    let local = zone.local(now);
    let mut jobs = Vec::new();
    for group in &msg.recipients {
        let Some(cg) = config.contactgroups.get(group) else {
            warn!(%group, "notification for unknown contact group");
            continue;
        };
        for ch in &cg.channels {
            if let Some(period) = &ch.period {
                match config.period(period) {
                    Some(p) if p.contains(&local) => {}
                    Some(_) => continue,
                    None => {
                        warn!(%group, %period, "unknown channel period");
                        continue;
                    }
                }
            }
            let Some(cmd) = config.commands.get(&ch.command) else {
                warn!(%group, command = %ch.command, "unknown channel command");
                continue;
            };
            jobs.push(ChannelJob {
                group: group.clone(),
                channel: ch.command.clone(),
                command_line: cmd.command_line.clone(),
            });
        }
    }
    jobs
}

/// Substitutes the message fields into a channel command line. Values are
/// shell-quoted because the result runs under `/bin/sh -c`.
pub fn expand_channel_command(template: &str, msg: &NotificationMessage, group: &str, zone: &Zone) -> String {
    let q = |s: &str| shell_words::quote(s).into_owned();
    let macros = vec![
        ("NOTIFICATIONTYPE".to_string(), q(msg.notification_type.name())),
        ("SERVICEDESC".to_string(), q(msg.service_description.as_deref().unwrap_or(""))),
        ("HOSTALIAS".to_string(), q(&msg.host_alias)),
        ("HOSTADDRESS".to_string(), q(&msg.address)),
        ("SERVICESTATE".to_string(), q(&msg.state)),
        ("DATETIME".to_string(), q(&msg.date_time(zone))),
        ("OUTPUT".to_string(), q(&msg.additional_info)),
        ("CONTACTGROUP".to_string(), q(group)),
    ];
    expand_macros(template, &macros)
}

async fn run_once(command: &str, input: &str, timeout: Duration) -> Result<(), (Option<i32>, String)> {
    let mut child = Command::new("/bin/sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .kill_on_drop(true)
        .spawn()
        .map_err(|e| (None, e.to_string()))?;
    let mut stdin = child.stdin.take().expect("stdin piped");
    let input = input.as_bytes().to_vec();
    let run = async move {
        // A channel that ignores stdin may close it early; that is not a failure.
        let _ = stdin.write_all(&input).await;
        drop(stdin);
        child.wait().await
    };
    match tokio::time::timeout(timeout, run).await {
        Ok(Ok(status)) if status.success() => Ok(()),
        Ok(Ok(status)) => Err((status.code(), format!("exit status {status}"))),
        Ok(Err(e)) => Err((None, e.to_string())),
        Err(_) => Err((None, "timed out".into())),
    }
}

/// Runs one channel job with the rendered message on stdin, retrying once.
pub async fn dispatch(
    job: &ChannelJob,
    msg: &NotificationMessage,
    rendered: &str,
    zone: &Zone,
    timeout: Duration,
) -> DispatchRecord {
    let command = expand_channel_command(&job.command_line, msg, &job.group, zone);
    let mut last_err = None;
    let mut attempts = 0;
    while attempts < DISPATCH_ATTEMPTS {
        attempts += 1;
        match run_once(&command, rendered, timeout).await {
            Ok(()) => {
                return DispatchRecord {
                    group: job.group.clone(),
                    channel: job.channel.clone(),
                    at: Utc::now(),
                    success: true,
                    exit_code: Some(0),
                    attempts,
                    error: None,
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let (exit_code, error) = last_err.unwrap_or((None, String::new()));
    warn!(group = %job.group, channel = %job.channel, %error, "notification dispatch failed");
    DispatchRecord {
        group: job.group.clone(),
        channel: job.channel.clone(),
        at: Utc::now(),
        success: false,
        exit_code,
        attempts,
        error: Some(error),
    }
}

/// Bounded pool running dispatches off the state thread.
#[derive(Debug, Clone)]
pub struct Dispatcher {
    permits: Arc<Semaphore>,
    pub timeout: Duration,
    pub zone: Zone,
}

impl Dispatcher {
    pub fn new(workers: usize, timeout: Duration, zone: Zone) -> Self {
        Dispatcher {
            permits: Arc::new(Semaphore::new(workers.max(1))),
            timeout,
            zone,
        }
    }

    /// Queues every job; records arrive on `sink` in completion order.
    pub fn submit(
        &self,
        jobs: Vec<ChannelJob>,
        msg: NotificationMessage,
        rendered: String,
        sink: mpsc::UnboundedSender<DispatchRecord>,
    ) {
        let msg = Arc::new(msg);
        let rendered: Arc<str> = rendered.into();
        for job in jobs {
            let permits = self.permits.clone();
            let (msg, rendered, sink) = (msg.clone(), rendered.clone(), sink.clone());
            let (zone, timeout) = (self.zone.clone(), self.timeout);
            tokio::spawn(async move {
                let Ok(_permit) = permits.acquire_owned().await else { return };
                let record = dispatch(&job, &msg, &rendered, &zone, timeout).await;
                let _ = sink.send(record);
            });
        }
    }
}
