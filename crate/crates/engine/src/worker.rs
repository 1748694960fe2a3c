//! Remote check worker: runs its share of the configured checks and reports
//! every result to a central gateway as a passive result line.

use std::sync::Arc;
use std::time::Duration;

use sentinel_core::checkcore::{
    plan_checks, run_scheduler, CheckExecutor, CheckOutcome, PlanScope, PlannedCheck, SchedulerCommand,
    SchedulerOptions, SchedulerStats,
};
use sentinel_core::objconf::ResolvedConfig;
use sentinel_core::passive::{ClientError, GatewayClient, PassiveResultLine};
use sentinel_core::statemachine::HostStatus;
use tokio::sync::mpsc;
use tracing::{info, warn};

/// `i/n`: this worker takes every host whose index in the sorted host list
/// is `i` modulo `n`, together with that host's services.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shard {
    pub index: usize,
    pub count: usize,
}

impl Default for Shard {
    fn default() -> Self {
        Shard { index: 0, count: 1 }
    }
}

impl std::str::FromStr for Shard {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (i, n) = s.split_once('/').ok_or_else(|| format!("shard '{s}' is not i/n"))?;
        let index: usize = i.trim().parse().map_err(|_| format!("invalid shard index '{i}'"))?;
        let count: usize = n.trim().parse().map_err(|_| format!("invalid shard count '{n}'"))?;
        if count == 0 || index >= count {
            return Err(format!("shard '{s}' out of range"));
        }
        Ok(Shard { index, count })
    }
}

impl Shard {
    pub fn owns(&self, config: &ResolvedConfig, host: &str) -> bool {
        config
            .hosts
            .keys()
            .position(|h| h == host)
            .is_some_and(|i| i % self.count == self.index)
    }
}

/// Every check with a command on the hosts of `shard`, regardless of the
/// active flag: the central engine may run these objects passive-only.
pub fn shard_plan(config: &ResolvedConfig, shard: Shard, timeout: Duration) -> (Vec<PlannedCheck>, Vec<String>) {
    let (plan, errors) = plan_checks(config, PlanScope::AllWithCommand, timeout);
    let owned: std::collections::BTreeSet<&str> = config
        .hosts
        .keys()
        .enumerate()
        .filter(|(i, _)| i % shard.count == shard.index)
        .map(|(_, h)| h.as_str())
        .collect();
    let plan = plan
        .into_iter()
        .filter(|p| owned.contains(p.job.target.host_name()))
        .collect();
    (plan, errors)
}

/// The wire line reporting `outcome`. Host results become code 0 (up) when
/// the check passed and 1 (down) otherwise.
pub fn outcome_line(outcome: &CheckOutcome) -> PassiveResultLine {
    let at = outcome.result.finished_at.timestamp();
    let host = outcome.target.host_name();
    match outcome.target.service_name() {
        Some(s) => PassiveResultLine::service(at, host, s, outcome.result.status.code(), &outcome.result.output),
        None => {
            let code = if HostStatus::check_passed(outcome.result.status) { 0 } else { 1 };
            PassiveResultLine::host(at, host, code, &outcome.result.output)
        }
    }
}

#[derive(Debug, Clone)]
pub struct WorkerOptions {
    pub gateway: String,
    pub token: Option<String>,
    /// Stop after this many acknowledged submissions.
    pub limit: Option<u64>,
    pub scheduler: SchedulerOptions,
    pub connect_timeout: Duration,
    pub retry_delay: Duration,
}

impl WorkerOptions {
    pub fn new(gateway: impl Into<String>) -> Self {
        WorkerOptions {
            gateway: gateway.into(),
            token: None,
            limit: None,
            scheduler: SchedulerOptions::default(),
            connect_timeout: Duration::from_secs(5),
            retry_delay: Duration::from_millis(500),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorkerReport {
    /// Lines the gateway acknowledged with `OK`.
    pub submitted: u64,
    /// Lines the gateway refused; these are not retried.
    pub rejected: u64,
}

/// Runs the plan and forwards results until `limit` submissions were
/// acknowledged (or forever). A result is retried over fresh connections
/// until the gateway answers it.
pub async fn run_worker(
    plan: Vec<PlannedCheck>,
    options: WorkerOptions,
    executor: Arc<dyn CheckExecutor>,
) -> WorkerReport {
    let (outcome_tx, mut outcomes) = mpsc::unbounded_channel();
    let (cmd_tx, cmd_rx) = mpsc::unbounded_channel();
    info!(checks = plan.len(), gateway = %options.gateway, "worker starting");
    let scheduler = tokio::spawn(run_scheduler(
        plan,
        options.scheduler.clone(),
        executor,
        outcome_tx,
        cmd_rx,
        Arc::new(SchedulerStats::default()),
    ));

    let mut report = WorkerReport::default();
    let mut client: Option<GatewayClient> = None;
    let done = |r: &WorkerReport| options.limit.is_some_and(|l| r.submitted >= l);
    while !done(&report) {
        let Some(outcome) = outcomes.recv().await else { break };
        let line = outcome_line(&outcome);
        loop {
            if client.is_none() {
                match GatewayClient::connect(&options.gateway, options.token.as_deref(), options.connect_timeout).await {
                    Ok(c) => client = Some(c),
                    Err(e) => {
                        warn!(gateway = %options.gateway, error = %e, "gateway unreachable, retrying");
                        tokio::time::sleep(options.retry_delay).await;
                        continue;
                    }
                }
            }
            match client.as_mut().expect("connected").submit(&line).await {
                Ok(()) => {
                    report.submitted += 1;
                    break;
                }
                Err(ClientError::Rejected(reply)) => {
                    warn!(%line, %reply, "gateway rejected result");
                    report.rejected += 1;
                    if reply.starts_with("ERR auth") {
                        client = None;
                    }
                    break;
                }
                Err(e) => {
                    warn!(error = %e, "gateway connection lost, resubmitting");
                    client = None;
                    tokio::time::sleep(options.retry_delay).await;
                }
            }
        }
    }
    let _ = cmd_tx.send(SchedulerCommand::Shutdown);
    let _ = scheduler.await;
    report
}
