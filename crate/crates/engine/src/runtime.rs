use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use anyhow::Context;
use chrono::Utc;
use serde::Serialize;
use sentinel_core::checkcore::{
    plan_checks, CheckExecutor, CheckOutcome, CommandExecutor, PingCommand, PlanScope, SchedulerCommand,
    SchedulerOptions, SchedulerStats,
};
use sentinel_core::notify::{DispatchRecord, Dispatcher};
use sentinel_core::objconf::ResolvedConfig;
use sentinel_core::passive::{run_gateway, GatewayOptions, GatewayStats, PassiveResultLine, Submission};
use sentinel_core::statestore::{
    load_retention, write_retention, FaultPoint, StateTables, StatusSnapshot, StatusWriter,
};
use sentinel_core::{ObjectRef, Timestamp};
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot, watch};
use tokio::task::JoinHandle;
use tracing::{info, warn};

use crate::settings::EngineSettings;
use crate::state::{audit_line, ts, CommandError, Core, CoreOptions, Effects};

/// Operator and API commands executed on the state thread.
#[derive(Debug, Clone)]
pub enum Command {
    Ack {
        target: ObjectRef,
        who: String,
        comment: String,
    },
    Downtime {
        target: ObjectRef,
        start: Timestamp,
        end: Timestamp,
        who: String,
        comment: String,
    },
    ForceCheck(ObjectRef),
    Result {
        line: PassiveResultLine,
        source: String,
    },
}

enum EngineInput {
    Outcome(CheckOutcome),
    Passive(Submission),
    Command(Command, oneshot::Sender<Result<(), CommandError>>),
    Dispatched(DispatchRecord),
    Audit(String),
    Shutdown,
}

#[derive(Debug, Default)]
pub struct EngineStats {
    pub active_results: AtomicU64,
    /// Gateway lines taken off the queue, applied or rejected.
    pub gateway_processed: AtomicU64,
    pub passive_applied: AtomicU64,
    pub passive_rejected: AtomicU64,
    pub commands: AtomicU64,
    pub notifications: AtomicU64,
    pub dispatch_ok: AtomicU64,
    pub dispatch_failed: AtomicU64,
    pub status_writes: AtomicU64,
    pub status_write_failures: AtomicU64,
}

/// Plain copy of all counters, as served by `GET /api/v1/stats`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct StatsDocument {
    pub active_results: u64,
    pub gateway_processed: u64,
    pub passive_applied: u64,
    pub passive_rejected: u64,
    pub commands: u64,
    pub notifications: u64,
    pub dispatch_ok: u64,
    pub dispatch_failed: u64,
    pub status_writes: u64,
    pub status_write_failures: u64,
    pub checks_dispatched: u64,
    pub checks_completed: u64,
    pub checks_in_flight: u64,
    pub gateway_connections: u64,
    pub gateway_accepted: u64,
    pub gateway_rejected: u64,
    pub gateway_auth_failures: u64,
}

/// Cheap handle used by the API and tests to read state and send commands.
#[derive(Clone)]
pub struct EngineClient {
    inputs: mpsc::UnboundedSender<EngineInput>,
    snapshots: watch::Receiver<Arc<StatusSnapshot>>,
    config: Arc<ResolvedConfig>,
    stats: Arc<EngineStats>,
    scheduler_stats: Arc<SchedulerStats>,
    gateway_stats: Arc<GatewayStats>,
}

impl EngineClient {
    pub fn config(&self) -> &Arc<ResolvedConfig> {
        &self.config
    }

    /// The latest published snapshot.
    pub fn snapshot(&self) -> Arc<StatusSnapshot> {
        self.snapshots.borrow().clone()
    }

    /// Runs `command` on the state thread. Returns once its effect is
    /// visible in [`snapshot`](Self::snapshot).
    pub async fn command(&self, command: Command) -> Result<(), CommandError> {
        let (tx, rx) = oneshot::channel();
        let stopped = || CommandError::Unavailable("engine is shutting down".into());
        self.inputs.send(EngineInput::Command(command, tx)).map_err(|_| stopped())?;
        rx.await.map_err(|_| stopped())?
    }

    pub fn stats(&self) -> StatsDocument {
        let l = |a: &AtomicU64| a.load(Ordering::Relaxed);
        let s = &self.stats;
        let sch = &self.scheduler_stats;
        let gw = &self.gateway_stats;
        StatsDocument {
            active_results: l(&s.active_results),
            gateway_processed: l(&s.gateway_processed),
            passive_applied: l(&s.passive_applied),
            passive_rejected: l(&s.passive_rejected),
            commands: l(&s.commands),
            notifications: l(&s.notifications),
            dispatch_ok: l(&s.dispatch_ok),
            dispatch_failed: l(&s.dispatch_failed),
            status_writes: l(&s.status_writes),
            status_write_failures: l(&s.status_write_failures),
            checks_dispatched: l(&sch.dispatched),
            checks_completed: l(&sch.completed),
            checks_in_flight: sch.in_flight.load(Ordering::Relaxed) as u64,
            gateway_connections: l(&gw.connections),
            gateway_accepted: l(&gw.accepted),
            gateway_rejected: l(&gw.rejected),
            gateway_auth_failures: l(&gw.auth_failures),
        }
    }
}

struct AppendLog(Option<BufWriter<File>>);

impl AppendLog {
    fn open(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(AppendLog(None)) };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("opening {}", path.display()))?;
        Ok(AppendLog(Some(BufWriter::new(file))))
    }

    fn line(&mut self, line: &str) {
        if let Some(w) = &mut self.0 {
            if let Err(e) = writeln!(w, "{line}") {
                warn!(error = %e, "log write failed");
            }
        }
    }

    fn flush(&mut self) {
        if let Some(w) = &mut self.0 {
            let _ = w.flush();
        }
    }
}

/// A running engine.
pub struct Engine {
    pub api_addr: Option<SocketAddr>,
    pub gateway_addr: Option<SocketAddr>,
    client: EngineClient,
    state_task: JoinHandle<StateTables>,
    writer: Arc<Mutex<StatusWriter>>,
    retention_file: PathBuf,
    stop: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
}

impl Engine {
    /// Starts every component described by `settings`. `executor` replaces
    /// the default plugin/probe executor (tests use instant stubs).
    pub async fn start(
        settings: EngineSettings,
        config: ResolvedConfig,
        executor: Option<Arc<dyn CheckExecutor>>,
    ) -> anyhow::Result<Engine> {
        let config = Arc::new(config);
        let now = Utc::now();
        let mut core = Core::new(
            config.clone(),
            CoreOptions {
                interval_length: settings.interval_length,
                zone: settings.zone.clone(),
                skew_window: settings.skew_window,
                engine_name: settings.engine_name.clone(),
                engine_version: settings.engine_version.clone(),
            },
        );
        let mut boot = Effects::default();
        core.startup_audit(now, &mut boot);
        core.restore(load_retention(&settings.retention_file, &config), now, &mut boot);

        std::fs::create_dir_all(&settings.status_dir)
            .with_context(|| format!("creating status dir {}", settings.status_dir.display()))?;
        if let Some(dir) = settings.retention_file.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let mut events = AppendLog::open(settings.event_log.as_deref())?;
        let dispatch_log = AppendLog::open(settings.dispatch_log.as_deref())?;

        let (inputs, input_rx) = mpsc::unbounded_channel();
        let (publish, snapshots) = watch::channel(Arc::new(core.snapshot(now)));
        let (stop, _) = watch::channel(false);
        let stats = Arc::new(EngineStats::default());
        let scheduler_stats = Arc::new(SchedulerStats::default());
        let gateway_stats = Arc::new(GatewayStats::default());
        let mut tasks = Vec::new();

        // Scheduler.
        let (plan, plan_errors) = plan_checks(&config, PlanScope::Active, settings.check_timeout);
        for e in plan_errors {
            boot.log_lines.push(audit_line(now, "-", "PLAN_ERROR", &e));
        }
        let executor: Arc<dyn CheckExecutor> = executor.unwrap_or_else(|| {
            Arc::new(CommandExecutor {
                ping: settings
                    .ping_command
                    .clone()
                    .map(|argv| PingCommand { argv })
                    .unwrap_or_default(),
            })
        });
        let (sched_tx, sched_rx) = mpsc::unbounded_channel();
        let (outcome_tx, mut outcome_rx) = mpsc::unbounded_channel();
        info!(checks = plan.len(), "starting scheduler");
        tasks.push(tokio::spawn(sentinel_core::checkcore::run_scheduler(
            plan,
            SchedulerOptions {
                interval_length: settings.interval_length,
                max_concurrent: settings.max_concurrent_checks,
                stagger: true,
                zone: settings.zone.clone(),
            },
            executor,
            outcome_tx,
            sched_rx,
            scheduler_stats.clone(),
        )));
        let tx = inputs.clone();
        tasks.push(tokio::spawn(async move {
            while let Some(o) = outcome_rx.recv().await {
                if tx.send(EngineInput::Outcome(o)).is_err() {
                    break;
                }
            }
        }));

        // Gateway.
        let mut gateway_addr = None;
        if let Some(addr) = settings.gateway_listen {
            let listener = TcpListener::bind(addr)
                .await
                .with_context(|| format!("binding gateway on {addr}"))?;
            gateway_addr = Some(listener.local_addr()?);
            let (gw_tx, mut gw_rx) = mpsc::channel::<Submission>(4096);
            let options = GatewayOptions {
                token: settings.gateway_token.clone(),
            };
            let gs = gateway_stats.clone();
            tasks.push(tokio::spawn(async move {
                if let Err(e) = run_gateway(listener, options, gw_tx, gs).await {
                    warn!(error = %e, "gateway stopped");
                }
            }));
            let tx = inputs.clone();
            tasks.push(tokio::spawn(async move {
                while let Some(s) = gw_rx.recv().await {
                    if tx.send(EngineInput::Passive(s)).is_err() {
                        break;
                    }
                }
            }));
        }

        // Notification dispatch.
        let dispatcher = Dispatcher::new(
            settings.notification_workers,
            settings.notification_timeout,
            settings.zone.clone(),
        );
        let (dispatch_tx, mut dispatch_rx) = mpsc::unbounded_channel();
        let tx = inputs.clone();
        tasks.push(tokio::spawn(async move {
            while let Some(r) = dispatch_rx.recv().await {
                if tx.send(EngineInput::Dispatched(r)).is_err() {
                    break;
                }
            }
        }));

        for line in &boot.log_lines {
            events.line(line);
        }
        events.flush();

        let tick = settings.interval_length.min(Duration::from_secs(1));
        let state = StateLoop {
            core,
            publish,
            scheduler: sched_tx,
            dispatcher,
            dispatch_tx,
            events,
            dispatch_log,
            stats: stats.clone(),
            tick,
        };
        let state_task = tokio::spawn(state.run(input_rx));

        // Status and retention writer.
        let writer = Arc::new(Mutex::new(StatusWriter::new(&settings.status_dir)));
        {
            let (writer, snapshots, tx, stats) = (writer.clone(), snapshots.clone(), inputs.clone(), stats.clone());
            let retention = settings.retention_file.clone();
            let every = settings.status_interval;
            let mut stop_rx = stop.subscribe();
            tasks.push(tokio::spawn(async move {
                let mut ticker = tokio::time::interval(every);
                ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
                loop {
                    tokio::select! {
                        _ = ticker.tick() => {}
                        _ = stop_rx.changed() => break,
                    }
                    let snap = snapshots.borrow().clone();
                    if let Err(e) = persist(writer.clone(), snap, retention.clone(), &stats).await {
                        let _ = tx.send(EngineInput::Audit(audit_line(Utc::now(), "-", "STATUS_WRITE_FAILED", &e)));
                    }
                }
            }));
        }

        let client = EngineClient {
            inputs,
            snapshots,
            config,
            stats,
            scheduler_stats,
            gateway_stats,
        };

        // HTTP API.
        let mut api_addr = None;
        if let Some(addr) = settings.api_listen {
            let listener = TcpListener::bind(addr)
                .await
                .with_context(|| format!("binding api on {addr}"))?;
            api_addr = Some(listener.local_addr()?);
            let app = crate::api::router(client.clone(), settings.api_token.clone());
            let mut stop_rx = stop.subscribe();
            tasks.push(tokio::spawn(async move {
                let served = axum::serve(listener, app)
                    .with_graceful_shutdown(async move {
                        let _ = stop_rx.changed().await;
                    })
                    .await;
                if let Err(e) = served {
                    warn!(error = %e, "api server stopped");
                }
            }));
            info!(addr = %api_addr.expect("bound"), "api listening");
        }

        Ok(Engine {
            api_addr,
            gateway_addr,
            client,
            state_task,
            writer,
            retention_file: settings.retention_file,
            stop,
            tasks,
        })
    }

    pub fn client(&self) -> EngineClient {
        self.client.clone()
    }

    /// Makes the next status write fail at `point`.
    pub fn inject_status_fault(&self, point: FaultPoint) {
        self.writer.lock().expect("status writer lock").fault = Some(point);
    }

    /// Writes status and retention now.
    pub async fn persist_now(&self) -> Result<(), String> {
        persist(
            self.writer.clone(),
            self.client.snapshot(),
            self.retention_file.clone(),
            &self.client.stats,
        )
        .await
    }

    /// Stops all components and writes final status and retention files.
    pub async fn shutdown(self) -> anyhow::Result<()> {
        let _ = self.client.inputs.send(EngineInput::Shutdown);
        let tables = self.state_task.await.context("state task")?;
        let _ = self.stop.send(true);
        for t in &self.tasks {
            t.abort();
        }
        let snapshot = Arc::new(StatusSnapshot {
            generated_at: Utc::now(),
            tables,
        });
        persist(self.writer, snapshot, self.retention_file, &self.client.stats)
            .await
            .map_err(anyhow::Error::msg)
    }
}

async fn persist(
    writer: Arc<Mutex<StatusWriter>>,
    snapshot: Arc<StatusSnapshot>,
    retention: PathBuf,
    stats: &EngineStats,
) -> Result<(), String> {
    let result = tokio::task::spawn_blocking(move || -> Result<(), String> {
        // Held across both files so concurrent persists cannot interleave.
        let mut writer = writer.lock().expect("status writer lock");
        writer.write(&snapshot).map_err(|e| e.to_string())?;
        write_retention(&snapshot.tables, &retention).map_err(|e| e.to_string())
    })
    .await
    .map_err(|e| e.to_string())
    .and_then(|r| r);
    match &result {
        Ok(()) => stats.status_writes.fetch_add(1, Ordering::Relaxed),
        Err(_) => stats.status_write_failures.fetch_add(1, Ordering::Relaxed),
    };
    result
}

struct StateLoop {
    core: Core,
    publish: watch::Sender<Arc<StatusSnapshot>>,
    scheduler: mpsc::UnboundedSender<SchedulerCommand>,
    dispatcher: Dispatcher,
    dispatch_tx: mpsc::UnboundedSender<DispatchRecord>,
    events: AppendLog,
    dispatch_log: AppendLog,
    stats: Arc<EngineStats>,
    tick: Duration,
}

const MAX_BATCH: usize = 1024;

impl StateLoop {
    async fn run(mut self, mut rx: mpsc::UnboundedReceiver<EngineInput>) -> StateTables {
        let mut ticker = tokio::time::interval(self.tick);
        ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        let mut last_tick = Instant::now();
        loop {
            let mut batch = Vec::new();
            let mut ticked = false;
            tokio::select! {
                m = rx.recv() => match m {
                    Some(m) => batch.push(m),
                    None => break,
                },
                _ = ticker.tick() => ticked = true,
            }
            while batch.len() < MAX_BATCH {
                match rx.try_recv() {
                    Ok(m) => batch.push(m),
                    Err(_) => break,
                }
            }

            let now = Utc::now();
            let mut fx = Effects::default();
            let mut replies = Vec::new();
            let mut shutdown = false;
            let mut changed = ticked;
            for input in batch {
                match input {
                    EngineInput::Outcome(o) => {
                        changed = true;
                        self.stats.active_results.fetch_add(1, Ordering::Relaxed);
                        let _ = self.core.handle_result(&o.target, &o.result, now, &mut fx);
                    }
                    EngineInput::Passive(s) => {
                        changed = true;
                        let source = s.peer.to_string();
                        let r = self.core.handle_passive(&s.line, &source, now, &mut fx);
                        self.count_passive(&r, &s.line, &source, now, &mut fx);
                        self.stats.gateway_processed.fetch_add(1, Ordering::Relaxed);
                    }
                    EngineInput::Command(c, reply) => {
                        changed = true;
                        self.stats.commands.fetch_add(1, Ordering::Relaxed);
                        let r = self.command(c, now, &mut fx);
                        replies.push((reply, r));
                    }
                    EngineInput::Dispatched(r) => {
                        self.dispatch_log.line(&r.log_line());
                        if r.success {
                            self.stats.dispatch_ok.fetch_add(1, Ordering::Relaxed);
                        } else {
                            self.stats.dispatch_failed.fetch_add(1, Ordering::Relaxed);
                            fx.log_lines.push(audit_line(
                                r.at,
                                &r.group,
                                "DISPATCH_FAILED",
                                &format!("{}: {}", r.channel, r.error.as_deref().unwrap_or("")),
                            ));
                        }
                    }
                    EngineInput::Audit(line) => fx.log_lines.push(line),
                    EngineInput::Shutdown => shutdown = true,
                }
            }
            if ticked || last_tick.elapsed() >= self.tick {
                last_tick = Instant::now();
                self.core.tick(now, &mut fx);
            }
            self.apply(fx);
            if changed || shutdown {
                self.publish.send_replace(Arc::new(self.core.snapshot(now)));
            }
            for (reply, r) in replies {
                let _ = reply.send(r);
            }
            if shutdown {
                break;
            }
        }
        let _ = self.scheduler.send(SchedulerCommand::Shutdown);
        self.events.flush();
        self.dispatch_log.flush();
        self.core.tables().clone()
    }

    fn count_passive(
        &self,
        r: &Result<(), CommandError>,
        line: &PassiveResultLine,
        source: &str,
        now: Timestamp,
        fx: &mut Effects,
    ) {
        match r {
            Ok(()) => {
                self.stats.passive_applied.fetch_add(1, Ordering::Relaxed);
            }
            Err(e) => {
                self.stats.passive_rejected.fetch_add(1, Ordering::Relaxed);
                if !matches!(e, CommandError::Conflict(_)) {
                    fx.log_lines.push(audit_line(
                        now,
                        &line.target().to_string(),
                        "REJECTED",
                        &format!("{e} (from {source})"),
                    ));
                }
            }
        }
    }

    fn command(&mut self, c: Command, now: Timestamp, fx: &mut Effects) -> Result<(), CommandError> {
        match c {
            Command::Ack { target, who, comment } => self.core.acknowledge(&target, &who, &comment, now, fx),
            Command::Downtime {
                target,
                start,
                end,
                who,
                comment,
            } => self.core.add_downtime(&target, start, end, &who, &comment, now, fx),
            Command::ForceCheck(target) => {
                self.core.check_forceable(&target)?;
                fx.log_lines.push(audit_line(now, &target.to_string(), "FORCE_CHECK", &ts(now)));
                fx.force_checks.push(target);
                Ok(())
            }
            Command::Result { line, source } => {
                let r = self.core.handle_passive(&line, &source, now, fx);
                self.count_passive(&r, &line, &source, now, fx);
                r
            }
        }
    }

    fn apply(&mut self, fx: Effects) {
        for line in &fx.log_lines {
            self.events.line(line);
        }
        self.events.flush();
        for n in fx.notifications {
            self.stats.notifications.fetch_add(1, Ordering::Relaxed);
            self.dispatcher
                .submit(n.jobs, n.message, n.rendered, self.dispatch_tx.clone());
        }
        for target in fx.force_checks {
            let _ = self.scheduler.send(SchedulerCommand::ForceCheck(target));
        }
        self.dispatch_log.flush();
    }
}
