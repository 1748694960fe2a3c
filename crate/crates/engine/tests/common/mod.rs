#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Stdio;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::Utc;
use futures::future::BoxFuture;
use futures::FutureExt;
use sentinel_core::checkcore::{CheckExecutor, CheckJob, CheckOrigin, CheckResult, CheckStatus};
use sentinel_core::objconf::{generate_from_assets, load_sources, AssetRecord, HostClass, MonitoringPolicy, ResolvedConfig};
use sentinel_core::passive::PassiveResultLine;
use sentinel_core::statemachine::{HostStatus, StateType};
use sentinel_core::statestore::{read_status, FaultPoint, STATUS_FILE};
use sentinel_core::{ObjectRef, Zone};
use sentinel_engine::runtime::{Command, Engine};
use sentinel_engine::settings::EngineSettings;
use sentinel_engine::state::{Core, CoreOptions, Effects};

pub fn config(text: &str) -> ResolvedConfig {
    let (config, diags) = load_sources([("test.cfg", text)]);
    assert!(!sentinel_core::objconf::has_errors(&diags), "{diags:?}");
    config
}

/// Settings rooted in `dir` with no listeners.
pub fn settings(dir: &Path) -> EngineSettings {
    EngineSettings {
        status_dir: dir.join("var"),
        retention_file: dir.join("var/retention.dat"),
        event_log: Some(dir.join("var/events.log")),
        dispatch_log: Some(dir.join("var/dispatch.log")),
        status_interval: Duration::from_secs(3600),
        interval_length: Duration::from_secs(1),
        api_listen: None,
        ..EngineSettings::default()
    }
}

/// Answers every check instantly with OK.
pub struct InstantOk;

impl CheckExecutor for InstantOk {
    fn execute(&self, _job: CheckJob) -> BoxFuture<'static, CheckResult> {
        async {
            let now = Utc::now();
            CheckResult::new(CheckStatus::Ok, "OK - stub", now, now, CheckOrigin::Active, "stub")
        }
        .boxed()
    }
}

pub async fn wait_for(timeout: Duration, mut cond: impl FnMut() -> bool) -> bool {
    let deadline = Instant::now() + timeout;
    while Instant::now() < deadline {
        if cond() {
            return true;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    cond()
}

/// Host class mix of the reference installation.
pub const CLASS_MIX: [(HostClass, usize); 7] = [
    (HostClass::NetworkDevice, 40),
    (HostClass::FarmPc, 60),
    (HostClass::WorkgroupServer, 360),
    (HostClass::Mail, 30),
    (HostClass::Printer, 60),
    (HostClass::WebServer, 40),
    (HostClass::AfsServer, 30),
];

pub fn scale_config() -> ResolvedConfig {
    let mut assets = Vec::new();
    for (class, n) in CLASS_MIX {
        let slug: String = class
            .to_string()
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
            .collect();
        for i in 0..n {
            let k = assets.len();
            assets.push(AssetRecord {
                hostname: format!("{slug}-{i:03}"),
                address: format!("10.{}.{}.{}", k / 65536, (k / 256) % 256, k % 256),
                host_class: class,
                owner_contact_group: format!("{slug}-admins"),
            });
        }
    }
    config(&generate_from_assets(&assets, &MonitoringPolicy::default()).unwrap())
}

pub struct ScaleReport {
    pub hosts: usize,
    pub services: usize,
    pub first_pass: Duration,
    pub second_pass: Duration,
}

/// Starts an engine on the full-size configuration with instant checks and
/// measures how long it takes until every object was checked once, then
/// once more.
pub async fn scale_round_trip(interval_length: Duration) -> Result<ScaleReport, String> {
    let dir = tempfile::tempdir().unwrap();
    let config = scale_config();
    let (hosts, services) = (config.hosts.len(), config.services.len());
    let mut s = settings(dir.path());
    s.interval_length = interval_length;
    let started = Instant::now();
    let engine = Engine::start(s, config, Some(Arc::new(InstantOk))).await.map_err(|e| e.to_string())?;
    let client = engine.client();
    let limit = Duration::from_secs(90);

    let all_checked = |after: Option<&BTreeMap<String, chrono::DateTime<Utc>>>| {
        let snap = client.snapshot();
        let t = &snap.tables;
        let checks = t
            .hosts
            .iter()
            .map(|(h, st)| (h.clone(), st.last_check))
            .chain(t.services.iter().map(|((h, s), st)| (format!("{h};{s}"), st.last_check)));
        let mut seen = BTreeMap::new();
        for (k, last) in checks {
            let last = last?;
            if after.is_some_and(|a| a.get(&k).is_some_and(|prev| last <= *prev)) {
                return None;
            }
            seen.insert(k, last);
        }
        Some(seen)
    };

    let mut first = None;
    if !wait_for(limit, || {
        first = all_checked(None);
        first.is_some()
    })
    .await
    {
        return Err(format!("first pass incomplete after {limit:?}"));
    }
    let first_pass = started.elapsed();
    let first = first.unwrap();
    let mark = Instant::now();
    if !wait_for(limit, || all_checked(Some(&first)).is_some()).await {
        return Err(format!("second pass incomplete after {limit:?}"));
    }
    let second_pass = mark.elapsed();
    engine.shutdown().await.map_err(|e| e.to_string())?;
    Ok(ScaleReport {
        hosts,
        services,
        first_pass,
        second_pass,
    })
}

/// One host with one service, notified every 22 interval units.
pub const RENOTIFY: &str = "define host{
    host_name           www
    alias               WWW Server WEB
    address             131.169.40.38
}
define service{
    host_name           www
    service_description IT Web Server
    check_command       check-http
    check_period        24x7
    max_check_attempts  1
    notification_interval 22
    notification_period 24x7
    contact_groups      web-admins
}
define command{
    command_name        check-http
    command_line        sentinel:http http://$HOSTADDRESS$/
}
define contactgroup{
    contactgroup_name   web-admins
}
";

/// Feeds one CRITICAL into a core and ticks a simulated clock once per
/// second for `seconds`. Returns the notification times as offsets from the
/// failure, in seconds.
pub fn renotify_timeline(seconds: i64) -> Vec<i64> {
    let config = Arc::new(config(RENOTIFY));
    let mut core = Core::new(
        config,
        CoreOptions {
            interval_length: Duration::from_secs(1),
            zone: Zone::UTC,
            skew_window: Duration::from_secs(300),
            engine_name: "sentinel".into(),
            engine_version: "test".into(),
        },
    );
    let t0 = chrono::TimeZone::with_ymd_and_hms(&Utc, 2003, 3, 19, 10, 0, 0).unwrap();
    let target = ObjectRef::service("www", "IT Web Server");
    let mut times = Vec::new();
    let mut fx = Effects::default();
    let result = CheckResult::new(CheckStatus::Critical, "Connection refused by host", t0, t0, CheckOrigin::Active, "probe");
    core.handle_result(&target, &result, t0, &mut fx).unwrap();
    times.extend(fx.notifications.iter().map(|_| 0));
    for s in 1..=seconds {
        let now = t0 + chrono::Duration::seconds(s);
        let mut fx = Effects::default();
        core.tick(now, &mut fx);
        times.extend(fx.notifications.iter().map(|_| s));
    }
    times
}

/// Table 4 service template and the Table 5 host group, plus the objects they
/// reference.
pub const SITE: &str = "define service{
    name                fileserver
    service_description  fileserver
    is_volatile          0
    active_checks_enabled 0
    passive_checks_enabled 1
    check_period         24x7
    max_check_attempts   10
    normal_check_interval 1
    retry_check_interval  5
    notification_interval 2200
    notification_period   24x7
    notification_options  w,u,c,r
    check_command         doing some tests
    register              0
}
define hostgroup{
    name                night
    hostgroup_name      night
    alias               night
    contact_groups      sgi-admins
    members             netra8,test1,test2
}
define host{
    host_name           netra8
    alias               netra AFS Server
    address             131.169.40.109
    parents             route-194,route-40
    use                 hostcheck
}
define host{
    name                hostcheck
    max_check_attempts  3
    register            0
}
define contactgroup{
    contactgroup_name   sgi-admins
    alias               SGI administrators
}
define host{
    use                 hostcheck
    host_name           route-194
    address             131.169.194.1
}
define host{
    use                 hostcheck
    host_name           route-40
    address             131.169.40.1
}
define host{
    use                 hostcheck
    host_name           test1
    address             131.169.40.201
    parents             route-40
}
define host{
    use                 hostcheck
    host_name           test2
    address             131.169.40.202
    parents             route-40
}
define service{
    use                 fileserver
    host_name           netra8
    check_command       doing
    contact_groups      sgi-admins
}
define command{
    command_name        doing
    command_line        /bin/true
}
define service{
    host_name           test1
    service_description load
    check_command       doing
    check_period        24x7
    max_check_attempts  1
}
";

pub fn host_result(host: &str, code: u8, output: &str) -> Command {
    Command::Result {
        line: PassiveResultLine::host(Utc::now().timestamp(), host, code, output),
        source: "test".into(),
    }
}

pub fn events(dir: &Path) -> Vec<String> {
    std::fs::read_to_string(dir.join("var/events.log"))
        .unwrap_or_default()
        .lines()
        .map(str::to_string)
        .collect()
}

/// Drives netra8 to HARD DOWN and acknowledges it, injects a status write
/// fault at every point, restarts from retention and sends another DOWN.
/// Returns a description of the first violated expectation.
pub async fn crash_and_restart() -> Result<(), String> {
    let dir = tempfile::tempdir().unwrap();
    let engine = Engine::start(settings(dir.path()), config(SITE), Some(Arc::new(InstantOk)))
        .await
        .map_err(|e| e.to_string())?;
    let client = engine.client();
    // Let the writer's startup pass finish so it cannot race the checks below.
    wait_for(Duration::from_secs(5), || client.stats().status_writes >= 1).await;
    for _ in 0..3 {
        client
            .command(host_result("netra8", 1, "PING CRITICAL - Packet loss = 100%"))
            .await
            .map_err(|e| e.to_string())?;
    }
    let st = client.snapshot().tables.hosts["netra8"].clone();
    if (st.current_status, st.state_type) != (HostStatus::Down, StateType::Hard) {
        return Err(format!("netra8 not HARD DOWN: {st:?}"));
    }
    client
        .command(Command::Ack {
            target: ObjectRef::host("netra8"),
            who: "oncall".into(),
            comment: "router swap".into(),
        })
        .await
        .map_err(|e| e.to_string())?;
    engine.persist_now().await?;
    let good = read_status(&dir.path().join("var")).map_err(|e| e.to_string())?;

    for point in [FaultPoint::AfterCreate, FaultPoint::MidWrite, FaultPoint::BeforeRename] {
        client
            .command(host_result("test1", 1, &format!("fault {point:?}")))
            .await
            .map_err(|e| e.to_string())?;
        engine.inject_status_fault(point);
        if engine.persist_now().await.is_ok() {
            return Err(format!("write with fault {point:?} reported success"));
        }
        let text = std::fs::read_to_string(dir.path().join("var").join(STATUS_FILE)).map_err(|e| e.to_string())?;
        let read = sentinel_core::statestore::decode_status(&text).map_err(|e| format!("after {point:?}: {e}"))?;
        if read != good {
            return Err(format!("status.dat changed by faulted write at {point:?}"));
        }
    }
    let problems_before = count(&events(dir.path()), "netra8 PROBLEM");
    engine.shutdown().await.map_err(|e| e.to_string())?;

    let engine = Engine::start(settings(dir.path()), config(SITE), Some(Arc::new(InstantOk)))
        .await
        .map_err(|e| e.to_string())?;
    let client = engine.client();
    let st = client.snapshot().tables.hosts["netra8"].clone();
    if (st.current_status, st.state_type) != (HostStatus::Down, StateType::Hard) || !st.acknowledged() {
        return Err(format!("netra8 not restored as acknowledged HARD DOWN: {st:?}"));
    }
    client
        .command(host_result("netra8", 1, "PING CRITICAL - Packet loss = 100%"))
        .await
        .map_err(|e| e.to_string())?;
    engine.shutdown().await.map_err(|e| e.to_string())?;
    let log = events(dir.path());
    if problems_before != 1 {
        return Err(format!("expected one PROBLEM before restart, saw {problems_before}"));
    }
    let after = count(&log, "netra8 PROBLEM");
    if after != 1 {
        return Err(format!("restart produced {} new PROBLEM events", after - 1));
    }
    if count(&log, "netra8 NOTIFICATION ") > 1 {
        return Err("restart produced a new notification".into());
    }
    Ok(())
}

pub fn count(lines: &[String], needle: &str) -> usize {
    lines.iter().filter(|l| l.contains(needle)).count()
}

/// Four hosts with five passive-only services each. Every service runs
/// `exit N`, N cycling through 0..=3.
pub fn distributed_config() -> String {
    let mut text = String::new();
    for code in 0..4 {
        text.push_str(&format!(
            "define command{{\n    command_name exit{code}\n    command_line /bin/sh -c \"echo status {code}; exit {code}\"\n}}\n"
        ));
    }
    for h in 0..4 {
        text.push_str(&format!("define host{{\n    host_name node{h}\n    address 127.0.0.{}\n}}\n", h + 1));
        for s in 0..5 {
            text.push_str(&format!(
                "define service{{\n    host_name node{h}\n    service_description svc{s}\n    check_command exit{}\n    check_period 24x7\n    max_check_attempts 1\n    normal_check_interval 1\n    active_checks_enabled 0\n}}\n",
                (h + s) % 4
            ));
        }
    }
    text
}

pub struct DistributedReport {
    pub converged_after: Duration,
    pub worker_submitted: Vec<u64>,
    pub gateway_accepted: u64,
    pub gateway_processed: u64,
    pub applied: u64,
    pub rejected: u64,
}

fn worker_binary() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_sentinel-worker"))
}

/// Central engine with a gateway and no active checks of its own, fed by two
/// `sentinel-worker` processes that stop after 500 acknowledged lines each.
pub async fn distributed_run() -> Result<DistributedReport, String> {
    let dir = tempfile::tempdir().unwrap();
    let objects = dir.path().join("objects.cfg");
    let text = distributed_config();
    std::fs::write(&objects, &text).unwrap();
    let mut s = settings(dir.path());
    s.gateway_listen = Some("127.0.0.1:0".parse().unwrap());
    let engine = Engine::start(s, config(&text), None).await.map_err(|e| e.to_string())?;
    let gateway = engine.gateway_addr.expect("gateway bound");
    let client = engine.client();
    if client.stats().checks_dispatched != 0 {
        return Err("central engine ran active checks".into());
    }

    let started = Instant::now();
    let workers: Vec<_> = ["0/2", "1/2"]
        .into_iter()
        .map(|shard| {
            tokio::process::Command::new(worker_binary())
                .args(["--gateway", &gateway.to_string(), "--shard", shard, "--limit", "500"])
                .args(["--interval-length", "0.05"])
                .arg(&objects)
                .env("RUST_LOG", "warn")
                .stdout(Stdio::piped())
                .stderr(Stdio::null())
                .kill_on_drop(true)
                .spawn()
                .map_err(|e| e.to_string())
        })
        .collect::<Result<_, _>>()?;

    let expected: BTreeMap<(String, String), CheckStatus> = (0..4)
        .flat_map(|h| {
            (0..5).map(move |s| {
                let status = CheckStatus::from_code(((h + s) % 4) as i64).unwrap();
                ((format!("node{h}"), format!("svc{s}")), status)
            })
        })
        .collect();
    let converged = wait_for(Duration::from_secs(10), || {
        let snap = client.snapshot();
        expected
            .iter()
            .all(|(k, status)| snap.tables.services.get(k).is_some_and(|st| st.last_check.is_some() && st.current_status == *status))
    })
    .await;
    let converged_after = started.elapsed();
    if !converged {
        return Err("central state did not converge within 10 s".into());
    }

    let mut worker_submitted = Vec::new();
    for w in workers {
        let out = tokio::time::timeout(Duration::from_secs(60), w.wait_with_output())
            .await
            .map_err(|_| "worker did not finish".to_string())?
            .map_err(|e| e.to_string())?;
        let stdout = String::from_utf8_lossy(&out.stdout);
        let submitted = stdout
            .split_whitespace()
            .skip_while(|w| *w != "submitted")
            .nth(1)
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| format!("unexpected worker output '{stdout}'"))?;
        worker_submitted.push(submitted);
    }
    let total: u64 = worker_submitted.iter().sum();
    wait_for(Duration::from_secs(5), || client.stats().gateway_processed >= total).await;
    let stats = client.stats();
    engine.shutdown().await.map_err(|e| e.to_string())?;
    Ok(DistributedReport {
        converged_after,
        worker_submitted,
        gateway_accepted: stats.gateway_accepted,
        gateway_processed: stats.gateway_processed,
        applied: stats.passive_applied,
        rejected: stats.passive_rejected,
    })
}
