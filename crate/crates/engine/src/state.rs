use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use chrono::SecondsFormat;
use sentinel_core::checkcore::{CheckOrigin, CheckResult, CheckStatus};
use sentinel_core::notify::{
    channel_jobs, render_message, renotify_interval, should_notify, ChannelJob, NotificationMessage,
    NotificationPolicy, REASON_UNKNOWN_PERIOD,
};
use sentinel_core::objconf::ResolvedConfig;
use sentinel_core::passive::PassiveResultLine;
use sentinel_core::statemachine::{
    host_reachability, Downtime, EventKind, HostStatus, MonitorState, Observation, StateError, StateEvent,
    StateValue, TransitionParams,
};
use sentinel_core::statestore::{RetentionLoad, StateTables, StatusSnapshot};
use sentinel_core::{ObjectRef, Timestamp, Zone};

/// Rejections of operator commands and results, mapped to HTTP statuses by
/// the API.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CommandError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Unavailable(String),
}

#[derive(Debug, Clone)]
pub struct CoreOptions {
    pub interval_length: Duration,
    pub zone: Zone,
    pub skew_window: Duration,
    pub engine_name: String,
    pub engine_version: String,
}

impl Default for CoreOptions {
    fn default() -> Self {
        CoreOptions {
            interval_length: Duration::from_secs(60),
            zone: Zone::UTC,
            skew_window: sentinel_core::passive::DEFAULT_SKEW_WINDOW,
            engine_name: "sentinel".into(),
            engine_version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

/// A notification that passed policy, ready for dispatch.
#[derive(Debug, Clone)]
pub struct Notification {
    pub message: NotificationMessage,
    pub jobs: Vec<ChannelJob>,
    pub rendered: String,
}

/// What the runtime must do after a call into [`Core`].
#[derive(Debug, Default)]
pub struct Effects {
    /// Lines for the append-only event log.
    pub log_lines: Vec<String>,
    pub notifications: Vec<Notification>,
    /// Host checks to run now (on-demand reachability checks).
    pub force_checks: Vec<ObjectRef>,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct CoreCounters {
    pub results: u64,
    pub passive_results: u64,
    pub rejected: u64,
    pub notifications: u64,
    pub skew_substituted: u64,
}

pub(crate) fn ts(t: Timestamp) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// `<ISO8601> <object> <ACTION> - - <detail>`: operator actions and engine
/// notices in the event log.
pub fn audit_line(now: Timestamp, object: &str, action: &str, detail: &str) -> String {
    format!("{} {object} {action} - - {detail}", ts(now))
}

/// Engine state owned by the single state thread. Everything here is
/// synchronous and deterministic given the call order.
pub struct Core {
    config: Arc<ResolvedConfig>,
    parents: BTreeMap<String, Vec<String>>,
    tables: StateTables,
    host_passed: BTreeMap<String, bool>,
    options: CoreOptions,
    counters: CoreCounters,
}

impl Core {
    pub fn new(config: Arc<ResolvedConfig>, options: CoreOptions) -> Self {
        let mut tables = StateTables::default();
        for h in config.hosts.keys() {
            tables.hosts.insert(h.clone(), MonitorState::new());
        }
        for k in config.services.keys() {
            tables.services.insert(k.clone(), MonitorState::new());
        }
        let parents = config
            .hosts
            .iter()
            .map(|(h, d)| (h.clone(), d.parents.clone()))
            .collect();
        Core {
            config,
            parents,
            tables,
            host_passed: BTreeMap::new(),
            options,
            counters: CoreCounters::default(),
        }
    }

    pub fn config(&self) -> &Arc<ResolvedConfig> {
        &self.config
    }

    pub fn tables(&self) -> &StateTables {
        &self.tables
    }

    pub fn counters(&self) -> CoreCounters {
        self.counters
    }

    pub fn snapshot(&self, now: Timestamp) -> StatusSnapshot {
        StatusSnapshot {
            generated_at: now,
            tables: self.tables.clone(),
        }
    }

    /// Audit lines for configuration facts worth recording at startup.
    pub fn startup_audit(&self, now: Timestamp, effects: &mut Effects) {
        for (host, parent) in host_reachability(&self.host_passed, &self.parents).unknown_parents {
            effects
                .log_lines
                .push(audit_line(now, &host, "UNKNOWN_PARENT", &format!("parent '{parent}' ignored")));
        }
    }

    /// Replaces initial states with retained ones. Hosts restored in a
    /// non-UP state count as failing for reachability until rechecked.
    pub fn restore(&mut self, load: RetentionLoad, now: Timestamp, effects: &mut Effects) {
        if let Some(reason) = &load.cold_start {
            effects.log_lines.push(audit_line(now, "-", "RETENTION_COLD_START", reason));
        }
        let restored = load.tables.len();
        for (h, st) in load.tables.hosts {
            if self.tables.hosts.contains_key(&h) {
                if st.current_status != HostStatus::Up {
                    self.host_passed.insert(h.clone(), false);
                }
                self.tables.hosts.insert(h, st);
            }
        }
        for (k, st) in load.tables.services {
            if self.tables.services.contains_key(&k) {
                self.tables.services.insert(k, st);
            }
        }
        if restored > 0 || load.dropped > 0 {
            effects.log_lines.push(audit_line(
                now,
                "-",
                "RETENTION_RESTORED",
                &format!("{restored} restored, {} dropped", load.dropped),
            ));
        }
    }

    fn lookup(&self, target: &ObjectRef) -> Result<(), CommandError> {
        let found = match target.service_name() {
            None => self.config.hosts.contains_key(target.host_name()),
            Some(s) => self.config.service(target.host_name(), s).is_some(),
        };
        if found {
            Ok(())
        } else {
            Err(CommandError::NotFound(format!("unknown object '{target}'")))
        }
    }

    /// Feeds a check result (active or passive) through the state machine.
    pub fn handle_result(
        &mut self,
        target: &ObjectRef,
        result: &CheckResult,
        now: Timestamp,
        effects: &mut Effects,
    ) -> Result<(), CommandError> {
        self.lookup(target)?;
        let config = self.config.clone();
        let outcome = match target.service_name() {
            None => self.apply_host(&config, target, result, now, effects),
            Some(service) => self.apply_service(&config, target, service, result, now, effects),
        };
        match outcome {
            Ok(()) => {
                self.counters.results += 1;
                if result.origin == CheckOrigin::Passive {
                    self.counters.passive_results += 1;
                }
                Ok(())
            }
            Err(e) => {
                self.counters.rejected += 1;
                effects.log_lines.push(audit_line(now, &target.to_string(), "REJECTED", &e.to_string()));
                Err(CommandError::Conflict(e.to_string()))
            }
        }
    }

    fn apply_host(
        &mut self,
        config: &ResolvedConfig,
        target: &ObjectRef,
        result: &CheckResult,
        now: Timestamp,
        effects: &mut Effects,
    ) -> Result<(), StateError> {
        let host = target.host_name();
        let def = &config.hosts[host];
        let params = TransitionParams::from(def);
        if result.origin == CheckOrigin::Passive && !params.passive_checks_enabled {
            return Err(StateError::PassiveDisabled(target.clone()));
        }
        self.host_passed.insert(host.to_string(), HostStatus::check_passed(result.status));
        let status = host_reachability(&self.host_passed, &self.parents)
            .status
            .get(host)
            .copied()
            .unwrap_or(HostStatus::Up);
        let obs = Observation {
            status,
            output: result.output.clone(),
            origin: result.origin,
            host_unreachable: false,
        };
        let state = self.tables.hosts.get_mut(host).expect("configured host");
        let events = state.apply(target, obs, &params, now)?;
        let policy = NotificationPolicy::from(def);
        for e in events {
            self.emit(config, &policy, e, Kind::Host, now, effects);
        }
        Ok(())
    }

    fn apply_service(
        &mut self,
        config: &ResolvedConfig,
        target: &ObjectRef,
        service: &str,
        result: &CheckResult,
        now: Timestamp,
        effects: &mut Effects,
    ) -> Result<(), StateError> {
        let host = target.host_name();
        let def = config.service(host, service).expect("configured service");
        let host_unreachable = self
            .tables
            .hosts
            .get(host)
            .is_some_and(|h| h.current_status == HostStatus::Unreachable);
        let key = (host.to_string(), service.to_string());
        let state = self.tables.services.get_mut(&key).expect("configured service");
        let was_ok = state.current_status.is_ok();
        let obs = Observation {
            status: result.status,
            output: result.output.clone(),
            origin: result.origin,
            host_unreachable,
        };
        let events = state.apply(target, obs, &TransitionParams::from(def), now)?;
        if was_ok && !result.status.is_ok() {
            if let Some(h) = config.hosts.get(host) {
                if h.check_command.is_some() && h.active_checks_enabled {
                    effects.force_checks.push(ObjectRef::host(host));
                }
            }
        }
        let policy = NotificationPolicy::from(def);
        for e in events {
            self.emit(config, &policy, e, Kind::Service(key.clone()), now, effects);
        }
        Ok(())
    }

    fn emit(
        &mut self,
        config: &ResolvedConfig,
        policy: &NotificationPolicy,
        event: StateEvent,
        kind: Kind,
        now: Timestamp,
        effects: &mut Effects,
    ) {
        if event.kind != EventKind::RenotifyEligible {
            effects.log_lines.push(event.log_line());
        }
        if event.kind == EventKind::StateLog {
            return;
        }
        let decision = match &kind {
            Kind::Host => self.decide(config, policy, &event, &self.tables.hosts[event.target.host_name()], now),
            Kind::Service(k) => self.decide(config, policy, &event, &self.tables.services[k], now),
        };
        if !decision.notify {
            if event.kind != EventKind::RenotifyEligible || decision.reason == REASON_UNKNOWN_PERIOD {
                effects.log_lines.push(format!(
                    "{} {} NOTIFICATION_SUPPRESSED {} {} {}",
                    ts(now),
                    event.target,
                    event.status,
                    event.attempt,
                    decision.reason
                ));
            }
            return;
        }
        let Some(message) = NotificationMessage::from_event(&event, config) else { return };
        let zone = &self.options.zone;
        let jobs = channel_jobs(&message, config, zone, now);
        let rendered = render_message(&message, &self.options.engine_name, &self.options.engine_version, zone);
        match &kind {
            Kind::Host => self.tables.hosts.get_mut(event.target.host_name()).expect("host").record_notification(now),
            Kind::Service(k) => self.tables.services.get_mut(k).expect("service").record_notification(now),
        }
        self.counters.notifications += 1;
        effects.log_lines.push(format!(
            "{} {} NOTIFICATION {} {} {} to {}",
            ts(now),
            event.target,
            event.status,
            event.attempt,
            message.notification_type,
            if message.recipients.is_empty() { "-".to_string() } else { message.recipients.join(",") }
        ));
        effects.notifications.push(Notification {
            message,
            jobs,
            rendered,
        });
    }

    fn decide<S: StateValue>(
        &self,
        config: &ResolvedConfig,
        policy: &NotificationPolicy,
        event: &StateEvent,
        state: &MonitorState<S>,
        now: Timestamp,
    ) -> sentinel_core::notify::Decision {
        should_notify(event, policy, state, config, self.options.interval_length, &self.options.zone, now)
    }

    /// Periodic work: lazy downtime pruning and renotification.
    pub fn tick(&mut self, now: Timestamp, effects: &mut Effects) {
        let config = self.config.clone();
        let mut due = Vec::new();
        for (h, st) in self.tables.hosts.iter_mut() {
            st.prune_downtimes(now);
            let def = &config.hosts[h];
            let policy = NotificationPolicy::from(def);
            let target = ObjectRef::host(h);
            if let Some(e) = st.renotify_event(&target, renotify_interval(&policy, self.options.interval_length), now) {
                due.push((policy, e, Kind::Host));
            }
        }
        for (k, st) in self.tables.services.iter_mut() {
            st.prune_downtimes(now);
            let def = &config.services[k];
            let policy = NotificationPolicy::from(def);
            let target = ObjectRef::service(&k.0, &k.1);
            if let Some(e) = st.renotify_event(&target, renotify_interval(&policy, self.options.interval_length), now) {
                due.push((policy, e, Kind::Service(k.clone())));
            }
        }
        for (policy, event, kind) in due {
            self.emit(&config, &policy, event, kind, now, effects);
        }
    }

    pub fn acknowledge(
        &mut self,
        target: &ObjectRef,
        who: &str,
        comment: &str,
        now: Timestamp,
        effects: &mut Effects,
    ) -> Result<(), CommandError> {
        self.lookup(target)?;
        let (result, status) = match target.service_name() {
            None => {
                let st = self.tables.hosts.get_mut(target.host_name()).expect("host");
                (st.acknowledge(who, comment, now), st.current_status.to_string())
            }
            Some(s) => {
                let key = (target.host_name().to_string(), s.to_string());
                let st = self.tables.services.get_mut(&key).expect("service");
                (st.acknowledge(who, comment, now), st.current_status.to_string())
            }
        };
        result.map_err(|e| CommandError::Conflict(e.to_string()))?;
        effects.log_lines.push(format!(
            "{} {target} ACKNOWLEDGEMENT {status} - {who}: {comment}",
            ts(now)
        ));
        Ok(())
    }

    pub fn add_downtime(
        &mut self,
        target: &ObjectRef,
        start: Timestamp,
        end: Timestamp,
        who: &str,
        comment: &str,
        now: Timestamp,
        effects: &mut Effects,
    ) -> Result<(), CommandError> {
        self.lookup(target)?;
        let downtime = Downtime::new(start, end, who, comment).map_err(|e| CommandError::Invalid(e.to_string()))?;
        match target.service_name() {
            None => self.tables.hosts.get_mut(target.host_name()).expect("host").add_downtime(downtime),
            Some(s) => self
                .tables
                .services
                .get_mut(&(target.host_name().to_string(), s.to_string()))
                .expect("service")
                .add_downtime(downtime),
        }
        effects.log_lines.push(audit_line(
            now,
            &target.to_string(),
            "DOWNTIME",
            &format!("{} to {} by {who}: {comment}", ts(start), ts(end)),
        ));
        Ok(())
    }

    /// Checks that `target` is actively checked, so a forced check makes
    /// sense.
    pub fn check_forceable(&self, target: &ObjectRef) -> Result<(), CommandError> {
        self.lookup(target)?;
        let active = match target.service_name() {
            None => {
                let h = &self.config.hosts[target.host_name()];
                h.check_command.is_some() && h.active_checks_enabled
            }
            Some(s) => self
                .config
                .service(target.host_name(), s)
                .is_some_and(|d| d.active_checks_enabled),
        };
        if active {
            Ok(())
        } else {
            Err(CommandError::Conflict(format!("'{target}' is not actively checked")))
        }
    }

    /// Applies a passive result line. The producer's timestamp is used when
    /// it lies within the skew window of `now`.
    pub fn handle_passive(
        &mut self,
        line: &PassiveResultLine,
        source: &str,
        now: Timestamp,
        effects: &mut Effects,
    ) -> Result<(), CommandError> {
        line.validate().map_err(CommandError::Invalid)?;
        let target = line.target();
        self.lookup(&target)?;
        let (at, substituted) = line.effective_time(now, self.options.skew_window);
        if substituted {
            self.counters.skew_substituted += 1;
            effects.log_lines.push(audit_line(
                now,
                &target.to_string(),
                "CLOCK_SKEW",
                &format!("producer time {} from {source} replaced by receive time", line.received_at),
            ));
        }
        let result = line.to_check_result(at, source);
        self.handle_result(&target, &result, at, effects)
    }

    /// Service status as seen by the API and tests.
    pub fn service_state(&self, host: &str, service: &str) -> Option<&MonitorState<CheckStatus>> {
        self.tables.services.get(&(host.to_string(), service.to_string()))
    }

    pub fn host_state(&self, host: &str) -> Option<&MonitorState<HostStatus>> {
        self.tables.hosts.get(host)
    }
}

enum Kind {
    Host,
    Service((String, String)),
}
