use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::checkcore::{CheckOrigin, CheckResult, CheckStatus};
use crate::objconf::{HostDef, ServiceDef};
use crate::{ObjectRef, Timestamp};

/// Status of a host after reachability analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum HostStatus {
    Up,
    Down,
    Unreachable,
}

impl HostStatus {
    pub const ALL: [HostStatus; 3] = [HostStatus::Up, HostStatus::Down, HostStatus::Unreachable];

    pub fn name(self) -> &'static str {
        match self {
            HostStatus::Up => "UP",
            HostStatus::Down => "DOWN",
            HostStatus::Unreachable => "UNREACHABLE",
        }
    }

    /// Whether a host check result counts as passed. OK and WARNING pass.
    pub fn check_passed(status: CheckStatus) -> bool {
        matches!(status, CheckStatus::Ok | CheckStatus::Warning)
    }
}

impl fmt::Display for HostStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HostStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HostStatus::ALL
            .into_iter()
            .find(|h| h.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown host status '{s}'"))
    }
}

/// Status of either object kind, as carried by events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObjectStatus {
    Service(CheckStatus),
    Host(HostStatus),
}

impl ObjectStatus {
    pub fn name(self) -> &'static str {
        match self {
            ObjectStatus::Service(s) => s.name(),
            ObjectStatus::Host(h) => h.name(),
        }
    }

    pub fn is_ok(self) -> bool {
        match self {
            ObjectStatus::Service(s) => s.is_ok(),
            ObjectStatus::Host(h) => h == HostStatus::Up,
        }
    }

    /// Notification option letter a problem in this status needs. The OK
    /// state maps to `r`.
    pub fn option_letter(self) -> char {
        match self {
            ObjectStatus::Service(CheckStatus::Ok) | ObjectStatus::Host(HostStatus::Up) => 'r',
            ObjectStatus::Service(CheckStatus::Warning) => 'w',
            ObjectStatus::Service(CheckStatus::Critical) => 'c',
            ObjectStatus::Service(CheckStatus::Unknown) => 'u',
            ObjectStatus::Host(HostStatus::Down) => 'd',
            ObjectStatus::Host(HostStatus::Unreachable) => 'u',
        }
    }
}

impl fmt::Display for ObjectStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Status values the state machine can track.
pub trait StateValue: Copy + Eq + fmt::Debug + fmt::Display {
    const OK: Self;
    fn to_object_status(self) -> ObjectStatus;
    fn is_ok(self) -> bool {
        self == Self::OK
    }
}

impl StateValue for CheckStatus {
    const OK: Self = CheckStatus::Ok;
    fn to_object_status(self) -> ObjectStatus {
        ObjectStatus::Service(self)
    }
}

impl StateValue for HostStatus {
    const OK: Self = HostStatus::Up;
    fn to_object_status(self) -> ObjectStatus {
        ObjectStatus::Host(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StateType {
    Soft,
    Hard,
}

impl StateType {
    pub fn name(self) -> &'static str {
        match self {
            StateType::Soft => "SOFT",
            StateType::Hard => "HARD",
        }
    }
}

impl fmt::Display for StateType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StateType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "SOFT" => Ok(StateType::Soft),
            "HARD" => Ok(StateType::Hard),
            _ => Err(format!("unknown state type '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Acknowledgement {
    pub who: String,
    pub comment: String,
    pub at: Timestamp,
}

/// Scheduled downtime, active on `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Downtime {
    pub start: Timestamp,
    pub end: Timestamp,
    pub who: String,
    pub comment: String,
}

impl Downtime {
    pub fn new(
        start: Timestamp,
        end: Timestamp,
        who: impl Into<String>,
        comment: impl Into<String>,
    ) -> Result<Self, StateError> {
        if end <= start {
            return Err(StateError::EmptyDowntime);
        }
        Ok(Downtime {
            start,
            end,
            who: who.into(),
            comment: comment.into(),
        })
    }

    pub fn contains(&self, at: Timestamp) -> bool {
        self.start <= at && at < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StateError {
    #[error("not in problem state")]
    NotInProblemState,
    #[error("downtime must end after it starts")]
    EmptyDowntime,
    #[error("passive checks are disabled for {0}")]
    PassiveDisabled(ObjectRef),
}

/// What the state machine needs from an object definition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransitionParams {
    pub max_check_attempts: u32,
    pub is_volatile: bool,
    pub passive_checks_enabled: bool,
}

impl From<&ServiceDef> for TransitionParams {
    fn from(d: &ServiceDef) -> Self {
        TransitionParams {
            max_check_attempts: d.max_check_attempts,
            is_volatile: d.is_volatile,
            passive_checks_enabled: d.passive_checks_enabled,
        }
    }
}

impl From<&HostDef> for TransitionParams {
    fn from(d: &HostDef) -> Self {
        TransitionParams {
            max_check_attempts: d.max_check_attempts,
            is_volatile: false,
            passive_checks_enabled: d.passive_checks_enabled,
        }
    }
}

/// One status observation fed to [`MonitorState::apply`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation<S> {
    pub status: S,
    pub output: String,
    pub origin: CheckOrigin,
    /// The object's host is UNREACHABLE: PROBLEM events are withheld.
    pub host_unreachable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    Problem,
    Recovery,
    StateLog,
    RenotifyEligible,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Problem => "PROBLEM",
            EventKind::Recovery => "RECOVERY",
            EventKind::StateLog => "STATE_LOG",
            EventKind::RenotifyEligible => "RENOTIFY_ELIGIBLE",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateEvent {
    pub kind: EventKind,
    pub target: ObjectRef,
    pub at: Timestamp,
    pub status: ObjectStatus,
    pub state_type: StateType,
    pub attempt: u32,
    pub output: String,
}

impl StateEvent {
    /// `<ISO8601> <object> <kind> <status> <attempt> <output>`
    pub fn log_line(&self) -> String {
        format!(
            "{} {} {} {} {} {}",
            self.at.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            self.target,
            self.kind,
            self.status,
            self.attempt,
            self.output
        )
    }
}

/// Runtime state of one host or service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorState<S> {
    pub current_status: S,
    pub state_type: StateType,
    pub attempt: u32,
    pub last_hard_status: S,
    pub last_check: Option<Timestamp>,
    pub last_state_change: Option<Timestamp>,
    pub last_hard_change: Option<Timestamp>,
    pub last_notification: Option<Timestamp>,
    pub acknowledgement: Option<Acknowledgement>,
    pub downtimes: Vec<Downtime>,
    pub last_output: String,
}

impl<S: StateValue> Default for MonitorState<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: StateValue> MonitorState<S> {
    /// Initial state: HARD OK, never checked.
    pub fn new() -> Self {
        MonitorState {
            current_status: S::OK,
            state_type: StateType::Hard,
            attempt: 1,
            last_hard_status: S::OK,
            last_check: None,
            last_state_change: None,
            last_hard_change: None,
            last_notification: None,
            acknowledgement: None,
            downtimes: Vec::new(),
            last_output: String::new(),
        }
    }

    pub fn acknowledged(&self) -> bool {
        self.acknowledgement.is_some()
    }

    pub fn is_hard_problem(&self) -> bool {
        self.state_type == StateType::Hard && !self.current_status.is_ok()
    }

    fn event(&self, kind: EventKind, target: &ObjectRef, at: Timestamp) -> StateEvent {
        StateEvent {
            kind,
            target: target.clone(),
            at,
            status: self.current_status.to_object_status(),
            state_type: self.state_type,
            attempt: self.attempt,
            output: self.last_output.clone(),
        }
    }

    /// Feeds one observation through the soft/hard automaton.
    ///
    /// Returns the emitted events: a STATE_LOG whenever status, state type
    /// or attempt changed, and PROBLEM/RECOVERY on hard boundaries. While
    /// the object is in downtime only STATE_LOG is emitted.
    pub fn apply(
        &mut self,
        target: &ObjectRef,
        obs: Observation<S>,
        params: &TransitionParams,
        now: Timestamp,
    ) -> Result<Vec<StateEvent>, StateError> {
        if obs.origin == CheckOrigin::Passive && !params.passive_checks_enabled {
            return Err(StateError::PassiveDisabled(target.clone()));
        }
        let max = params.max_check_attempts.max(1);
        let before = (self.current_status, self.state_type, self.attempt);
        let mut alert = None;

        if obs.status.is_ok() {
            let hard_problem = self.is_hard_problem();
            self.current_status = obs.status;
            self.state_type = StateType::Hard;
            self.attempt = 1;
            if hard_problem {
                alert = Some(EventKind::Recovery);
                self.acknowledgement = None;
            }
        } else {
            match self.state_type {
                StateType::Hard if self.current_status.is_ok() => {
                    self.current_status = obs.status;
                    self.attempt = 1;
                    if max == 1 {
                        alert = Some(EventKind::Problem);
                    } else {
                        self.state_type = StateType::Soft;
                    }
                }
                StateType::Hard => {
                    if obs.status != self.current_status {
                        self.acknowledgement = None;
                        alert = Some(EventKind::Problem);
                    } else if params.is_volatile {
                        alert = Some(EventKind::Problem);
                    }
                    self.current_status = obs.status;
                }
                StateType::Soft => {
                    self.current_status = obs.status;
                    self.attempt += 1;
                    if self.attempt >= max {
                        self.state_type = StateType::Hard;
                        self.attempt = 1;
                        alert = Some(EventKind::Problem);
                    }
                }
            }
        }

        self.last_check = Some(now);
        self.last_output = obs.output;
        if self.current_status != before.0 {
            self.last_state_change = Some(now);
        }
        if self.state_type == StateType::Hard && self.current_status != self.last_hard_status {
            self.last_hard_status = self.current_status;
            self.last_hard_change = Some(now);
        } else if alert == Some(EventKind::Problem) && self.last_hard_change.is_none() {
            self.last_hard_change = Some(now);
        }

        let mut events = Vec::new();
        if (self.current_status, self.state_type, self.attempt) != before {
            events.push(self.event(EventKind::StateLog, target, now));
        }
        let suppressed = self.in_downtime(now)
            || (alert == Some(EventKind::Problem) && obs.host_unreachable);
        if let Some(kind) = alert.filter(|_| !suppressed) {
            events.push(self.event(kind, target, now));
        }
        Ok(events)
    }

    pub fn acknowledge(&mut self, who: &str, comment: &str, now: Timestamp) -> Result<(), StateError> {
        if !self.is_hard_problem() {
            return Err(StateError::NotInProblemState);
        }
        self.acknowledgement = Some(Acknowledgement {
            who: who.to_string(),
            comment: comment.to_string(),
            at: now,
        });
        Ok(())
    }

    pub fn add_downtime(&mut self, downtime: Downtime) {
        self.downtimes.push(downtime);
        self.downtimes.sort_by_key(|d| (d.start, d.end));
    }

    pub fn in_downtime(&self, now: Timestamp) -> bool {
        self.downtimes.iter().any(|d| d.contains(now))
    }

    /// Drops windows that ended at or before `now`; returns how many.
    pub fn prune_downtimes(&mut self, now: Timestamp) -> usize {
        let before = self.downtimes.len();
        self.downtimes.retain(|d| d.end > now);
        before - self.downtimes.len()
    }

    /// Time the renotification interval is measured from: the later of the
    /// last notification and the last hard change.
    pub fn renotify_reference(&self) -> Option<Timestamp> {
        match (self.last_notification, self.last_hard_change) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        }
    }

    /// A RENOTIFY_ELIGIBLE event if the object is a hard, unacknowledged
    /// problem outside downtime whose renotification interval has elapsed.
    pub fn renotify_event(
        &self,
        target: &ObjectRef,
        interval: chrono::Duration,
        now: Timestamp,
    ) -> Option<StateEvent> {
        if !self.is_hard_problem()
            || self.acknowledged()
            || self.in_downtime(now)
            || interval <= chrono::Duration::zero()
        {
            return None;
        }
        let reference = self.renotify_reference()?;
        (now - reference >= interval).then(|| self.event(EventKind::RenotifyEligible, target, now))
    }

    pub fn record_notification(&mut self, now: Timestamp) {
        self.last_notification = Some(now);
    }
}

impl MonitorState<CheckStatus> {
    /// Applies a service check result.
    pub fn apply_result(
        &mut self,
        target: &ObjectRef,
        def: &ServiceDef,
        result: &CheckResult,
        now: Timestamp,
    ) -> Result<Vec<StateEvent>, StateError> {
        let obs = Observation {
            status: result.status,
            output: result.output.clone(),
            origin: result.origin,
            host_unreachable: false,
        };
        self.apply(target, obs, &TransitionParams::from(def), now)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};
    use CheckStatus::*;

    fn t(min: i64) -> Timestamp {
        Utc.with_ymd_and_hms(2003, 3, 19, 10, 0, 0).unwrap() + chrono::Duration::minutes(min)
    }

    fn params(max: u32) -> TransitionParams {
        TransitionParams {
            max_check_attempts: max,
            is_volatile: false,
            passive_checks_enabled: true,
        }
    }

    fn feed(
        state: &mut MonitorState<CheckStatus>,
        p: &TransitionParams,
        seq: &[CheckStatus],
    ) -> Vec<Vec<EventKind>> {
        let target = ObjectRef::service("www", "HTTP");
        seq.iter()
            .enumerate()
            .map(|(i, s)| {
                let obs = Observation {
                    status: *s,
                    output: s.name().to_string(),
                    origin: CheckOrigin::Active,
                    host_unreachable: false,
                };
                state
                    .apply(&target, obs, p, t(i as i64))
                    .unwrap()
                    .into_iter()
                    .map(|e| e.kind)
                    .filter(|k| *k != EventKind::StateLog)
                    .collect()
            })
            .collect()
    }

    #[test]
    fn ten_attempts() {
        let mut s = MonitorState::new();
        let ev = feed(&mut s, &params(10), &[Critical; 9]);
        assert!(ev.iter().all(|e| e.is_empty()));
        assert_eq!((s.state_type, s.attempt), (StateType::Soft, 9));
        let ev = feed(&mut s, &params(10), &[Critical]);
        assert_eq!(ev, vec![vec![EventKind::Problem]]);
        assert_eq!((s.state_type, s.attempt), (StateType::Hard, 1));
    }

    #[test]
    fn soft_recovery_is_silent() {
        let mut s = MonitorState::new();
        let ev = feed(&mut s, &params(3), &[Critical, Critical, Ok, Critical, Critical, Critical]);
        let positions: Vec<usize> = ev
            .iter()
            .enumerate()
            .filter(|(_, e)| !e.is_empty())
            .map(|(i, _)| i + 1)
            .collect();
        assert_eq!(positions, vec![6]);
    }

    #[test]
    fn recovery_clears_ack() {
        let mut s = MonitorState::new();
        feed(&mut s, &params(1), &[Critical]);
        s.acknowledge("op", "looking", t(1)).unwrap();
        assert!(s.renotify_event(&ObjectRef::host("h"), chrono::Duration::seconds(1), t(100)).is_none());
        let ev = feed(&mut s, &params(1), &[Ok]);
        assert_eq!(ev, vec![vec![EventKind::Recovery]]);
        assert!(!s.acknowledged());
        assert_eq!(s.acknowledge("op", "", t(2)), Err(StateError::NotInProblemState));
    }

    #[test]
    fn hard_ok_identity_has_no_events() {
        let mut s = MonitorState::new();
        let target = ObjectRef::service("www", "HTTP");
        let obs = Observation {
            status: Ok,
            output: "fine".into(),
            origin: CheckOrigin::Active,
            host_unreachable: false,
        };
        assert!(s.apply(&target, obs, &params(3), t(0)).unwrap().is_empty());
        assert_eq!((s.current_status, s.state_type, s.attempt), (Ok, StateType::Hard, 1));
    }

    #[test]
    fn escalation_and_volatility() {
        let mut s = MonitorState::new();
        let ev = feed(&mut s, &params(1), &[Warning, Warning, Critical, Critical]);
        assert_eq!(
            ev,
            vec![vec![EventKind::Problem], vec![], vec![EventKind::Problem], vec![]]
        );
        let mut volatile = params(1);
        volatile.is_volatile = true;
        let mut s = MonitorState::new();
        let ev = feed(&mut s, &volatile, &[Critical, Critical, Critical]);
        assert!(ev.iter().all(|e| e == &vec![EventKind::Problem]));
    }

    #[test]
    fn escalation_clears_ack() {
        let mut s = MonitorState::new();
        feed(&mut s, &params(1), &[Warning]);
        s.acknowledge("op", "", t(0)).unwrap();
        feed(&mut s, &params(1), &[Critical]);
        assert!(!s.acknowledged());
    }

    #[test]
    fn passive_gate() {
        let mut s: MonitorState<CheckStatus> = MonitorState::new();
        let mut p = params(1);
        p.passive_checks_enabled = false;
        let obs = Observation {
            status: Critical,
            output: String::new(),
            origin: CheckOrigin::Passive,
            host_unreachable: false,
        };
        let target = ObjectRef::service("h", "s");
        assert!(matches!(s.apply(&target, obs, &p, t(0)), Err(StateError::PassiveDisabled(_))));
        assert_eq!(s, MonitorState::new());
    }

    #[test]
    fn downtime_window() {
        let mut s: MonitorState<CheckStatus> = MonitorState::new();
        assert!(!s.in_downtime(t(30)));
        assert_eq!(Downtime::new(t(60), t(60), "op", ""), Err(StateError::EmptyDowntime));
        s.add_downtime(Downtime::new(t(0), t(60), "op", "").unwrap());
        assert!(s.in_downtime(t(30)));
        assert!(!s.in_downtime(t(60)));
        let ev = feed(&mut s, &params(1), &[Critical]);
        assert_eq!(ev, vec![Vec::<EventKind>::new()]);
        assert_eq!(s.prune_downtimes(t(60)), 1);
    }

    #[test]
    fn unreachable_host_withholds_problem() {
        let mut s: MonitorState<CheckStatus> = MonitorState::new();
        let obs = Observation {
            status: Critical,
            output: String::new(),
            origin: CheckOrigin::Active,
            host_unreachable: true,
        };
        let ev = s.apply(&ObjectRef::service("h", "s"), obs, &params(1), t(0)).unwrap();
        assert_eq!(ev.iter().map(|e| e.kind).collect::<Vec<_>>(), vec![EventKind::StateLog]);
    }

    #[test]
    fn log_line_format() {
        let e = StateEvent {
            kind: EventKind::Problem,
            target: ObjectRef::service("web", "IT Web Server"),
            at: t(0),
            status: ObjectStatus::Service(Critical),
            state_type: StateType::Hard,
            attempt: 1,
            output: "Connection refused by host".into(),
        };
        assert_eq!(
            e.log_line(),
            "2003-03-19T10:00:00Z web;IT Web Server PROBLEM CRITICAL 1 Connection refused by host"
        );
    }
}
