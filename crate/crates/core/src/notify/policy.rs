use chrono::TimeZone;

use crate::objconf::{HostDef, NotificationOptions, ResolvedConfig, ServiceDef, TimePeriodDef};
use crate::statemachine::{EventKind, MonitorState, StateEvent, StateValue};
use crate::{Timestamp, Zone};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NotificationPolicy {
    pub options: NotificationOptions,
    /// In interval units; 0 disables renotification.
    pub notification_interval: u32,
    pub notification_period: String,
    pub contact_groups: Vec<String>,
}

impl From<&ServiceDef> for NotificationPolicy {
    fn from(d: &ServiceDef) -> Self {
        NotificationPolicy {
            options: d.notification_options,
            notification_interval: d.notification_interval,
            notification_period: d.notification_period.clone(),
            contact_groups: d.contact_groups.clone(),
        }
    }
}

impl From<&HostDef> for NotificationPolicy {
    fn from(d: &HostDef) -> Self {
        NotificationPolicy {
            options: d.notification_options,
            notification_interval: d.notification_interval,
            notification_period: d.notification_period.clone(),
            contact_groups: d.contact_groups.clone(),
        }
    }
}

/// Outcome of [`should_notify`]. `reason` names the first failing gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub notify: bool,
    pub reason: &'static str,
}

impl Decision {
    const YES: Decision = Decision {
        notify: true,
        reason: "notify",
    };

    fn no(reason: &'static str) -> Self {
        Decision {
            notify: false,
            reason,
        }
    }
}

pub const REASON_NOT_NOTIFIABLE: &str = "not a notification event";
pub const REASON_UNKNOWN_PERIOD: &str = "unknown period";
pub const REASON_OUTSIDE_PERIOD: &str = "outside period";
pub const REASON_ACKNOWLEDGED: &str = "acknowledged";
pub const REASON_DOWNTIME: &str = "in downtime";
pub const REASON_RENOTIFY_DISABLED: &str = "renotification disabled";
pub const REASON_RENOTIFY_EARLY: &str = "renotify interval not elapsed";

fn option_reason(letter: char) -> &'static str {
    match letter {
        'd' => "option d disabled",
        'w' => "option w disabled",
        'u' => "option u disabled",
        'c' => "option c disabled",
        _ => "option r disabled",
    }
}

/// True iff `at`, seen in the period's timezone, falls in one of the ranges
/// of its weekday.
pub fn in_period<T: TimeZone>(period: &TimePeriodDef, at: &chrono::DateTime<T>) -> bool {
    period.contains(at)
}

/// Evaluates the notification gates in order: event kind, option letter,
/// notification period, acknowledgement (RECOVERY exempt), downtime and,
/// for RENOTIFY_ELIGIBLE, the renotification interval.
pub fn should_notify<S: StateValue>(
    event: &StateEvent,
    policy: &NotificationPolicy,
    state: &MonitorState<S>,
    config: &ResolvedConfig,
    interval_length: std::time::Duration,
    zone: &Zone,
    now: Timestamp,
) -> Decision {
    if !matches!(
        event.kind,
        EventKind::Problem | EventKind::Recovery | EventKind::RenotifyEligible
    ) {
        return Decision::no(REASON_NOT_NOTIFIABLE);
    }
    let letter = if event.kind == EventKind::Recovery {
        'r'
    } else {
        event.status.option_letter()
    };
    if !policy.options.contains(letter) {
        return Decision::no(option_reason(letter));
    }
    match config.period(&policy.notification_period) {
        None => return Decision::no(REASON_UNKNOWN_PERIOD),
        Some(p) if !in_period(&p, &zone.local(now)) => {
            return Decision::no(REASON_OUTSIDE_PERIOD)
        }
        Some(_) => {}
    }
    if event.kind != EventKind::Recovery && state.acknowledged() {
        return Decision::no(REASON_ACKNOWLEDGED);
    }
    if state.in_downtime(now) {
        return Decision::no(REASON_DOWNTIME);
    }
    if event.kind == EventKind::RenotifyEligible {
        if policy.notification_interval == 0 {
            return Decision::no(REASON_RENOTIFY_DISABLED);
        }
        let interval = renotify_interval(policy, interval_length);
        let elapsed = state
            .renotify_reference()
            .map(|r| now - r >= interval)
            .unwrap_or(true);
        if !elapsed {
            return Decision::no(REASON_RENOTIFY_EARLY);
        }
    }
    Decision::YES
}

pub fn renotify_interval(policy: &NotificationPolicy, interval_length: std::time::Duration) -> chrono::Duration {
    chrono::Duration::from_std(interval_length * policy.notification_interval).unwrap_or(chrono::Duration::MAX)
}
