use std::fmt;

use serde::{Deserialize, Serialize};

use crate::objconf::ResolvedConfig;
use crate::statemachine::{EventKind, StateEvent};
use crate::{Timestamp, Zone};

/// ctime-style date with zone abbreviation: `Wed Mar 19 08:37:46 MET 2003`.
pub const DATE_FORMAT: &str = "%a %b %d %H:%M:%S %Z %Y";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum NotificationType {
    Problem,
    Recovery,
}

impl NotificationType {
    pub fn name(self) -> &'static str {
        match self {
            NotificationType::Problem => "PROBLEM",
            NotificationType::Recovery => "RECOVERY",
        }
    }
}

impl fmt::Display for NotificationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NotificationMessage {
    pub notification_type: NotificationType,
    /// `None` for host notifications.
    pub service_description: Option<String>,
    pub host_alias: String,
    pub address: String,
    pub state: String,
    pub at: Timestamp,
    pub additional_info: String,
    pub recipients: Vec<String>,
}

impl NotificationMessage {
    /// Builds the message for a notifiable event. RENOTIFY_ELIGIBLE events
    /// are sent as PROBLEM. Recipients are the object's contact groups
    /// followed by those of hostgroups containing its host.
    pub fn from_event(event: &StateEvent, config: &ResolvedConfig) -> Option<Self> {
        let notification_type = match event.kind {
            EventKind::Problem | EventKind::RenotifyEligible => NotificationType::Problem,
            EventKind::Recovery => NotificationType::Recovery,
            EventKind::StateLog => return None,
        };
        let host_name = event.target.host_name();
        let host = config.hosts.get(host_name);
        let mut recipients: Vec<String> = match event.target.service_name() {
            Some(desc) => config
                .service(host_name, desc)
                .map(|s| s.contact_groups.clone())
                .unwrap_or_default(),
            None => host.map(|h| h.contact_groups.clone()).unwrap_or_default(),
        };
        for group in config.hostgroups.values() {
            if group.members.iter().any(|m| m == host_name) {
                for cg in &group.contact_groups {
                    if !recipients.contains(cg) {
                        recipients.push(cg.clone());
                    }
                }
            }
        }
        Some(NotificationMessage {
            notification_type,
            service_description: event.target.service_name().map(str::to_string),
            host_alias: host.map(|h| h.alias.clone()).unwrap_or_else(|| host_name.to_string()),
            address: host.map(|h| h.address.clone()).unwrap_or_default(),
            state: event.status.name().to_string(),
            at: event.at,
            additional_info: event.output.clone(),
            recipients,
        })
    }

    pub fn date_time(&self, zone: &Zone) -> String {
        zone.format(self.at, DATE_FORMAT)
    }
}

/// Renders the notification text, one field per line.
pub fn render_message(msg: &NotificationMessage, engine_name: &str, version: &str, zone: &Zone) -> String {
    let mut out = format!("***** {engine_name} {version} *****\n");
    out.push_str(&format!("Notification Type: {}\n", msg.notification_type));
    if let Some(desc) = &msg.service_description {
        out.push_str(&format!("Service: {desc}\n"));
    }
    out.push_str(&format!("Host: {}\n", msg.host_alias));
    out.push_str(&format!("Address: {}\n", msg.address));
    out.push_str(&format!("State: {}\n", msg.state));
    out.push_str(&format!("Date/Time: {}\n", msg.date_time(zone)));
    out.push_str(&format!("Additional Info: {}\n", msg.additional_info));
    out
}
