use std::collections::BTreeMap;
use std::fmt;

use super::period::TimePeriodDef;
use super::SourceLocation;

/// One `define <kind>{ ... }` block as written, before template resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawObjectBlock {
    pub kind: String,
    pub attributes: Vec<(String, String)>,
    pub location: SourceLocation,
}

impl RawObjectBlock {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// `check_command` value: a command name followed by `!`-separated arguments.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CheckCommand {
    pub name: String,
    pub args: Vec<String>,
}

impl CheckCommand {
    pub fn parse(value: &str) -> Self {
        let mut parts = value.split('!');
        let name = parts.next().unwrap_or_default().trim().to_string();
        CheckCommand {
            name,
            args: parts.map(str::to_string).collect(),
        }
    }
}

impl fmt::Display for CheckCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        for arg in &self.args {
            write!(f, "!{arg}")?;
        }
        Ok(())
    }
}

/// Set of notification option letters.
///
/// Services use `w,u,c,r`, hosts `d,u,r`; `n` spells the empty set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct NotificationOptions(u8);

const LETTERS: [char; 5] = ['d', 'w', 'u', 'c', 'r'];

impl NotificationOptions {
    pub const SERVICE_LETTERS: &'static str = "wucr";
    pub const HOST_LETTERS: &'static str = "dur";

    pub fn none() -> Self {
        NotificationOptions(0)
    }

    pub fn all_service() -> Self {
        Self::from_letters(Self::SERVICE_LETTERS)
    }

    pub fn all_host() -> Self {
        Self::from_letters(Self::HOST_LETTERS)
    }

    fn bit(letter: char) -> Option<u8> {
        LETTERS.iter().position(|&l| l == letter).map(|i| 1 << i)
    }

    fn from_letters(letters: &str) -> Self {
        NotificationOptions(letters.chars().filter_map(Self::bit).fold(0, |a, b| a | b))
    }

    /// Parses a comma list such as `w,u,c,r` against the allowed alphabet.
    pub fn parse(value: &str, allowed: &str) -> Result<Self, String> {
        let mut bits = 0;
        for item in value.split(',').map(str::trim) {
            if item == "n" {
                continue;
            }
            let mut chars = item.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) if allowed.contains(c) => bits |= Self::bit(c).expect("known"),
                _ => return Err(format!("unknown notification option '{item}'")),
            }
        }
        Ok(NotificationOptions(bits))
    }

    pub fn contains(&self, letter: char) -> bool {
        Self::bit(letter).is_some_and(|b| self.0 & b != 0)
    }

    pub fn insert(&mut self, letter: char) {
        if let Some(b) = Self::bit(letter) {
            self.0 |= b;
        }
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for NotificationOptions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("n");
        }
        let letters: Vec<String> = LETTERS
            .iter()
            .filter(|&&l| self.contains(l))
            .map(|l| l.to_string())
            .collect();
        f.write_str(&letters.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceDef {
    /// Template name declared on this object itself, if any.
    pub name: Option<String>,
    pub service_description: String,
    pub host_name: String,
    pub is_volatile: bool,
    pub active_checks_enabled: bool,
    pub passive_checks_enabled: bool,
    pub check_period: String,
    pub max_check_attempts: u32,
    pub normal_check_interval: u32,
    pub retry_check_interval: u32,
    /// 0 means never renotify.
    pub notification_interval: u32,
    pub notification_period: String,
    pub notification_options: NotificationOptions,
    pub check_command: CheckCommand,
    pub contact_groups: Vec<String>,
    /// Unrecognized attributes, kept for forward compatibility.
    pub extra: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HostDef {
    pub name: Option<String>,
    pub host_name: String,
    pub alias: String,
    pub address: String,
    pub parents: Vec<String>,
    pub check_command: Option<CheckCommand>,
    pub active_checks_enabled: bool,
    pub passive_checks_enabled: bool,
    pub check_period: String,
    pub max_check_attempts: u32,
    pub normal_check_interval: u32,
    pub retry_check_interval: u32,
    pub notification_interval: u32,
    pub notification_period: String,
    pub notification_options: NotificationOptions,
    pub contact_groups: Vec<String>,
    pub extra: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HostGroupDef {
    pub name: Option<String>,
    pub hostgroup_name: String,
    pub alias: String,
    pub contact_groups: Vec<String>,
    pub members: Vec<String>,
    pub extra: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandDef {
    pub command_name: String,
    pub command_line: String,
}

/// One notification channel of a contact group: a command reference plus an
/// optional period restricting when this channel is used.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelSpec {
    pub command: String,
    pub period: Option<String>,
}

impl ChannelSpec {
    /// `notify-by-sms@operator-hours` → command + period override.
    pub fn parse(item: &str) -> Self {
        match item.split_once('@') {
            Some((c, p)) => ChannelSpec {
                command: c.trim().to_string(),
                period: Some(p.trim().to_string()),
            },
            None => ChannelSpec {
                command: item.trim().to_string(),
                period: None,
            },
        }
    }
}

impl fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.period {
            Some(p) => write!(f, "{}@{}", self.command, p),
            None => f.write_str(&self.command),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContactGroupDef {
    pub contactgroup_name: String,
    pub alias: String,
    pub channels: Vec<ChannelSpec>,
}

/// Template-resolved configuration holding only registered objects.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ResolvedConfig {
    pub hosts: BTreeMap<String, HostDef>,
    pub services: BTreeMap<(String, String), ServiceDef>,
    pub hostgroups: BTreeMap<String, HostGroupDef>,
    pub contactgroups: BTreeMap<String, ContactGroupDef>,
    pub timeperiods: BTreeMap<String, TimePeriodDef>,
    pub commands: BTreeMap<String, CommandDef>,
}

impl ResolvedConfig {
    pub fn service(&self, host: &str, description: &str) -> Option<&ServiceDef> {
        self.services
            .get(&(host.to_string(), description.to_string()))
    }

    pub fn services_on<'a>(&'a self, host: &'a str) -> impl Iterator<Item = &'a ServiceDef> + 'a {
        self.services
            .range((host.to_string(), String::new())..)
            .take_while(move |((h, _), _)| h == host)
            .map(|(_, s)| s)
    }

    /// The named period, falling back to the predefined `24x7`.
    pub fn period(&self, name: &str) -> Option<std::borrow::Cow<'_, TimePeriodDef>> {
        use std::borrow::Cow;
        match self.timeperiods.get(name) {
            Some(p) => Some(Cow::Borrowed(p)),
            None if name == super::PERIOD_24X7 => {
                Some(Cow::Owned(TimePeriodDef::all_week(super::PERIOD_24X7)))
            }
            None => None,
        }
    }

    pub fn has_period(&self, name: &str) -> bool {
        name == super::PERIOD_24X7 || self.timeperiods.contains_key(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn options_parse_and_print() {
        let o = NotificationOptions::parse("w,u,c,r", NotificationOptions::SERVICE_LETTERS).unwrap();
        assert_eq!(o, NotificationOptions::all_service());
        assert_eq!(o.to_string(), "w,u,c,r");
        let h = NotificationOptions::parse("r,d", NotificationOptions::HOST_LETTERS).unwrap();
        assert_eq!(h.to_string(), "d,r");
        assert!(NotificationOptions::parse("w,x", NotificationOptions::SERVICE_LETTERS).is_err());
        assert!(NotificationOptions::parse("d", NotificationOptions::SERVICE_LETTERS).is_err());
        assert!(NotificationOptions::parse("n", "wucr").unwrap().is_empty());
        assert_eq!(NotificationOptions::none().to_string(), "n");
    }

    #[test]
    fn check_command_args() {
        let c = CheckCommand::parse("check-tcp!143!* OK");
        assert_eq!(c.name, "check-tcp");
        assert_eq!(c.args, vec!["143", "* OK"]);
        assert_eq!(c.to_string(), "check-tcp!143!* OK");
        assert_eq!(CheckCommand::parse("doing some tests").name, "doing some tests");
    }
}
