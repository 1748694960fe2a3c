use std::collections::{BTreeMap, HashMap};

use super::period::{TimePeriodDef, WEEKDAYS};
use super::types::*;
use super::{validate, Diagnostic, SourceLocation};

type AttrMap = BTreeMap<String, String>;

/// Keys never inherited from a template.
const NON_INHERITED: [&str; 3] = ["name", "use", "register"];

#[derive(Clone)]
enum Failure {
    UnknownTemplate(String),
    MultipleInheritance(String),
    Cycle(Vec<String>),
    Ancestor(String),
}

struct Resolver<'a> {
    blocks: &'a [RawObjectBlock],
    templates: HashMap<(&'a str, &'a str), usize>,
    memo: Vec<Option<Result<AttrMap, Failure>>>,
}

impl<'a> Resolver<'a> {
    fn resolve(&mut self, idx: usize, stack: &mut Vec<usize>) -> Result<AttrMap, Failure> {
        if let Some(done) = &self.memo[idx] {
            return done.clone();
        }
        let block = &self.blocks[idx];
        if let Some(pos) = stack.iter().position(|&i| i == idx) {
            let mut names: Vec<String> = stack[pos..]
                .iter()
                .map(|&i| self.blocks[i].get("name").unwrap_or("?").to_string())
                .collect();
            names.push(block.get("name").unwrap_or("?").to_string());
            return Err(Failure::Cycle(names));
        }

        let result = match block.get("use") {
            None => Ok(AttrMap::new()),
            Some(parent) if parent.contains(',') => {
                Err(Failure::MultipleInheritance(parent.to_string()))
            }
            Some(parent) => match self.templates.get(&(block.kind.as_str(), parent)).copied() {
                None => Err(Failure::UnknownTemplate(parent.to_string())),
                Some(p) => {
                    stack.push(idx);
                    let r = self.resolve(p, stack);
                    stack.pop();
                    match r {
                        Ok(inherited) => Ok(inherited),
                        Err(Failure::Cycle(c)) => Err(Failure::Cycle(c)),
                        Err(_) => Err(Failure::Ancestor(parent.to_string())),
                    }
                }
            },
        };

        let result = result.map(|mut merged| {
            merged.retain(|k, _| !NON_INHERITED.contains(&k.as_str()));
            for (k, v) in &block.attributes {
                if k != "use" {
                    merged.insert(k.clone(), v.clone());
                }
            }
            merged
        });
        // A cycle result depends on where the walk entered the loop.
        if !matches!(result, Err(Failure::Cycle(_))) || stack.is_empty() {
            self.memo[idx] = Some(result.clone());
        }
        result
    }
}

/// Resolves `use` inheritance and builds the typed configuration.
///
/// Resolution is local-first, then the nearest template up the `use` chain.
/// Blocks with `register 0` serve only as templates. The returned
/// diagnostics include everything [`validate`] reports on the result.
pub fn resolve_templates(blocks: &[RawObjectBlock]) -> (ResolvedConfig, Vec<Diagnostic>) {
    let mut diags = Vec::new();
    let mut templates: HashMap<(&str, &str), usize> = HashMap::new();
    for (i, b) in blocks.iter().enumerate() {
        if let Some(name) = b.get("name") {
            if let Some(&first) = templates.get(&(b.kind.as_str(), name)) {
                diags.push(Diagnostic::error(
                    Some(b.location.clone()),
                    format!(
                        "duplicate {} template '{}' (first defined at {})",
                        b.kind, name, blocks[first].location
                    ),
                ));
            } else {
                templates.insert((b.kind.as_str(), name), i);
            }
        }
    }

    let mut resolver = Resolver {
        blocks,
        templates,
        memo: vec![None; blocks.len()],
    };
    let mut config = ResolvedConfig::default();

    for (i, block) in blocks.iter().enumerate() {
        let loc = Some(block.location.clone());
        let attrs = match resolver.resolve(i, &mut Vec::new()) {
            Ok(a) => a,
            Err(f) => {
                let msg = match f {
                    Failure::UnknownTemplate(t) => format!("unknown template '{t}' in use"),
                    Failure::MultipleInheritance(t) => {
                        format!("multiple inheritance is not supported: use {t}")
                    }
                    Failure::Cycle(c) => format!("template cycle: {}", c.join(" -> ")),
                    Failure::Ancestor(t) => format!("template '{t}' could not be resolved"),
                };
                diags.push(Diagnostic::error(loc, format!("{msg}; {} dropped", block.kind)));
                continue;
            }
        };

        match attrs.get("register").map(String::as_str) {
            None | Some("1") => {}
            Some("0") => continue,
            Some(other) => {
                diags.push(Diagnostic::error(
                    loc,
                    format!("register must be 0 or 1, got '{other}'; {} dropped", block.kind),
                ));
                continue;
            }
        }

        let b = Builder {
            attrs: &attrs,
            loc: &block.location,
            kind: &block.kind,
            diags: &mut diags,
            failed: false,
        };
        match block.kind.as_str() {
            "host" => {
                if let Some(h) = b.host() {
                    if config.hosts.contains_key(&h.host_name) {
                        diags.push(Diagnostic::error(
                            loc,
                            format!("duplicate host '{}', first definition wins", h.host_name),
                        ));
                    } else {
                        config.hosts.insert(h.host_name.clone(), h);
                    }
                }
            }
            "service" => {
                if let Some(s) = b.service() {
                    let key = (s.host_name.clone(), s.service_description.clone());
                    if config.services.contains_key(&key) {
                        diags.push(Diagnostic::error(
                            loc,
                            format!(
                                "duplicate service '{}' on host '{}', first definition wins",
                                key.1, key.0
                            ),
                        ));
                    } else {
                        config.services.insert(key, s);
                    }
                }
            }
            "hostgroup" => {
                if let Some(g) = b.hostgroup() {
                    insert_unique(&mut config.hostgroups, g.hostgroup_name.clone(), g, loc, &mut diags);
                }
            }
            "timeperiod" => {
                if let Some(p) = b.timeperiod() {
                    insert_unique(&mut config.timeperiods, p.period_name.clone(), p, loc, &mut diags);
                }
            }
            "command" => {
                if let Some(c) = b.command() {
                    insert_unique(&mut config.commands, c.command_name.clone(), c, loc, &mut diags);
                }
            }
            "contactgroup" => {
                if let Some(c) = b.contactgroup() {
                    insert_unique(
                        &mut config.contactgroups,
                        c.contactgroup_name.clone(),
                        c,
                        loc,
                        &mut diags,
                    );
                }
            }
            other => diags.push(Diagnostic::warning(
                loc,
                format!("unknown object kind '{other}', block ignored"),
            )),
        }
    }

    diags.extend(validate(&config));
    (config, diags)
}

fn insert_unique<T>(
    map: &mut BTreeMap<String, T>,
    key: String,
    value: T,
    loc: Option<SourceLocation>,
    diags: &mut Vec<Diagnostic>,
) {
    if map.contains_key(&key) {
        diags.push(Diagnostic::error(
            loc,
            format!("duplicate definition of '{key}', first definition wins"),
        ));
    } else {
        map.insert(key, value);
    }
}

const SERVICE_KEYS: &[&str] = &[
    "service_description",
    "host_name",
    "is_volatile",
    "active_checks_enabled",
    "passive_checks_enabled",
    "check_period",
    "max_check_attempts",
    "normal_check_interval",
    "retry_check_interval",
    "notification_interval",
    "notification_period",
    "notification_options",
    "check_command",
    "contact_groups",
];

const HOST_KEYS: &[&str] = &[
    "host_name",
    "alias",
    "address",
    "parents",
    "check_command",
    "active_checks_enabled",
    "passive_checks_enabled",
    "check_period",
    "max_check_attempts",
    "normal_check_interval",
    "retry_check_interval",
    "notification_interval",
    "notification_period",
    "notification_options",
    "contact_groups",
];

const HOSTGROUP_KEYS: &[&str] = &["hostgroup_name", "alias", "contact_groups", "members"];
const COMMAND_KEYS: &[&str] = &["command_name", "command_line"];
const CONTACTGROUP_KEYS: &[&str] = &["contactgroup_name", "alias", "notification_commands"];

struct Builder<'a> {
    attrs: &'a AttrMap,
    loc: &'a SourceLocation,
    kind: &'a str,
    diags: &'a mut Vec<Diagnostic>,
    failed: bool,
}

impl Builder<'_> {
    fn error(&mut self, msg: String) {
        self.failed = true;
        self.diags.push(Diagnostic::error(Some(self.loc.clone()), msg));
    }

    fn required(&mut self, key: &str) -> String {
        match self.attrs.get(key) {
            Some(v) => v.clone(),
            None => {
                self.error(format!("{} is missing required attribute '{key}'", self.kind));
                String::new()
            }
        }
    }

    fn optional(&self, key: &str) -> Option<String> {
        self.attrs.get(key).cloned()
    }

    fn flag(&mut self, key: &str, default: bool) -> bool {
        match self.attrs.get(key).map(String::as_str) {
            None => default,
            Some("1") => true,
            Some("0") => false,
            Some(other) => {
                self.error(format!("{key} must be 0 or 1, got '{other}'"));
                default
            }
        }
    }

    fn number(&mut self, key: &str, default: Option<u32>, min: u32) -> u32 {
        match self.attrs.get(key) {
            None => match default {
                Some(d) => d,
                None => {
                    self.error(format!("{} is missing required attribute '{key}'", self.kind));
                    min
                }
            },
            Some(v) => match v.parse::<u32>() {
                Ok(n) if n >= min => n,
                _ => {
                    self.error(format!("{key} must be an integer >= {min}, got '{v}'"));
                    min
                }
            },
        }
    }

    fn list(&self, key: &str) -> Vec<String> {
        self.attrs
            .get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default()
    }

    fn options(&mut self, allowed: &str, default: NotificationOptions) -> NotificationOptions {
        match self.attrs.get("notification_options") {
            None => default,
            Some(v) => match NotificationOptions::parse(v, allowed) {
                Ok(o) => o,
                Err(e) => {
                    self.error(e);
                    default
                }
            },
        }
    }

    fn extra(&mut self, known: &[&str]) -> BTreeMap<String, String> {
        let mut extra = BTreeMap::new();
        for (k, v) in self.attrs {
            if k == "name" || k == "register" || known.contains(&k.as_str()) {
                continue;
            }
            self.diags.push(Diagnostic::warning(
                Some(self.loc.clone()),
                format!("unknown {} attribute '{k}' preserved", self.kind),
            ));
            extra.insert(k.clone(), v.clone());
        }
        extra
    }

    fn finish<T>(self, value: T) -> Option<T> {
        if self.failed {
            self.diags.push(Diagnostic::error(
                Some(self.loc.clone()),
                format!("{} dropped", self.kind),
            ));
            None
        } else {
            Some(value)
        }
    }

    fn service(mut self) -> Option<ServiceDef> {
        let host_name = self.required("host_name");
        if host_name.contains(',') {
            self.error(format!("service host_name must name one host, got '{host_name}'"));
        }
        let def = ServiceDef {
            name: self.optional("name"),
            service_description: self.required("service_description"),
            host_name,
            is_volatile: self.flag("is_volatile", false),
            active_checks_enabled: self.flag("active_checks_enabled", true),
            passive_checks_enabled: self.flag("passive_checks_enabled", true),
            check_period: self.required("check_period"),
            max_check_attempts: self.number("max_check_attempts", None, 1),
            normal_check_interval: self.number("normal_check_interval", Some(5), 1),
            retry_check_interval: self.number("retry_check_interval", Some(1), 1),
            notification_interval: self.number("notification_interval", Some(0), 0),
            notification_period: self
                .optional("notification_period")
                .unwrap_or_else(|| super::PERIOD_24X7.to_string()),
            notification_options: self.options(
                NotificationOptions::SERVICE_LETTERS,
                NotificationOptions::all_service(),
            ),
            check_command: CheckCommand::parse(&self.required("check_command")),
            contact_groups: self.list("contact_groups"),
            extra: self.extra(SERVICE_KEYS),
        };
        self.finish(def)
    }

    fn host(mut self) -> Option<HostDef> {
        let host_name = self.required("host_name");
        let def = HostDef {
            name: self.optional("name"),
            alias: self.optional("alias").unwrap_or_else(|| host_name.clone()),
            address: self.optional("address").unwrap_or_default(),
            parents: self.list("parents"),
            check_command: self.optional("check_command").map(|c| CheckCommand::parse(&c)),
            active_checks_enabled: self.flag("active_checks_enabled", true),
            passive_checks_enabled: self.flag("passive_checks_enabled", true),
            check_period: self
                .optional("check_period")
                .unwrap_or_else(|| super::PERIOD_24X7.to_string()),
            max_check_attempts: self.number("max_check_attempts", Some(1), 1),
            normal_check_interval: self.number("normal_check_interval", Some(5), 1),
            retry_check_interval: self.number("retry_check_interval", Some(1), 1),
            notification_interval: self.number("notification_interval", Some(0), 0),
            notification_period: self
                .optional("notification_period")
                .unwrap_or_else(|| super::PERIOD_24X7.to_string()),
            notification_options: self.options(
                NotificationOptions::HOST_LETTERS,
                NotificationOptions::all_host(),
            ),
            contact_groups: self.list("contact_groups"),
            extra: self.extra(HOST_KEYS),
            host_name,
        };
        self.finish(def)
    }

    fn hostgroup(mut self) -> Option<HostGroupDef> {
        let hostgroup_name = self.required("hostgroup_name");
        let def = HostGroupDef {
            name: self.optional("name"),
            alias: self.optional("alias").unwrap_or_else(|| hostgroup_name.clone()),
            contact_groups: self.list("contact_groups"),
            members: self.list("members"),
            extra: self.extra(HOSTGROUP_KEYS),
            hostgroup_name,
        };
        self.finish(def)
    }

    fn timeperiod(mut self) -> Option<TimePeriodDef> {
        let period_name = self.required("timeperiod_name");
        let mut def = TimePeriodDef {
            alias: self.optional("alias").unwrap_or_else(|| period_name.clone()),
            period_name,
            ranges: Default::default(),
        };
        for (i, day) in WEEKDAYS.iter().enumerate() {
            if let Some(v) = self.attrs.get(*day) {
                match TimePeriodDef::parse_day(v) {
                    Ok(r) => def.ranges[i] = r,
                    Err(e) => self.error(format!("{day}: {e}")),
                }
            }
        }
        let mut known = vec!["timeperiod_name", "alias"];
        known.extend(WEEKDAYS);
        self.extra(&known);
        self.finish(def)
    }

    fn command(mut self) -> Option<CommandDef> {
        let def = CommandDef {
            command_name: self.required("command_name"),
            command_line: self.required("command_line"),
        };
        self.extra(COMMAND_KEYS);
        self.finish(def)
    }

    fn contactgroup(mut self) -> Option<ContactGroupDef> {
        let contactgroup_name = self.required("contactgroup_name");
        let def = ContactGroupDef {
            alias: self.optional("alias").unwrap_or_else(|| contactgroup_name.clone()),
            channels: self
                .list("notification_commands")
                .iter()
                .map(|c| ChannelSpec::parse(c))
                .collect(),
            contactgroup_name,
        };
        self.extra(CONTACTGROUP_KEYS);
        self.finish(def)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objconf::parse_objects;

    fn resolve(text: &str) -> (ResolvedConfig, Vec<Diagnostic>) {
        let (blocks, d) = parse_objects("t.cfg", text);
        assert!(d.is_empty(), "{d:?}");
        resolve_templates(&blocks)
    }

    #[test]
    fn unknown_template_drops_object() {
        let (c, d) = resolve("define host{\n host_name a\n address 1.2.3.4\n use nope\n}\n");
        assert!(c.hosts.is_empty());
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("unknown template 'nope'"));
    }

    #[test]
    fn template_cycle_is_named() {
        let text = "define host{\n name a\n use b\n register 0\n}\n\
                    define host{\n name b\n use a\n register 0\n}\n\
                    define host{\n host_name x\n address 1.1.1.1\n use a\n}\n";
        let (c, d) = resolve(text);
        assert!(c.hosts.is_empty());
        assert!(d.iter().any(|d| d.message.contains("template cycle: a -> b -> a")), "{d:?}");
        assert!(d.iter().all(|d| d.message.contains("cycle") || d.message.contains("could not")));
    }

    #[test]
    fn multiple_inheritance_rejected() {
        let (c, d) = resolve("define host{\n host_name a\n address 1.2.3.4\n use x,y\n}\n");
        assert!(c.hosts.is_empty());
        assert!(d[0].message.contains("multiple inheritance"));
    }

    #[test]
    fn duplicate_service_first_wins() {
        let text = "define command{\n command_name c\n command_line /bin/true\n}\n\
                    define host{\n host_name h\n address 1.1.1.1\n}\n\
                    define service{\n host_name h\n service_description s\n check_command c\n check_period 24x7\n max_check_attempts 1\n}\n\
                    define service{\n host_name h\n service_description s\n check_command c\n check_period 24x7\n max_check_attempts 7\n}\n";
        let (c, d) = resolve(text);
        assert_eq!(c.service("h", "s").unwrap().max_check_attempts, 1);
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("duplicate service"));
    }

    #[test]
    fn unknown_attribute_is_preserved_with_warning() {
        let text = "define host{\n host_name h\n address 1.1.1.1\n colour blue\n}\n";
        let (c, d) = resolve(text);
        assert_eq!(c.hosts["h"].extra["colour"], "blue");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].severity, crate::objconf::Severity::Warning);
    }

    #[test]
    fn bad_option_letter_is_an_error() {
        let text = "define host{\n host_name h\n address 1.1.1.1\n notification_options d,x\n}\n";
        let (c, d) = resolve(text);
        assert!(c.hosts.is_empty());
        assert!(d.iter().any(|d| d.message.contains("unknown notification option 'x'")));
    }

    #[test]
    fn missing_required_service_fields() {
        let text = "define service{\n service_description s\n}\n";
        let (c, d) = resolve(text);
        assert!(c.services.is_empty());
        assert!(d.iter().any(|d| d.message.contains("'host_name'")));
        assert!(d.iter().any(|d| d.message.contains("'check_command'")));
        assert!(d.iter().any(|d| d.message.contains("'max_check_attempts'")));
    }
}
