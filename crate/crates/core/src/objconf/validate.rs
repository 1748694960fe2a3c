use std::collections::{BTreeMap, HashMap};

use super::types::ResolvedConfig;
use super::Diagnostic;

/// Cross-reference and structural checks. Empty iff the configuration is
/// deployable.
pub fn validate(config: &ResolvedConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut err = |msg: String| out.push(Diagnostic::error(None, msg));

    for (name, host) in &config.hosts {
        if host.address.trim().is_empty() {
            err(format!("host '{name}' has no address"));
        }
        for parent in &host.parents {
            if parent == name {
                err(format!("host '{name}' lists itself as parent"));
            } else if !config.hosts.contains_key(parent) {
                err(format!("unknown parent '{parent}' of host '{name}'"));
            }
        }
        if let Some(cmd) = &host.check_command {
            if !config.commands.contains_key(&cmd.name) {
                err(format!("unknown command '{}' in host '{name}'", cmd.name));
            }
        }
        for period in [&host.check_period, &host.notification_period] {
            if !config.has_period(period) {
                err(format!("unknown period '{period}' in host '{name}'"));
            }
        }
        for group in &host.contact_groups {
            if !config.contactgroups.contains_key(group) {
                err(format!("unknown contact group '{group}' in host '{name}'"));
            }
        }
    }

    for ((host, desc), svc) in &config.services {
        if !config.hosts.contains_key(host) {
            err(format!("unknown host '{host}' for service '{desc}'"));
        }
        if !config.commands.contains_key(&svc.check_command.name) {
            err(format!(
                "unknown command '{}' in service '{host};{desc}'",
                svc.check_command.name
            ));
        }
        for period in [&svc.check_period, &svc.notification_period] {
            if !config.has_period(period) {
                err(format!("unknown period '{period}' in service '{host};{desc}'"));
            }
        }
        for group in &svc.contact_groups {
            if !config.contactgroups.contains_key(group) {
                err(format!("unknown contact group '{group}' in service '{host};{desc}'"));
            }
        }
    }

    for (name, group) in &config.hostgroups {
        if group.members.is_empty() {
            err(format!("hostgroup '{name}' has no members"));
        }
        for member in &group.members {
            if !config.hosts.contains_key(member) {
                err(format!("unknown member '{member}' in hostgroup '{name}'"));
            }
        }
        for cg in &group.contact_groups {
            if !config.contactgroups.contains_key(cg) {
                err(format!("unknown contact group '{cg}' in hostgroup '{name}'"));
            }
        }
    }

    for (name, group) in &config.contactgroups {
        for channel in &group.channels {
            if !config.commands.contains_key(&channel.command) {
                err(format!(
                    "unknown command '{}' in contact group '{name}'",
                    channel.command
                ));
            }
            if let Some(p) = &channel.period {
                if !config.has_period(p) {
                    err(format!("unknown period '{p}' in contact group '{name}'"));
                }
            }
        }
    }

    for cycle in parent_cycles(config) {
        err(format!("parent cycle: {}", cycle.join(" -> ")));
    }
    out
}

/// One entry per distinct cycle in the parents relation, each rendered as
/// the closed walk starting from its smallest host name.
fn parent_cycles(config: &ResolvedConfig) -> Vec<Vec<String>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }

    fn visit<'a>(
        node: &'a str,
        config: &'a ResolvedConfig,
        marks: &mut HashMap<&'a str, Mark>,
        stack: &mut Vec<&'a str>,
        found: &mut BTreeMap<Vec<String>, ()>,
    ) {
        marks.insert(node, Mark::Active);
        stack.push(node);
        if let Some(host) = config.hosts.get(node) {
            for parent in &host.parents {
                if parent == node || !config.hosts.contains_key(parent) {
                    continue;
                }
                match marks.get(parent.as_str()) {
                    Some(Mark::Active) => {
                        let pos = stack.iter().position(|n| n == parent).expect("on stack");
                        let mut cycle: Vec<String> =
                            stack[pos..].iter().map(|s| s.to_string()).collect();
                        let min = (0..cycle.len()).min_by_key(|&i| &cycle[i]).unwrap_or(0);
                        cycle.rotate_left(min);
                        cycle.push(cycle[0].clone());
                        found.insert(cycle, ());
                    }
                    Some(Mark::Done) => {}
                    None => visit(parent, config, marks, stack, found),
                }
            }
        }
        stack.pop();
        marks.insert(node, Mark::Done);
    }

    let mut marks = HashMap::new();
    let mut found = BTreeMap::new();
    for name in config.hosts.keys() {
        if !marks.contains_key(name.as_str()) {
            visit(name, config, &mut marks, &mut Vec::new(), &mut found);
        }
    }
    found.into_keys().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objconf::load_sources;

    #[test]
    fn empty_config_is_valid() {
        assert!(validate(&ResolvedConfig::default()).is_empty());
    }

    #[test]
    fn parent_cycle_detected() {
        let text = "define host{\n host_name a\n address 1\n parents b\n}\n\
                    define host{\n host_name b\n address 2\n parents a\n}\n";
        let (_, d) = load_sources([("t.cfg", text)]);
        assert_eq!(d.len(), 1, "{d:?}");
        assert_eq!(d[0].message, "parent cycle: a -> b -> a");
    }

    #[test]
    fn self_parent_and_missing_address() {
        let text = "define host{\n host_name a\n parents a\n}\n";
        let (_, d) = load_sources([("t.cfg", text)]);
        let msgs: Vec<_> = d.iter().map(|d| d.message.as_str()).collect();
        assert!(msgs.contains(&"host 'a' lists itself as parent"));
        assert!(msgs.contains(&"host 'a' has no address"));
    }

    #[test]
    fn contact_group_channel_references() {
        let text = "define contactgroup{\n contactgroup_name ops\n notification_commands mail,sms@nights\n}\n\
                    define command{\n command_name mail\n command_line cat\n}\n";
        let (c, d) = load_sources([("t.cfg", text)]);
        assert_eq!(c.contactgroups["ops"].channels.len(), 2);
        let msgs: Vec<_> = d.iter().map(|d| d.message.as_str()).collect();
        assert_eq!(
            msgs,
            vec![
                "unknown command 'sms' in contact group 'ops'",
                "unknown period 'nights' in contact group 'ops'"
            ]
        );
    }
}
