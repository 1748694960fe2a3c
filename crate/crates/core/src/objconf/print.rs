use std::collections::BTreeMap;
use std::fmt::Write;

use super::period::WEEKDAYS;
use super::types::ResolvedConfig;

struct BlockWriter<'a> {
    out: &'a mut String,
}

impl BlockWriter<'_> {
    fn open<'a>(out: &'a mut String, kind: &str) -> BlockWriter<'a> {
        let _ = writeln!(out, "define {kind}{{");
        BlockWriter { out }
    }

    fn attr(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        let value = value.to_string();
        if !value.is_empty() {
            let _ = writeln!(self.out, "    {key:<24}{value}");
        }
        self
    }

    fn opt(&mut self, key: &str, value: Option<&String>) -> &mut Self {
        if let Some(v) = value {
            self.attr(key, v);
        }
        self
    }

    fn flag(&mut self, key: &str, value: bool) -> &mut Self {
        self.attr(key, u8::from(value))
    }

    fn list(&mut self, key: &str, values: &[String]) -> &mut Self {
        self.attr(key, values.join(","))
    }

    fn extra(&mut self, extra: &BTreeMap<String, String>) -> &mut Self {
        for (k, v) in extra {
            self.attr(k, v);
        }
        self
    }

    fn close(&mut self) {
        self.out.push_str("}\n\n");
    }
}

/// Writes a resolved configuration in canonical form: every registered
/// object with all of its fields spelled out, no templates.
pub fn print_config(config: &ResolvedConfig) -> String {
    let mut out = String::new();

    for cmd in config.commands.values() {
        BlockWriter::open(&mut out, "command")
            .attr("command_name", &cmd.command_name)
            .attr("command_line", &cmd.command_line)
            .close();
    }

    for period in config.timeperiods.values() {
        let mut w = BlockWriter::open(&mut out, "timeperiod");
        w.attr("timeperiod_name", &period.period_name)
            .attr("alias", &period.alias);
        for (day, ranges) in WEEKDAYS.iter().zip(&period.ranges) {
            let text: Vec<String> = ranges.iter().map(ToString::to_string).collect();
            w.attr(day, text.join(","));
        }
        w.close();
    }

    for group in config.contactgroups.values() {
        let channels: Vec<String> = group.channels.iter().map(ToString::to_string).collect();
        BlockWriter::open(&mut out, "contactgroup")
            .attr("contactgroup_name", &group.contactgroup_name)
            .attr("alias", &group.alias)
            .list("notification_commands", &channels)
            .close();
    }

    for host in config.hosts.values() {
        BlockWriter::open(&mut out, "host")
            .opt("name", host.name.as_ref())
            .attr("host_name", &host.host_name)
            .attr("alias", &host.alias)
            .attr("address", &host.address)
            .list("parents", &host.parents)
            .opt(
                "check_command",
                host.check_command.as_ref().map(ToString::to_string).as_ref(),
            )
            .flag("active_checks_enabled", host.active_checks_enabled)
            .flag("passive_checks_enabled", host.passive_checks_enabled)
            .attr("check_period", &host.check_period)
            .attr("max_check_attempts", host.max_check_attempts)
            .attr("normal_check_interval", host.normal_check_interval)
            .attr("retry_check_interval", host.retry_check_interval)
            .attr("notification_interval", host.notification_interval)
            .attr("notification_period", &host.notification_period)
            .attr("notification_options", host.notification_options)
            .list("contact_groups", &host.contact_groups)
            .extra(&host.extra)
            .close();
    }

    for group in config.hostgroups.values() {
        BlockWriter::open(&mut out, "hostgroup")
            .opt("name", group.name.as_ref())
            .attr("hostgroup_name", &group.hostgroup_name)
            .attr("alias", &group.alias)
            .list("contact_groups", &group.contact_groups)
            .list("members", &group.members)
            .extra(&group.extra)
            .close();
    }

    for svc in config.services.values() {
        BlockWriter::open(&mut out, "service")
            .opt("name", svc.name.as_ref())
            .attr("host_name", &svc.host_name)
            .attr("service_description", &svc.service_description)
            .flag("is_volatile", svc.is_volatile)
            .flag("active_checks_enabled", svc.active_checks_enabled)
            .flag("passive_checks_enabled", svc.passive_checks_enabled)
            .attr("check_period", &svc.check_period)
            .attr("max_check_attempts", svc.max_check_attempts)
            .attr("normal_check_interval", svc.normal_check_interval)
            .attr("retry_check_interval", svc.retry_check_interval)
            .attr("notification_interval", svc.notification_interval)
            .attr("notification_period", &svc.notification_period)
            .attr("notification_options", svc.notification_options)
            .attr("check_command", &svc.check_command)
            .list("contact_groups", &svc.contact_groups)
            .extra(&svc.extra)
            .close();
    }

    out
}
