use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write};
use std::io::Read;
use std::str::FromStr;

use serde::Deserialize;

/// Host classes of the monitoring policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HostClass {
    NetworkDevice,
    FarmPc,
    Printer,
    WorkgroupServer,
    Mail,
    WebServer,
    AfsServer,
}

impl HostClass {
    pub const ALL: [HostClass; 7] = [
        HostClass::NetworkDevice,
        HostClass::FarmPc,
        HostClass::Printer,
        HostClass::WorkgroupServer,
        HostClass::Mail,
        HostClass::WebServer,
        HostClass::AfsServer,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            HostClass::NetworkDevice => "NetworkDevice",
            HostClass::FarmPc => "FarmPC",
            HostClass::Printer => "Printer",
            HostClass::WorkgroupServer => "WorkgroupServer",
            HostClass::Mail => "Mail",
            HostClass::WebServer => "WebServer",
            HostClass::AfsServer => "AFSServer",
        }
    }
}

impl fmt::Display for HostClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HostClass {
    type Err = AssetError;

    /// Case-insensitive; spaces, dashes and underscores are ignored, so
    /// "Network Device" and "network_device" both parse.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded: String = s
            .chars()
            .filter(|c| !matches!(c, ' ' | '_' | '-'))
            .flat_map(char::to_lowercase)
            .collect();
        HostClass::ALL
            .into_iter()
            .find(|c| c.as_str().to_lowercase() == folded)
            .ok_or_else(|| AssetError::UnknownClass(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssetRecord {
    pub hostname: String,
    pub address: String,
    pub host_class: HostClass,
    pub owner_contact_group: String,
}

#[derive(Debug, thiserror::Error)]
pub enum AssetError {
    #[error("unknown host class '{0}'")]
    UnknownClass(String),
    #[error("duplicate hostnames in asset list: {}", .0.join(", "))]
    Duplicates(Vec<String>),
    #[error("host class {0} has no row in the monitoring policy")]
    MissingPolicy(HostClass),
    #[error("asset inventory: {0}")]
    Csv(#[from] csv::Error),
}

/// One service the policy attaches to hosts of a class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyService {
    pub description: String,
    /// `check_command` value, e.g. `check-tcp!110!+OK`.
    pub check_command: String,
}

impl PolicyService {
    fn new(description: &str, check_command: &str) -> Self {
        PolicyService {
            description: description.to_string(),
            check_command: check_command.to_string(),
        }
    }
}

/// Maps each host class to the services it gets, plus the command
/// definitions those services reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonitoringPolicy {
    pub host_check_command: String,
    pub services: BTreeMap<HostClass, Vec<PolicyService>>,
    /// command name → command line
    pub commands: BTreeMap<String, String>,
}

impl Default for MonitoringPolicy {
    /// The site policy: network devices and farm PCs are only pinged,
    /// printers go through an external SNMP plugin, workgroup servers get
    /// load/disk/process plugins, mail hosts POP and IMAP port checks, web
    /// servers an HTTP check and AFS servers an external service plugin.
    fn default() -> Self {
        let plugin_dir = "/usr/lib/sentinel/plugins";
        let commands = [
            ("check-host-alive", "sentinel:ping $HOSTADDRESS$".to_string()),
            ("check-tcp", "sentinel:tcp $HOSTADDRESS$ $ARG1$ $ARG2$".to_string()),
            ("check-http", "sentinel:http http://$HOSTADDRESS$/".to_string()),
            ("check-printer", format!("{plugin_dir}/check_printer -H $HOSTADDRESS$")),
            ("check-load", format!("{plugin_dir}/check_load -w 5 -c 10")),
            ("check-disk", format!("{plugin_dir}/check_disk -w 10% -c 5%")),
            ("check-procs", format!("{plugin_dir}/check_procs -w 250 -c 400")),
            ("check-afs", format!("{plugin_dir}/check_afs -H $HOSTADDRESS$")),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();

        let services = BTreeMap::from([
            (HostClass::NetworkDevice, vec![]),
            (HostClass::FarmPc, vec![]),
            (HostClass::Printer, vec![PolicyService::new("PRINTER", "check-printer")]),
            (
                HostClass::WorkgroupServer,
                vec![
                    PolicyService::new("LOAD", "check-load"),
                    PolicyService::new("DISK", "check-disk"),
                    PolicyService::new("PROCS", "check-procs"),
                ],
            ),
            (
                HostClass::Mail,
                vec![
                    PolicyService::new("POP", "check-tcp!110!+OK"),
                    PolicyService::new("IMAP", "check-tcp!143!* OK"),
                ],
            ),
            (HostClass::WebServer, vec![PolicyService::new("HTTP", "check-http")]),
            (HostClass::AfsServer, vec![PolicyService::new("AFS", "check-afs")]),
        ]);

        MonitoringPolicy {
            host_check_command: "check-host-alive".to_string(),
            services,
            commands,
        }
    }
}

#[derive(Deserialize)]
struct AssetRow {
    hostname: String,
    address: String,
    host_class: String,
    contact_group: String,
}

/// Reads the `hostname,address,host_class,contact_group` CSV inventory.
pub fn read_assets_csv<R: Read>(reader: R) -> Result<Vec<AssetRecord>, AssetError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: AssetRow = row?;
        out.push(AssetRecord {
            hostname: row.hostname,
            address: row.address,
            host_class: row.host_class.parse()?,
            owner_contact_group: row.contact_group,
        });
    }
    Ok(out)
}

const HEADER: &str = "# Generated by sentinel-conf from the asset inventory. Do not edit.\n";

/// Renders host and service definitions for an asset inventory.
///
/// Output is sorted by hostname and contains only the command, contact
/// group and template blocks the assets actually need.
pub fn generate_from_assets(
    assets: &[AssetRecord],
    policy: &MonitoringPolicy,
) -> Result<String, AssetError> {
    let mut seen = BTreeSet::new();
    let mut dups = BTreeSet::new();
    for a in assets {
        if !seen.insert(a.hostname.as_str()) {
            dups.insert(a.hostname.clone());
        }
    }
    if !dups.is_empty() {
        return Err(AssetError::Duplicates(dups.into_iter().collect()));
    }

    let mut sorted: Vec<&AssetRecord> = assets.iter().collect();
    sorted.sort_by(|a, b| a.hostname.cmp(&b.hostname));

    let mut used_commands = BTreeSet::new();
    let mut contact_groups = BTreeSet::new();
    let mut any_service = false;
    for a in &sorted {
        let services = policy
            .services
            .get(&a.host_class)
            .ok_or(AssetError::MissingPolicy(a.host_class))?;
        used_commands.insert(policy.host_check_command.clone());
        for s in services {
            used_commands.insert(super::CheckCommand::parse(&s.check_command).name);
            any_service = true;
        }
        contact_groups.insert(a.owner_contact_group.as_str());
    }

    let mut out = String::from(HEADER);
    if sorted.is_empty() {
        return Ok(out);
    }
    out.push('\n');

    for name in &used_commands {
        let line = policy
            .commands
            .get(name)
            .map(String::as_str)
            .unwrap_or("/bin/false");
        let _ = write!(
            out,
            "define command{{\n    command_name            {name}\n    command_line            {line}\n}}\n\n"
        );
    }
    for group in &contact_groups {
        let _ = write!(
            out,
            "define contactgroup{{\n    contactgroup_name       {group}\n    alias                   {group}\n}}\n\n"
        );
    }

    let _ = write!(
        out,
        "define host{{\n    name                    generic-host\n    check_command           {}\n    check_period            24x7\n    max_check_attempts      3\n    normal_check_interval   5\n    retry_check_interval    1\n    notification_interval   60\n    notification_period     24x7\n    notification_options    d,u,r\n    register                0\n}}\n\n",
        policy.host_check_command
    );
    if any_service {
        out.push_str(
            "define service{\n    name                    generic-service\n    check_period            24x7\n    max_check_attempts      3\n    normal_check_interval   5\n    retry_check_interval    1\n    notification_interval   60\n    notification_period     24x7\n    notification_options    w,u,c,r\n    register                0\n}\n\n",
        );
    }

    for a in &sorted {
        let _ = write!(
            out,
            "define host{{\n    use                     generic-host\n    host_name               {}\n    alias                   {} {}\n    address                 {}\n    contact_groups          {}\n}}\n\n",
            a.hostname, a.host_class, a.hostname, a.address, a.owner_contact_group
        );
        for s in &policy.services[&a.host_class] {
            let _ = write!(
                out,
                "define service{{\n    use                     generic-service\n    host_name               {}\n    service_description     {}\n    check_command           {}\n    contact_groups          {}\n}}\n\n",
                a.hostname, s.description, s.check_command, a.owner_contact_group
            );
        }
    }
    Ok(out)
}
