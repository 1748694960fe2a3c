use std::collections::BTreeSet;
use std::time::Instant;

use proptest::prelude::*;
use sentinel_core::objconf::{
    generate_from_assets, has_errors, load_sources, parse_objects, print_config, resolve_templates,
    validate, AssetRecord, HostClass, MonitoringPolicy, ResolvedConfig, Severity,
};

const FILESERVER_TEMPLATE: &str = "define service{
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
";

const NIGHT_GROUP: &str = "define hostgroup{
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
";

const HOSTCHECK: &str = "define host{
    name                hostcheck
    check_command       check-host-alive
    max_check_attempts  3
    register            0
}
define command{
    command_name        check-host-alive
    command_line        sentinel:ping $HOSTADDRESS$
}
define contactgroup{
    contactgroup_name   sgi-admins
    alias               SGI administrators
}
";

/// Everything the two tables reference, so the combination deploys cleanly.
const SITE: &str = "define host{
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
    check_command       check-host-alive
    contact_groups      sgi-admins
}
";

fn attrs(block: &sentinel_core::objconf::RawObjectBlock) -> Vec<(&str, &str)> {
    block.attributes.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect()
}

fn errors(diags: &[sentinel_core::objconf::Diagnostic]) -> Vec<String> {
    diags
        .iter()
        .filter(|d| d.severity == Severity::Error)
        .map(|d| d.message.clone())
        .collect()
}

fn full_site() -> ResolvedConfig {
    let (config, diags) = load_sources([
        ("table4.cfg", FILESERVER_TEMPLATE),
        ("table5.cfg", NIGHT_GROUP),
        ("hostcheck.cfg", HOSTCHECK),
        ("site.cfg", SITE),
    ]);
    assert!(diags.is_empty(), "{diags:?}");
    config
}

#[test]
fn fileserver_template_parses_verbatim() {
    let (blocks, diags) = parse_objects("table4.cfg", FILESERVER_TEMPLATE);
    assert!(diags.is_empty(), "{diags:?}");
    assert_eq!(blocks.len(), 1);
    let b = &blocks[0];
    assert_eq!(b.kind, "service");
    assert_eq!(
        attrs(b),
        vec![
            ("name", "fileserver"),
            ("service_description", "fileserver"),
            ("is_volatile", "0"),
            ("active_checks_enabled", "0"),
            ("passive_checks_enabled", "1"),
            ("check_period", "24x7"),
            ("max_check_attempts", "10"),
            ("normal_check_interval", "1"),
            ("retry_check_interval", "5"),
            ("notification_interval", "2200"),
            ("notification_period", "24x7"),
            ("notification_options", "w,u,c,r"),
            ("check_command", "doing some tests"),
            ("register", "0"),
        ]
    );
    assert_eq!(b.location.line, 1);
}

#[test]
fn night_group_parses_verbatim() {
    let (blocks, diags) = parse_objects("table5.cfg", NIGHT_GROUP);
    assert!(diags.is_empty(), "{diags:?}");
    assert_eq!(blocks.len(), 2);
    assert_eq!(blocks[0].kind, "hostgroup");
    assert_eq!(
        attrs(&blocks[0]),
        vec![
            ("name", "night"),
            ("hostgroup_name", "night"),
            ("alias", "night"),
            ("contact_groups", "sgi-admins"),
            ("members", "netra8,test1,test2"),
        ]
    );
    assert_eq!(blocks[1].kind, "host");
    assert_eq!(
        attrs(&blocks[1]),
        vec![
            ("host_name", "netra8"),
            ("alias", "netra AFS Server"),
            ("address", "131.169.40.109"),
            ("parents", "route-194,route-40"),
            ("use", "hostcheck"),
        ]
    );
    assert_eq!(blocks[1].location.line, 8);
}

#[test]
fn crlf_input_parses_the_same() {
    let crlf = NIGHT_GROUP.replace('\n', "\r\n");
    let (a, _) = parse_objects("x", NIGHT_GROUP);
    let (b, diags) = parse_objects("x", &crlf);
    assert!(diags.is_empty());
    assert_eq!(attrs(&a[1]), attrs(&b[1]));
}

#[test]
fn empty_file_yields_nothing() {
    let (blocks, diags) = parse_objects("empty.cfg", "");
    assert!(blocks.is_empty() && diags.is_empty());
}

#[test]
fn template_alone_registers_nothing_but_is_usable() {
    let (blocks, _) = parse_objects("table4.cfg", FILESERVER_TEMPLATE);
    let (config, diags) = resolve_templates(&blocks);
    assert!(config.services.is_empty());
    assert!(config.hosts.is_empty());
    assert!(errors(&diags).is_empty(), "{diags:?}");

    let config = full_site();
    let svc = config.service("netra8", "fileserver").expect("instance of the template");
    assert_eq!(svc.max_check_attempts, 10);
    assert_eq!(svc.normal_check_interval, 1);
    assert_eq!(svc.retry_check_interval, 5);
    assert_eq!(svc.notification_interval, 2200);
    assert!(!svc.active_checks_enabled);
    assert!(svc.passive_checks_enabled);
    assert!(!svc.is_volatile);
    assert_eq!(svc.notification_options.to_string(), "w,u,c,r");
    assert_eq!(svc.check_command.name, "check-host-alive");
}

#[test]
fn netra8_resolves_through_hostcheck() {
    let config = full_site();
    let netra8 = &config.hosts["netra8"];
    assert_eq!(netra8.check_command.as_ref().unwrap().name, "check-host-alive");
    assert_eq!(netra8.max_check_attempts, 3);
    assert_eq!(netra8.address, "131.169.40.109");
    assert_eq!(netra8.alias, "netra AFS Server");
    assert_eq!(netra8.parents, vec!["route-194", "route-40"]);
    let night = &config.hostgroups["night"];
    assert_eq!(night.members, vec!["netra8", "test1", "test2"]);
    assert_eq!(night.contact_groups, vec!["sgi-admins"]);
}

#[test]
fn nearest_template_wins() {
    let text = "define service{
    name b
    normal_check_interval 5
    retry_check_interval 2
    register 0
}
define service{
    name a
    use b
    normal_check_interval 7
    register 0
}
define service{
    use a
    host_name h
    service_description s
    check_command c
    check_period 24x7
    max_check_attempts 1
}
define host{
    host_name h
    address 10.0.0.1
}
define command{
    command_name c
    command_line /bin/true
}
";
    let (config, diags) = load_sources([("chain.cfg", text)]);
    assert!(diags.is_empty(), "{diags:?}");
    let s = config.service("h", "s").unwrap();
    assert_eq!((s.normal_check_interval, s.retry_check_interval), (7, 2));
}

#[test]
fn missing_parents_and_members_are_reported() {
    let (config, diags) = load_sources([
        ("table5.cfg", NIGHT_GROUP),
        ("hostcheck.cfg", HOSTCHECK),
    ]);
    let errs = errors(&diags);
    let parents: Vec<_> = errs.iter().filter(|m| m.contains("unknown parent")).collect();
    let members: Vec<_> = errs.iter().filter(|m| m.contains("unknown member")).collect();
    assert_eq!(parents.len(), 2, "{errs:?}");
    assert!(parents.iter().any(|m| m.contains("route-194")));
    assert!(parents.iter().any(|m| m.contains("route-40")));
    assert_eq!(members.len(), 2, "{errs:?}");
    assert!(members.iter().any(|m| m.contains("test1")));
    assert!(members.iter().any(|m| m.contains("test2")));
    assert_eq!(validate(&config).len(), 4);
    assert!(validate(&ResolvedConfig::default()).is_empty());
}

#[test]
fn canonical_print_is_a_fixpoint() {
    let started = Instant::now();
    let first = full_site();
    let printed = print_config(&first);
    let (second, diags) = load_sources([("printed.cfg", printed.as_str())]);
    assert!(diags.is_empty(), "{diags:?}");
    assert_eq!(first, second);
    assert_eq!(print_config(&second), printed);
    assert!(started.elapsed().as_secs_f64() < 1.0);
}

/// Independent walk over every identifier a zero-diagnostic config refers to.
fn dangling_references(config: &ResolvedConfig) -> Vec<String> {
    let period = |p: &str| p == "24x7" || config.timeperiods.contains_key(p);
    let mut missing = Vec::new();
    let mut need = |ok: bool, what: String| {
        if !ok {
            missing.push(what);
        }
    };
    for h in config.hosts.values() {
        for p in &h.parents {
            need(config.hosts.contains_key(p), format!("parent {p}"));
        }
        for g in &h.contact_groups {
            need(config.contactgroups.contains_key(g), format!("group {g}"));
        }
        if let Some(c) = &h.check_command {
            need(config.commands.contains_key(&c.name), format!("command {}", c.name));
        }
        need(period(&h.check_period), format!("period {}", h.check_period));
        need(period(&h.notification_period), format!("period {}", h.notification_period));
    }
    for ((host, _), s) in &config.services {
        need(config.hosts.contains_key(host), format!("host {host}"));
        need(config.commands.contains_key(&s.check_command.name), format!("command {}", s.check_command.name));
        for g in &s.contact_groups {
            need(config.contactgroups.contains_key(g), format!("group {g}"));
        }
        need(period(&s.check_period), format!("period {}", s.check_period));
        need(period(&s.notification_period), format!("period {}", s.notification_period));
    }
    for hg in config.hostgroups.values() {
        for m in &hg.members {
            need(config.hosts.contains_key(m), format!("member {m}"));
        }
        for g in &hg.contact_groups {
            need(config.contactgroups.contains_key(g), format!("group {g}"));
        }
    }
    for cg in config.contactgroups.values() {
        for ch in &cg.channels {
            need(config.commands.contains_key(&ch.command), format!("channel {}", ch.command));
            if let Some(p) = &ch.period {
                need(period(p), format!("period {p}"));
            }
        }
    }
    missing
}

#[test]
fn clean_site_has_no_dangling_references() {
    assert!(dangling_references(&full_site()).is_empty());
}

#[test]
fn single_assets_follow_the_policy() {
    let policy = MonitoringPolicy::default();
    let web = AssetRecord {
        hostname: "www1".into(),
        address: "131.169.40.38".into(),
        host_class: HostClass::WebServer,
        owner_contact_group: "web-admins".into(),
    };
    let text = generate_from_assets(std::slice::from_ref(&web), &policy).unwrap();
    let (config, diags) = load_sources([("gen.cfg", text.as_str())]);
    assert!(diags.is_empty(), "{diags:?}");
    assert_eq!(config.hosts.len(), 1);
    let svcs: Vec<_> = config.services_on("www1").collect();
    assert_eq!(svcs.len(), 1);
    assert!(config.commands[&svcs[0].check_command.name].command_line.contains("http"));

    let farm = AssetRecord {
        hostname: "pc042".into(),
        address: "131.169.41.42".into(),
        host_class: HostClass::FarmPc,
        owner_contact_group: "farm".into(),
    };
    let text = generate_from_assets(&[farm], &policy).unwrap();
    let (config, diags) = load_sources([("gen.cfg", text.as_str())]);
    assert!(diags.is_empty(), "{diags:?}");
    assert_eq!(config.services.len(), 0);
    let cmd = config.hosts["pc042"].check_command.as_ref().unwrap();
    assert!(config.commands[&cmd.name].command_line.contains("ping"));

    let empty = generate_from_assets(&[], &policy).unwrap();
    let (blocks, diags) = parse_objects("gen.cfg", &empty);
    assert!(blocks.is_empty() && diags.is_empty());
    assert!(empty.starts_with('#'));
}

#[test]
fn duplicate_assets_are_refused() {
    let a = AssetRecord {
        hostname: "dup".into(),
        address: "10.0.0.1".into(),
        host_class: HostClass::Printer,
        owner_contact_group: "ops".into(),
    };
    assert!(generate_from_assets(&[a.clone(), a], &MonitoringPolicy::default()).is_err());
}

fn services_per_class(class: HostClass) -> usize {
    match class {
        HostClass::NetworkDevice | HostClass::FarmPc => 0,
        HostClass::Printer | HostClass::WebServer | HostClass::AfsServer => 1,
        HostClass::Mail => 2,
        HostClass::WorkgroupServer => 3,
    }
}

fn asset_list() -> impl Strategy<Value = Vec<AssetRecord>> {
    let class = proptest::sample::select(HostClass::ALL.to_vec());
    let group = proptest::sample::select(vec!["ops", "sgi-admins", "web-admins"]);
    proptest::collection::btree_map("[a-z][a-z0-9-]{0,10}", (class, group, any::<[u8; 2]>()), 0..40).prop_map(
        |m| {
            m.into_iter()
                .map(|(hostname, (class, group, ip))| AssetRecord {
                    hostname,
                    address: format!("10.1.{}.{}", ip[0], ip[1]),
                    host_class: class,
                    owner_contact_group: group.to_string(),
                })
                .collect()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_configs_always_validate(mut assets in asset_list(), seed in any::<u64>()) {
        // Input order must not matter.
        let n = assets.len().max(1);
        assets.rotate_left(seed as usize % n);
        let text = generate_from_assets(&assets, &MonitoringPolicy::default()).unwrap();
        let (config, diags) = load_sources([("gen.cfg", text.as_str())]);
        prop_assert!(diags.is_empty(), "{:?}", diags);
        prop_assert_eq!(config.hosts.len(), assets.len());
        let expected: usize = assets.iter().map(|a| services_per_class(a.host_class)).sum();
        prop_assert_eq!(config.services.len(), expected);
        prop_assert!(dangling_references(&config).is_empty());
        let mut sorted = assets.clone();
        sorted.sort_by(|a, b| a.hostname.cmp(&b.hostname));
        prop_assert_eq!(text, generate_from_assets(&sorted, &MonitoringPolicy::default()).unwrap());
    }

    #[test]
    fn resolution_ignores_block_order(order in Just((0..11usize).collect::<Vec<_>>()).prop_shuffle()) {
        let mut blocks = Vec::new();
        for (f, t) in [("t4", FILESERVER_TEMPLATE), ("t5", NIGHT_GROUP), ("hc", HOSTCHECK), ("site", SITE)] {
            blocks.extend(parse_objects(f, t).0);
        }
        prop_assert_eq!(blocks.len(), 11);
        let shuffled: Vec<_> = order.iter().map(|&i| blocks[i].clone()).collect();
        let (a, da) = resolve_templates(&blocks);
        let (b, db) = resolve_templates(&shuffled);
        prop_assert!(!has_errors(&da) && !has_errors(&db));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn print_reparse_fixpoint_on_generated(assets in asset_list()) {
        let text = generate_from_assets(&assets, &MonitoringPolicy::default()).unwrap();
        let (first, _) = load_sources([("gen.cfg", text.as_str())]);
        let printed = print_config(&first);
        let (second, diags) = load_sources([("printed.cfg", printed.as_str())]);
        prop_assert!(diags.is_empty(), "{:?}", diags);
        prop_assert_eq!(&first, &second);
        let hosts: BTreeSet<_> = assets.iter().map(|a| a.hostname.clone()).collect();
        prop_assert_eq!(hosts, second.hosts.keys().cloned().collect::<BTreeSet<_>>());
    }
}
