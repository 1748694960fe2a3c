use chrono::{Duration, TimeZone, Utc};
use proptest::prelude::*;
use sentinel_core::checkcore::{CheckOrigin, CheckStatus};
use sentinel_core::objconf::load_sources;
use sentinel_core::statemachine::{
    Acknowledgement, Downtime, EventKind, HostStatus, MonitorState, Observation, StateType, TransitionParams,
};
use sentinel_core::statestore::{
    decode_status, encode_status, load_retention, read_retention, read_status, write_retention, FaultPoint,
    StateTables, StatusSnapshot, StatusWriter, STATUS_FILE,
};
use sentinel_core::{ObjectRef, Timestamp};

fn ts() -> impl Strategy<Value = Timestamp> {
    (0i64..2_000_000_000, 0u32..1_000_000_000).prop_map(|(s, n)| Utc.timestamp_opt(s, n).unwrap())
}

fn text() -> impl Strategy<Value = String> {
    // Includes the characters the format has to escape.
    "[a-zA-Z0-9 =;,:\\\\\t\n\r%é]{0,24}"
}

fn state<S: Clone + std::fmt::Debug>(status: impl Strategy<Value = S> + Clone) -> impl Strategy<Value = MonitorState<S>> {
    let ack = proptest::option::of((text(), text(), ts()).prop_map(|(who, comment, at)| Acknowledgement { who, comment, at }));
    let downtimes = proptest::collection::vec(
        (ts(), 1i64..100_000, text(), text()).prop_map(|(start, len, who, comment)| Downtime {
            start,
            end: start + Duration::seconds(len),
            who,
            comment,
        }),
        0..3,
    );
    (
        (status.clone(), prop_oneof![Just(StateType::Soft), Just(StateType::Hard)], 1u32..10, status),
        (proptest::option::of(ts()), proptest::option::of(ts()), proptest::option::of(ts()), proptest::option::of(ts())),
        ack,
        downtimes,
        text(),
    )
        .prop_map(|((current, state_type, attempt, hard), (check, change, hard_change, notif), ack, mut dts, output)| {
            dts.sort_by_key(|d| (d.start, d.end));
            MonitorState {
                current_status: current,
                state_type,
                attempt,
                last_hard_status: hard,
                last_check: check,
                last_state_change: change,
                last_hard_change: hard_change,
                last_notification: notif,
                acknowledgement: ack,
                downtimes: dts,
                last_output: output,
            }
        })
}

fn name() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9_.-]{1,12}"
}

fn tables() -> impl Strategy<Value = StateTables> {
    let host_status = proptest::sample::select(HostStatus::ALL.to_vec());
    let svc_status = proptest::sample::select(CheckStatus::ALL.to_vec());
    (
        proptest::collection::btree_map(name(), state(host_status), 0..5),
        proptest::collection::btree_map((name(), "[a-zA-Z0-9 _;=-]{1,16}"), state(svc_status), 0..8),
    )
        .prop_map(|(hosts, services)| StateTables { hosts, services })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn status_round_trips(tables in tables(), at in ts()) {
        let snap = StatusSnapshot { generated_at: at, tables };
        prop_assert_eq!(decode_status(&encode_status(&snap)).unwrap(), snap);
    }

    #[test]
    fn retention_round_trips(tables in tables()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("retention.dat");
        write_retention(&tables, &path).unwrap();
        prop_assert_eq!(read_retention(&path).unwrap(), tables);
    }

    #[test]
    fn faulted_writes_never_corrupt_status(
        steps in proptest::collection::vec(
            (tables(), proptest::option::of(proptest::sample::select(vec![
                FaultPoint::AfterCreate, FaultPoint::MidWrite, FaultPoint::BeforeRename,
            ]))),
            1..6,
        ),
        start in ts(),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let mut writer = StatusWriter::new(dir.path());
        let mut last_good: Option<StatusSnapshot> = None;
        let mut last_generated = None;
        for (i, (tables, fault)) in steps.into_iter().enumerate() {
            // Deliberately out-of-order clocks on odd steps.
            let at = if i % 2 == 1 { start - Duration::seconds(5) } else { start + Duration::seconds(i as i64) };
            writer.fault = fault;
            let snap = StatusSnapshot { generated_at: at, tables };
            match writer.write(&snap) {
                Ok(written) => {
                    last_good = Some(StatusSnapshot { generated_at: written, ..snap });
                }
                Err(_) => prop_assert!(fault.is_some()),
            }
            match &last_good {
                Some(good) => {
                    let read = read_status(dir.path()).unwrap();
                    prop_assert_eq!(&read, good);
                    if let Some(prev) = last_generated {
                        prop_assert!(read.generated_at >= prev);
                    }
                    last_generated = Some(read.generated_at);
                }
                None => prop_assert!(!dir.path().join(STATUS_FILE).exists()),
            }
        }
    }
}

#[test]
fn five_entries_for_two_hosts_and_three_services() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = StateTables::default();
    for h in ["netra8", "route-40"] {
        t.hosts.insert(h.into(), MonitorState::new());
    }
    for s in ["fileserver", "AFS", "syslog"] {
        t.services.insert(("netra8".into(), s.into()), MonitorState::new());
    }
    let snap = StatusSnapshot {
        generated_at: Utc::now(),
        tables: t,
    };
    StatusWriter::new(dir.path()).write(&snap).unwrap();
    let read = read_status(dir.path()).unwrap();
    assert_eq!(read.tables.len(), 5);
    assert_eq!(read, snap);

    let empty = StatusSnapshot::default();
    let text = encode_status(&empty);
    assert_eq!(decode_status(&text).unwrap(), empty);
    assert!(!text.trim_end().contains("\n\n"));
}

const SITE: &str = "define host{
    host_name netra8
    address 131.169.40.109
    max_check_attempts 3
}
";

#[test]
fn retention_restores_hard_down_without_a_new_problem() {
    let (config, diags) = load_sources([("site.cfg", SITE)]);
    assert!(diags.is_empty(), "{diags:?}");
    let target = ObjectRef::host("netra8");
    let params = TransitionParams::from(&config.hosts["netra8"]);
    let t0 = Utc.with_ymd_and_hms(2003, 3, 19, 8, 0, 0).unwrap();
    let down = || Observation {
        status: HostStatus::Down,
        output: "PING CRITICAL - Packet loss = 100%".to_string(),
        origin: CheckOrigin::Active,
        host_unreachable: false,
    };

    let mut state = MonitorState::new();
    let mut problems = 0;
    for i in 0..3 {
        let ev = state.apply(&target, down(), &params, t0 + Duration::minutes(i)).unwrap();
        problems += ev.iter().filter(|e| e.kind == EventKind::Problem).count();
    }
    assert_eq!(problems, 1);
    state.acknowledge("oncall", "router replaced tomorrow", t0 + Duration::minutes(4)).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("retention.dat");
    let mut tables = StateTables::default();
    tables.hosts.insert("netra8".into(), state.clone());
    tables.hosts.insert("decommissioned".into(), MonitorState::new());
    write_retention(&tables, &path).unwrap();

    let load = load_retention(&path, &config);
    assert_eq!(load.dropped, 1);
    assert!(load.cold_start.is_none());
    let mut restored = load.tables.hosts["netra8"].clone();
    assert_eq!(restored, state);
    assert_eq!((restored.current_status, restored.state_type), (HostStatus::Down, StateType::Hard));
    assert!(restored.acknowledged());

    let ev = restored.apply(&target, down(), &params, t0 + Duration::minutes(10)).unwrap();
    assert!(ev.iter().all(|e| e.kind != EventKind::Problem), "{ev:?}");
    assert!(restored.acknowledged());
}

#[test]
fn missing_and_corrupt_retention_start_cold() {
    let (config, _) = load_sources([("site.cfg", SITE)]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("retention.dat");
    let load = load_retention(&path, &config);
    assert!(load.tables.is_empty() && load.cold_start.is_none());

    std::fs::write(&path, "this is not a retention file\n").unwrap();
    let load = load_retention(&path, &config);
    assert!(load.tables.is_empty());
    assert!(load.cold_start.is_some());

    let mut t = StateTables::default();
    t.hosts.insert("netra8".into(), MonitorState::new());
    write_retention(&t, &path).unwrap();
    let full = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, &full[..full.len() / 2]).unwrap();
    let load = load_retention(&path, &config);
    assert!(load.tables.is_empty());
    assert!(load.cold_start.is_some());
}
