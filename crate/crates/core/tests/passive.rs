use std::collections::BTreeMap;
use std::io::Write;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::Duration;

use proptest::prelude::*;
use sentinel_core::checkcore::CheckStatus;
use sentinel_core::passive::{
    match_line, parse_rules, run_gateway, run_logwatch, GatewayClient, GatewayOptions, GatewayStats,
    LogWatchOptions, LogWatchStats, PassiveResultLine, Submission, REPLY_AUTH, REPLY_OK, REPLY_PARSE,
};
use tokio::net::TcpListener;
use tokio::sync::mpsc;

const T: Duration = Duration::from_secs(5);

async fn gateway(token: Option<&str>) -> (SocketAddr, mpsc::Receiver<Submission>, Arc<GatewayStats>) {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel(16);
    let stats = Arc::new(GatewayStats::default());
    let options = GatewayOptions {
        token: token.map(str::to_string),
    };
    tokio::spawn(run_gateway(listener, options, tx, stats.clone()));
    (addr, rx, stats)
}

#[test]
fn sample_service_line_is_bit_exact() {
    let line = PassiveResultLine::service(1048057000, "netra8", "fileserver", 2, "Connection refused by host");
    assert_eq!(
        line.encode(),
        "[1048057000] PROCESS_SERVICE_CHECK_RESULT;netra8;fileserver;2;Connection refused by host\n"
    );
    let host = PassiveResultLine::decode("[0] PROCESS_HOST_CHECK_RESULT;h1;0;UP").unwrap();
    assert!(host.is_host());
    assert_eq!((host.code, host.host.as_str(), host.output.as_str()), (0, "h1", "UP"));
    let semis = PassiveResultLine::decode("[5] PROCESS_SERVICE_CHECK_RESULT;h;s;1;a;b;c").unwrap();
    assert_eq!(semis.output, "a;b;c");
    for bad in [
        "hello",
        "[x] PROCESS_HOST_CHECK_RESULT;h;0;UP",
        "[1] PROCESS_HOST_CHECK_RESULT;h;2;UP",
        "[1] PROCESS_SERVICE_CHECK_RESULT;h;s;4;x",
        "[1] PROCESS_SERVICE_CHECK_RESULT;h;s",
        "[1] SOMETHING_ELSE;h;0;x",
    ] {
        assert!(PassiveResultLine::decode(bad).is_err(), "{bad}");
    }
}

fn field() -> impl Strategy<Value = String> {
    "[A-Za-z0-9_.-][A-Za-z0-9 _.-]{0,15}".prop_map(|s| s.trim_end().to_string())
        .prop_filter("non-empty", |s| !s.is_empty())
}

fn record() -> impl Strategy<Value = PassiveResultLine> {
    let output = "[^\t\r\n]{0,60}";
    prop_oneof![
        (any::<u32>(), field(), field(), 0u8..=3, output)
            .prop_map(|(t, h, s, c, o)| PassiveResultLine::service(i64::from(t), h, s, c, o)),
        (any::<u32>(), field(), 0u8..=1, output).prop_map(|(t, h, c, o)| PassiveResultLine::host(i64::from(t), h, c, o)),
    ]
}

proptest! {
    #[test]
    fn decode_inverts_encode(r in record()) {
        let text = r.encode();
        prop_assert!(text.ends_with('\n'));
        prop_assert!(!text[..text.len() - 1].contains(['\n', '\r']));
        prop_assert_eq!(PassiveResultLine::decode(&text).unwrap(), r);
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn two_clients_lose_nothing() {
    let (addr, mut rx, stats) = gateway(None).await;
    let collector = tokio::spawn(async move {
        let mut got = Vec::new();
        while got.len() < 200 {
            got.push(rx.recv().await.unwrap());
        }
        (got, rx)
    });
    let clients: Vec<_> = ["alpha", "beta"]
        .into_iter()
        .map(|name| {
            tokio::spawn(async move {
                let mut c = GatewayClient::connect(addr, None, T).await.unwrap();
                let mut acks = 0;
                for i in 0..100 {
                    let line = PassiveResultLine::service(i, name, "seq", 0, format!("{i}"));
                    c.submit(&line).await.unwrap();
                    acks += 1;
                }
                acks
            })
        })
        .collect();
    let mut acks = 0;
    for c in clients {
        acks += c.await.unwrap();
    }
    let (got, mut rx) = collector.await.unwrap();
    assert_eq!(acks, 200);
    assert_eq!(got.len(), 200);
    assert_eq!(stats.accepted.load(Ordering::Relaxed), 200);
    assert!(rx.try_recv().is_err());

    // Per-connection order is preserved.
    let mut by_host: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for s in got {
        by_host.entry(s.line.host.clone()).or_default().push(s.line.output.clone());
    }
    for outputs in by_host.values() {
        let expected: Vec<String> = (0..100).map(|i| i.to_string()).collect();
        assert_eq!(outputs, &expected);
    }
}

#[tokio::test]
async fn garbage_keeps_the_connection_and_auth_gates() {
    let (addr, mut rx, _) = gateway(Some("s3cret")).await;
    let mut anonymous = GatewayClient::connect(addr, None, T).await.unwrap();
    assert_eq!(
        anonymous.send_raw("[1] PROCESS_HOST_CHECK_RESULT;h;0;UP\n").await.unwrap(),
        REPLY_AUTH
    );

    let mut c = GatewayClient::connect(addr, Some("s3cret"), T).await.unwrap();
    assert_eq!(c.send_raw("hello\n").await.unwrap(), REPLY_PARSE);
    assert_eq!(c.send_raw("[1] PROCESS_HOST_CHECK_RESULT;h;0;UP\n").await.unwrap(), REPLY_OK);
    let got = rx.recv().await.unwrap();
    assert_eq!(got.line.host, "h");
    assert!(rx.try_recv().is_err());
}

#[test]
fn first_matching_rule_wins() {
    let rules = parse_rules(
        "# state;service;host;pattern\n\
         CRITICAL;syslog;$1;(\\S+) kernel: .*I/O error\n\
         WARNING;syslog;$1;(\\S+) kernel: .*error\n",
    )
    .unwrap();
    let r = match_line(&rules, "netra8 kernel: disk I/O error", 7).unwrap();
    assert_eq!((r.host.as_str(), r.service.as_deref(), r.code), ("netra8", Some("syslog"), 2));
    assert_eq!(r.received_at, 7);
    let r = match_line(&rules, "netra8 kernel: parity error", 7).unwrap();
    assert_eq!(r.code, CheckStatus::Warning.code());
    assert!(match_line(&rules, "netra8 sshd: accepted", 7).is_none());
}

fn append(path: &Path, text: &str) {
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path).unwrap();
    f.write_all(text.as_bytes()).unwrap();
}

async fn expect_submission(rx: &mut mpsc::Receiver<Submission>) -> PassiveResultLine {
    tokio::time::timeout(Duration::from_secs(2), rx.recv())
        .await
        .expect("submitted within 2 s")
        .unwrap()
        .line
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn log_watcher_follows_appends_and_rotation() {
    let (addr, mut rx, _) = gateway(None).await;
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("messages");
    append(&log, "netra8 kernel: disk I/O error (before start, ignored)\n");

    let rules = parse_rules("CRITICAL;syslog;$1;(\\S+) kernel: .*I/O error\n").unwrap();
    let mut options = LogWatchOptions::new(addr.to_string());
    options.poll_interval = Duration::from_millis(50);
    let stats = Arc::new(LogWatchStats::default());
    let watcher = tokio::spawn(run_logwatch(vec![log.clone()], rules, options, stats.clone()));
    tokio::time::sleep(Duration::from_millis(200)).await;

    append(&log, "netra8 kernel: disk I/O error\n");
    let r = expect_submission(&mut rx).await;
    assert_eq!((r.host.as_str(), r.code), ("netra8", 2));

    std::fs::rename(&log, dir.path().join("messages.1")).unwrap();
    append(&log, "test1 kernel: sd0 I/O error\n");
    assert_eq!(expect_submission(&mut rx).await.host, "test1");

    let noise: String = (0..1000).map(|i| format!("netra8 sshd[{i}]: session opened\n")).collect();
    append(&log, &noise);
    tokio::time::sleep(Duration::from_millis(500)).await;
    assert!(rx.try_recv().is_err());
    assert_eq!(stats.submitted.load(Ordering::Relaxed), 2);
    assert!(stats.lines.load(Ordering::Relaxed) >= 1002);
    watcher.abort();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn log_watcher_buffers_while_gateway_is_down() {
    // Reserve a port, then leave it closed until matches are pending.
    let probe = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = probe.local_addr().unwrap();
    drop(probe);

    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("app.log");
    append(&log, "");
    let rules = parse_rules("WARNING;app;web1;timeout\n").unwrap();
    let mut options = LogWatchOptions::new(addr.to_string());
    options.poll_interval = Duration::from_millis(50);
    options.connect_timeout = Duration::from_millis(200);
    let stats = Arc::new(LogWatchStats::default());
    let watcher = tokio::spawn(run_logwatch(vec![log.clone()], rules, options, stats.clone()));
    tokio::time::sleep(Duration::from_millis(200)).await;
    append(&log, "upstream timeout\nupstream timeout again\n");
    tokio::time::sleep(Duration::from_millis(300)).await;
    assert_eq!(stats.matched.load(Ordering::Relaxed), 2);
    assert_eq!(stats.submitted.load(Ordering::Relaxed), 0);

    let listener = TcpListener::bind(addr).await.unwrap();
    let (tx, mut rx) = mpsc::channel(16);
    tokio::spawn(run_gateway(listener, GatewayOptions::default(), tx, Arc::new(GatewayStats::default())));
    assert_eq!(expect_submission(&mut rx).await.output, "upstream timeout");
    assert_eq!(expect_submission(&mut rx).await.output, "upstream timeout again");
    watcher.abort();
}
