use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use sentinel_core::checkcore::{check_cluster, check_http, check_ping, check_tcp, CheckResult, CheckStatus, PingCommand};

/// Built-in probes as a standalone plugin: prints one line and exits 0
/// (OK), 1 (WARNING), 2 (CRITICAL) or 3 (UNKNOWN).
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Timeout in seconds.
    #[arg(long, short = 't', global = true, default_value_t = 10.0)]
    timeout: f64,
    #[command(subcommand)]
    probe: Probe,
}

#[derive(Subcommand)]
enum Probe {
    /// Connect to a TCP port, optionally expecting a banner prefix.
    Tcp {
        host: String,
        port: u16,
        #[arg(long)]
        expect: Option<String>,
    },
    /// Fetch a URL; 2xx/3xx is OK, 4xx WARNING, 5xx CRITICAL.
    Http { url: String },
    /// Ping a host once through the system ping command.
    Ping {
        host: String,
        /// Ping invocation with `$HOSTADDRESS$` and `$TIMEOUT$`.
        #[arg(long)]
        command: Option<String>,
    },
    /// Aggregate member states: CRITICAL when at least `critical` members
    /// are non-OK, WARNING when at least `warning` are.
    Cluster {
        #[arg(long, short = 'w')]
        warning: usize,
        #[arg(long, short = 'c')]
        critical: usize,
        /// Member states, e.g. OK CRITICAL or OK,CRITICAL.
        #[arg(required = true)]
        members: Vec<String>,
    },
}

async fn probe(args: Args) -> Result<CheckResult, String> {
    if !(args.timeout > 0.0 && args.timeout.is_finite()) {
        return Err("timeout must be positive".into());
    }
    let timeout = Duration::from_secs_f64(args.timeout);
    Ok(match args.probe {
        Probe::Tcp { host, port, expect } => check_tcp(&host, port, expect.as_deref(), timeout).await,
        Probe::Http { url } => check_http(&url, timeout).await,
        Probe::Ping { host, command } => {
            let ping = match command {
                Some(c) => PingCommand {
                    argv: shell_words::split(&c).map_err(|e| e.to_string())?,
                },
                None => PingCommand::default(),
            };
            check_ping(&host, timeout, &ping).await
        }
        Probe::Cluster {
            warning,
            critical,
            members,
        } => {
            let states = members
                .iter()
                .flat_map(|m| m.split(','))
                .filter(|m| !m.trim().is_empty())
                .map(|m| m.trim().parse::<CheckStatus>())
                .collect::<Result<Vec<_>, _>>()?;
            check_cluster(&states, warning, critical)
        }
    })
}

#[tokio::main(flavor = "current_thread")]
async fn main() -> ExitCode {
    match probe(Args::parse()).await {
        Ok(r) => {
            println!("{}", r.output);
            ExitCode::from(r.status.code())
        }
        Err(e) => {
            println!("UNKNOWN - {e}");
            ExitCode::from(CheckStatus::Unknown.code())
        }
    }
}
