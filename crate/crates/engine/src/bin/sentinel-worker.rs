use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::Parser;
use sentinel_core::checkcore::{CommandExecutor, PingCommand, SchedulerOptions, DEFAULT_MAX_CONCURRENT};
use sentinel_core::Zone;
use sentinel_engine::worker::{run_worker, shard_plan, Shard, WorkerOptions};

/// Runs a share of the configured checks and reports the results to a
/// central gateway.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Gateway address, `host:port`.
    #[arg(long)]
    gateway: String,
    #[arg(long)]
    token_file: Option<PathBuf>,
    /// This worker's shard, `i/n`.
    #[arg(long, default_value = "0/1")]
    shard: Shard,
    /// Exit after this many acknowledged submissions and print the count.
    #[arg(long)]
    limit: Option<u64>,
    /// Seconds per interval unit.
    #[arg(long, default_value_t = 60.0)]
    interval_length: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_CONCURRENT)]
    max_concurrent: usize,
    /// Per-check timeout in seconds.
    #[arg(long, default_value_t = 10.0)]
    check_timeout: f64,
    /// Timezone for check periods: IANA name or `ABBR=+HH:MM`.
    #[arg(long, default_value = "UTC")]
    tz: Zone,
    /// Ping invocation, e.g. "ping -n -c 1 -W $TIMEOUT$ $HOSTADDRESS$".
    #[arg(long)]
    ping_command: Option<String>,
    /// Object configuration files.
    #[arg(required = true)]
    objects: Vec<PathBuf>,
}

fn positive(name: &str, secs: f64) -> anyhow::Result<Duration> {
    if !(secs > 0.0 && secs.is_finite()) {
        anyhow::bail!("--{name} must be positive");
    }
    Ok(Duration::from_secs_f64(secs))
}

async fn run(args: Args) -> anyhow::Result<()> {
    let config = sentinel_engine::load_objects(&args.objects)?;
    let (plan, errors) = shard_plan(&config, args.shard, positive("check-timeout", args.check_timeout)?);
    for e in errors {
        eprintln!("skipped: {e}");
    }
    let ping = match &args.ping_command {
        Some(c) => PingCommand {
            argv: shell_words::split(c)?,
        },
        None => PingCommand::default(),
    };
    let mut options = WorkerOptions::new(args.gateway);
    options.token = match &args.token_file {
        Some(p) => sentinel_engine::read_token_file(p)?,
        None => None,
    };
    options.limit = args.limit;
    options.scheduler = SchedulerOptions {
        interval_length: positive("interval-length", args.interval_length)?,
        max_concurrent: args.max_concurrent,
        stagger: true,
        zone: args.tz,
    };
    let report = tokio::select! {
        r = run_worker(plan, options, Arc::new(CommandExecutor { ping })) => r,
        _ = tokio::signal::ctrl_c() => return Ok(()),
    };
    println!("submitted {} rejected {}", report.submitted, report.rejected);
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    sentinel_engine::init_logging();
    match run(Args::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sentinel-worker: {e:#}");
            ExitCode::FAILURE
        }
    }
}
