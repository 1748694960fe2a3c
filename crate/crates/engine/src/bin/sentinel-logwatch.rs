use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use sentinel_core::passive::{parse_rules, run_logwatch, LogWatchOptions, LogWatchStats};

/// Follows log files, matches new lines against rules and submits matches
/// to a gateway.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Rules file: `<state>;<service>;<host-or-$N>;<pattern>` per line.
    #[arg(long)]
    rules: PathBuf,
    /// Gateway address, `host:port`.
    #[arg(long)]
    gateway: String,
    #[arg(long)]
    token_file: Option<PathBuf>,
    /// Poll interval in milliseconds.
    #[arg(long, default_value_t = 250)]
    poll_ms: u64,
    #[arg(required = true)]
    files: Vec<PathBuf>,
}

async fn run(args: Args) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&args.rules)?;
    let rules = parse_rules(&text)?;
    let mut options = LogWatchOptions::new(args.gateway);
    options.token = match &args.token_file {
        Some(p) => sentinel_engine::read_token_file(p)?,
        None => None,
    };
    options.poll_interval = std::time::Duration::from_millis(args.poll_ms.max(1));
    tokio::select! {
        _ = run_logwatch(args.files, rules, options, Arc::new(LogWatchStats::default())) => {}
        _ = tokio::signal::ctrl_c() => {}
    }
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    sentinel_engine::init_logging();
    match run(Args::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sentinel-logwatch: {e:#}");
            ExitCode::FAILURE
        }
    }
}
