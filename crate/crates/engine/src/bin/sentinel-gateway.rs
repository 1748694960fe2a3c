use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use sentinel_core::passive::{run_gateway, GatewayOptions, GatewayStats};
use tokio::net::TcpListener;
use tokio::sync::mpsc;

/// Standalone result gateway: accepts passive result lines over TCP and
/// writes every accepted line to stdout.
#[derive(Parser)]
#[command(version)]
struct Args {
    #[arg(long)]
    listen: SocketAddr,
    #[arg(long)]
    token_file: Option<PathBuf>,
}

async fn run(args: Args) -> anyhow::Result<()> {
    let token = match &args.token_file {
        Some(p) => sentinel_engine::read_token_file(p)?,
        None => None,
    };
    let listener = TcpListener::bind(args.listen).await?;
    eprintln!("gateway listening on {}", listener.local_addr()?);
    let (tx, mut rx) = mpsc::channel(4096);
    let server = tokio::spawn(run_gateway(
        listener,
        GatewayOptions { token },
        tx,
        Arc::new(GatewayStats::default()),
    ));
    let mut out = std::io::stdout().lock();
    loop {
        tokio::select! {
            s = rx.recv() => match s {
                Some(s) => {
                    writeln!(out, "{}", s.line)?;
                    out.flush()?;
                }
                None => break,
            },
            _ = tokio::signal::ctrl_c() => break,
        }
    }
    server.abort();
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    sentinel_engine::init_logging();
    match run(Args::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sentinel-gateway: {e:#}");
            ExitCode::FAILURE
        }
    }
}
