use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use sentinel_engine::runtime::Engine;
use sentinel_engine::settings::EngineSettings;
use tracing::{error, info};

/// Central monitoring engine.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Main configuration file (`key=value` lines).
    config: PathBuf,
    /// Load and validate the configuration, then exit.
    #[arg(long)]
    check: bool,
}

async fn wait_for_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).expect("installing SIGTERM handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    let _ = tokio::signal::ctrl_c().await;
}

async fn run(args: Args) -> anyhow::Result<()> {
    let settings = EngineSettings::load(&args.config, std::env::vars())?;
    let config = sentinel_engine::load_objects(&settings.object_files)?;
    info!(hosts = config.hosts.len(), services = config.services.len(), "configuration loaded");
    if args.check {
        return Ok(());
    }
    let engine = Engine::start(settings, config, None).await?;
    if let Some(addr) = engine.gateway_addr {
        println!("gateway listening on {addr}");
    }
    if let Some(addr) = engine.api_addr {
        println!("api listening on {addr}");
    }
    wait_for_signal().await;
    info!("shutting down");
    engine.shutdown().await
}

#[tokio::main]
async fn main() -> ExitCode {
    sentinel_engine::init_logging();
    match run(Args::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e:#}");
            eprintln!("sentinel-engine: {e:#}");
            ExitCode::FAILURE
        }
    }
}
