//! Runtime of the sentinel monitoring engine: the state thread, the HTTP
//! API, remote workers and the command-line tools built on them.

pub mod api;
pub mod runtime;
pub mod settings;
pub mod state;
pub mod worker;

/// Logs to stderr, filtered by `RUST_LOG` (default `info`).
pub fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

/// Reads a token file, trimming whitespace. An empty file means no token.
pub fn read_token_file(path: &std::path::Path) -> anyhow::Result<Option<String>> {
    use anyhow::Context;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading token file {}", path.display()))?;
    let token = text.trim();
    Ok((!token.is_empty()).then(|| token.to_string()))
}

/// Loads object files, printing diagnostics to stderr. Fails if any
/// diagnostic is an error.
pub fn load_objects(paths: &[std::path::PathBuf]) -> anyhow::Result<sentinel_core::objconf::ResolvedConfig> {
    let (config, diagnostics) = sentinel_core::objconf::load_files(paths)?;
    for d in &diagnostics {
        eprintln!("{d}");
    }
    if sentinel_core::objconf::has_errors(&diagnostics) {
        anyhow::bail!("object configuration has errors");
    }
    Ok(config)
}
