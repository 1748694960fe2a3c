use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sentinel_core::objconf::{generate_from_assets, load_files, print_config, read_assets_csv, MonitoringPolicy};

/// Object configuration tools.
#[derive(Parser)]
#[command(version)]
struct Args {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Report diagnostics; exits 0 only when there are none.
    Lint {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Print the resolved configuration in canonical form.
    Print {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Generate host and service definitions from an asset inventory CSV
    /// (`hostname,address,host_class,contact_group`).
    Generate {
        #[arg(long)]
        assets: PathBuf,
        /// Output directory; the file written is `generated.cfg`.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(args: Args) -> anyhow::Result<bool> {
    match args.command {
        Cmd::Lint { files } => {
            let (_, diagnostics) = load_files(&files)?;
            for d in &diagnostics {
                println!("{d}");
            }
            Ok(diagnostics.is_empty())
        }
        Cmd::Print { files } => {
            let config = sentinel_engine::load_objects(&files)?;
            print!("{}", print_config(&config));
            Ok(true)
        }
        Cmd::Generate { assets, out } => {
            let file = std::fs::File::open(&assets)?;
            let records = read_assets_csv(file)?;
            let text = generate_from_assets(&records, &MonitoringPolicy::default())?;
            std::fs::create_dir_all(&out)?;
            let path = out.join("generated.cfg");
            std::fs::write(&path, text)?;
            println!("wrote {} hosts to {}", records.len(), path.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("sentinel-conf: {e:#}");
            ExitCode::from(2)
        }
    }
}
