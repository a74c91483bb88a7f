use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use ubi_core::domain::ProfileRegistry;
use ubi_core::world::{persist, World, WorldConfig};
use ubi_server::{router, AppState};

/// Serves the platform API and the simulated aggregator over HTTP.
#[derive(Debug, Parser)]
#[command(name = "ubi-server", version)]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// World directory; reopened when it exists, created otherwise.
    #[arg(long, env = "UBI_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// World config (JSON) for a new world.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Presets for a new world without a config file.
    #[arg(long = "preset", default_values_t = ["bmw-x5".to_string(), "mercedes-clean".to_string(), "peugeot-208".to_string()])]
    presets: Vec<String>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

fn build_world(args: &Args) -> anyhow::Result<World> {
    let registry = ProfileRegistry::builtin();
    if let Some(dir) = &args.data_dir {
        if persist::exists(dir) {
            return Ok(World::open_in(dir, registry)?);
        }
    }
    let config = match &args.config {
        Some(path) => {
            let raw = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&raw).with_context(|| format!("parsing {}", path.display()))?
        }
        None => {
            let names: Vec<&str> = args.presets.iter().map(String::as_str).collect();
            WorldConfig::from_presets(args.seed, ubi_core::time::default_epoch(), &names)?
        }
    };
    let mut world = match &args.data_dir {
        Some(dir) => World::create_in(dir, config, registry)?,
        None => World::in_memory_with(config)?,
    };
    let names: Vec<String> =
        world.config().simulation.vehicles.iter().map(|v| v.vin.to_string()).collect();
    for vin in names {
        world.enroll_simulated(&vin.parse()?)?;
    }
    Ok(world)
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let args = Args::parse();
    let world = build_world(&args)?;
    let state = AppState::new(world);
    let listener = tokio::net::TcpListener::bind(args.addr).await?;
    tracing::info!(addr = %args.addr, "listening");
    axum::serve(listener, router(state.clone()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    if let Some(dir) = &args.data_dir {
        state.lock().save_to(dir)?;
    }
    Ok(())
}
