use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};
use previz_core::session::SystemClock;
use previz_core::{DirStore, ImageStore, MemoryStore};
use previz_service::cli::{self, RunOptions};
use previz_service::config::{BackendChoice, Config};
use previz_service::{stub, AppState, Engine};

#[derive(Parser)]
#[command(name = "previz", version, about = "Script-to-storyboard pre-visualization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a storyboard for one script and write manifest.json plus PNGs.
    Run {
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        presets: PathBuf,
        /// Director query as inline JSON or a path to a JSON file.
        #[arg(long)]
        query: String,
        #[arg(long)]
        out: PathBuf,
        /// Menu selections (JSON file).
        #[arg(long)]
        settings: Option<PathBuf>,
        #[arg(long, value_enum)]
        backend: Option<BackendChoice>,
        /// Generation server URL for the http backend.
        #[arg(long)]
        backend_url: Option<String>,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Serve the REST API.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        bind: Option<String>,
    },
    /// Serve the stub generation backend.
    StubBackend {
        #[arg(long, default_value = "127.0.0.1:9090")]
        bind: SocketAddr,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();

    match Cli::parse().command {
        Command::Run { script, catalog, presets, query, out, settings, backend, backend_url, k, seed, config } => {
            run(RunArgs { script, catalog, presets, query, out, settings, backend, backend_url, k, seed, config })
        }
        Command::Serve { config, bind } => report(serve(config, bind)),
        Command::StubBackend { bind } => report(stub_backend(bind)),
    }
}

fn report(result: anyhow::Result<()>) -> ExitCode {
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

struct RunArgs {
    script: PathBuf,
    catalog: PathBuf,
    presets: PathBuf,
    query: String,
    out: PathBuf,
    settings: Option<PathBuf>,
    backend: Option<BackendChoice>,
    backend_url: Option<String>,
    k: usize,
    seed: Option<u64>,
    config: Option<PathBuf>,
}

fn run(args: RunArgs) -> ExitCode {
    let setup = || -> anyhow::Result<_> {
        let mut config = Config::load(args.config.as_deref())?;
        config.override_backend_url(args.backend_url.clone());
        if let Some(kind) = args.backend {
            config.backend.kind = kind;
        }
        Ok((config.build_backend()?, config.weights()?, config.resolution()))
    };
    let (backend, weights, resolution) = match setup() {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::FAILURE;
        }
    };
    let options = RunOptions {
        script: args.script,
        catalog: args.catalog,
        presets: args.presets,
        query: args.query,
        settings: args.settings,
        out: args.out,
        k: args.k,
        seed: args.seed,
        weights,
        resolution,
    };
    match cli::run(&options, backend.as_ref()) {
        Ok(summary) => {
            println!(
                "session {} from group {}: {} frames, manifest {}",
                summary.session_id,
                summary.group_id,
                summary.frames,
                summary.manifest.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}: {}", e.code, e.message);
            ExitCode::from(e.code.exit_code())
        }
    }
}

fn serve(config_path: Option<PathBuf>, bind: Option<String>) -> anyhow::Result<()> {
    let config = Config::load(config_path.as_deref())?;
    let engine = Engine::load(&config.data.presets, &config.data.catalog, config.weights()?).map_err(|e| anyhow::anyhow!("{e}"))?;
    let backend = config.build_backend()?;
    let store: Arc<dyn ImageStore> = match &config.server.image_dir {
        Some(dir) => Arc::new(DirStore::open(dir)?),
        None => Arc::new(MemoryStore::new()),
    };
    let state = Arc::new(AppState::new(engine, backend, store, Arc::new(SystemClock), config.resolution(), config.retrieval.k));
    let addr = bind.unwrap_or_else(|| config.server.bind.clone());

    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
        tracing::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, previz_service::router(Arc::clone(&state)))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        anyhow::Ok(())
    })?;
    // The blocking HTTP client must be dropped outside the runtime.
    drop(runtime);
    drop(state);
    Ok(())
}

fn stub_backend(bind: SocketAddr) -> anyhow::Result<()> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let (addr, handle) = stub::serve(bind, Arc::default()).await?;
        tracing::info!("stub backend on {addr}");
        tokio::select! {
            _ = handle => {}
            _ = tokio::signal::ctrl_c() => {}
        }
        anyhow::Ok(())
    })
}
