use std::net::SocketAddr;
use std::process::ExitCode;
use std::sync::Arc;

use icls_server::app::{App, AppOptions};
use icls_server::config::Config;
use icls_server::db::Database;
use tracing_subscriber::EnvFilter;

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    match run().await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            tracing::error!("{e}");
            ExitCode::FAILURE
        }
    }
}

async fn run() -> Result<(), String> {
    let config = Config::from_env()?;
    let db = Database::open(&config.database_path)
        .map_err(|e| format!("opening {}: {e}", config.database_path.display()))?;
    let gateway = config.llm.build_gateway();
    tracing::info!(
        database = %config.database_path.display(),
        llm = gateway.provider_name(),
        model = %config.llm.gateway.model,
        "starting"
    );
    if config.admin_token.is_none() {
        tracing::warn!("ADMIN_BOOTSTRAP_TOKEN is unset; admin endpoints are disabled");
    }
    let options = AppOptions {
        admin_token: config.admin_token.clone(),
        pipeline_timeout: config.pipeline_timeout,
        ..AppOptions::default()
    };
    let app = App::with_system_clock(db, gateway, options).map_err(|e| e.to_string())?;
    let addr = SocketAddr::from(([0, 0, 0, 0], config.port));
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| format!("binding {addr}: {e}"))?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, icls_server::router(Arc::new(app)))
        .with_graceful_shutdown(shutdown_signal())
        .await
        .map_err(|e| e.to_string())
}

async fn shutdown_signal() {
    let interrupt = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut sigterm) => {
                sigterm.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = interrupt => {}
        _ = terminate => {}
    }
    tracing::info!("shutting down");
}
