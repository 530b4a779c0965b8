use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;

#[derive(Parser)]
#[command(name = "bridge-service", version, about = "Serve the design API and the calculator UI")]
struct Args {
    #[arg(long, env = "BRIDGE_HOST", default_value = "127.0.0.1")]
    host: String,
    #[arg(long, env = "BRIDGE_PORT", default_value_t = 8080)]
    port: u16,
    /// Directory of static UI files served at `/`.
    #[arg(long, env = "BRIDGE_STATIC_DIR")]
    static_dir: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let addr: SocketAddr = format!("{}:{}", args.host, args.port).parse().context("invalid --host/--port")?;
    let static_dir = args.static_dir.or_else(|| {
        let default = PathBuf::from("webui/dist");
        default.is_dir().then_some(default)
    });
    if let Some(dir) = &static_dir {
        eprintln!("serving static files from {}", dir.display());
    }
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    eprintln!("listening on http://{addr}");
    axum::serve(listener, bridge_service::router(static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .context("server failed")
}
