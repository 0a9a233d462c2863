use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;

use clap::Parser;

use retarget_service::{router, ServiceConfig};

/// Local HTTP service for the labeling studio.
#[derive(Debug, Parser)]
#[command(name = "retarget-service", version)]
struct Args {
    #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    host: IpAddr,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Directory with the built UI bundle (must contain index.html).
    #[arg(long)]
    ui_dir: Option<PathBuf>,
    /// Uploaded images kept in memory.
    #[arg(long, default_value_t = 16)]
    max_sessions: usize,
    /// Upload limit in MiB.
    #[arg(long, default_value_t = 32)]
    max_upload_mb: usize,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    let args = Args::parse();
    let config = ServiceConfig { max_sessions: args.max_sessions, max_upload_bytes: args.max_upload_mb << 20, ui_dir: args.ui_dir };
    let addr = SocketAddr::new(args.host, args.port);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(&config)).await
}
