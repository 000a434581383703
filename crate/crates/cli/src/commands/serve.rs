use std::net::SocketAddr;
use std::path::PathBuf;

use clap::Args;
use texvib_service::{serve, ServiceConfig};

use super::overlay;
use crate::error::{CliError, CliResult};
use crate::Command;

#[derive(Args, Debug)]
pub(crate) struct ServeArgs {
    #[arg(long)]
    bind: Option<SocketAddr>,
    /// Generator checkpoint.
    #[arg(long)]
    gan: Option<PathBuf>,
    /// Encoder checkpoint; without one `/generate-from-image` answers 503.
    #[arg(long)]
    encoder: Option<PathBuf>,
    #[arg(long)]
    griffin_lim_iters: Option<usize>,
    #[arg(long)]
    max_upload_bytes: Option<usize>,
    #[arg(long)]
    cors_allow_origin: Option<String>,
}

impl Command for ServeArgs {
    const NAME: &'static str = "serve";
    type Settings = ServiceConfig;

    fn apply(&self, s: &mut ServiceConfig) {
        overlay!(self, s; bind => bind, gan => gan, encoder => encoder, griffin_lim_iters => griffin_lim_iters,
            max_upload_bytes => max_upload_bytes, cors_allow_origin => cors_allow_origin);
    }

    fn execute(s: &ServiceConfig) -> CliResult<()> {
        let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::new("io", e.to_string()))?;
        rt.block_on(serve(s.clone(), async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        }))?;
        Ok(())
    }
}
