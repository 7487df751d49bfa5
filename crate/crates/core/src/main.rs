use std::process::ExitCode;

#[tokio::main]
async fn main() -> ExitCode {
    vlmc::cli::main().await
}
