//! `dlif` command-line interface.

use std::process::ExitCode;

use clap::Parser;

mod commands;

use commands::Cli;

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("DLIF_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| anyhow::anyhow!("DLIF_THREADS must be a positive integer, got '{v}'"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    let res = init_threads().and_then(|_| commands::run(cli));
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
