use std::io::Write;

use cfcache::cli::{self, Cli, CliError, THREADS_ENV};
use clap::Parser;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            std::process::exit(e.exit_code());
        }
    };

    if let Some(threads) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        if threads > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
        }
    }

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result = cli::execute(&cli.command, &mut out).and_then(|()| {
        out.flush().map_err(|e| CliError::Runtime(e.to_string()))
    });
    if let Err(e) = result {
        eprintln!("cache-sim: {e}");
        std::process::exit(e.exit_code());
    }
}
