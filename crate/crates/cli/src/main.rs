use clap::Parser;
use dpcount_cli::config::SEED_ENV;
use dpcount_cli::{run, Cli};

fn main() {
    // Exit code 2 is reserved for the size abort, so usage errors exit with 1.
    let cli = Cli::try_parse().unwrap_or_else(|e| {
        let _ = e.print();
        std::process::exit(if e.use_stderr() { 1 } else { 0 });
    });
    let env_seed = std::env::var(SEED_ENV).ok();
    if let Err(e) = run(&cli, env_seed.as_deref()) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
