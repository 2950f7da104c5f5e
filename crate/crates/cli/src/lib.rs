//! Command-line surface of the `dpcount` tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod eval;

use clap::{Parser, Subcommand};

pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "dpcount", version, about = "Differentially private substring, document and q-gram counting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a private counting structure for all patterns up to length ℓ.
    Build(commands::BuildArgs),
    /// Noisy count of a pattern (0 if it has no stored node).
    Query(commands::QueryArgs),
    /// Stored patterns with noisy count at least tau.
    Mine(commands::MineArgs),
    /// Build private counts of all q-grams of one length.
    QgramBuild(commands::QGramBuildArgs),
    /// Private counts for every node of a rooted tree.
    TreeCount(commands::TreeCountArgs),
    /// Compare noisy answers with exact counts over seeded trials.
    Eval(eval::EvalArgs),
}

/// Runs a parsed command, writing results to standard output.
pub fn run(cli: &Cli, env_seed: Option<&str>) -> Result<()> {
    match &cli.command {
        Command::Build(a) => finish_build(commands::cmd_build(&a.resolve(env_seed)?)?),
        Command::QgramBuild(a) => finish_build(commands::cmd_build(&a.resolve(env_seed)?)?),
        Command::Query(a) => {
            emit(&commands::cmd_query(a)?);
            Ok(())
        }
        Command::Mine(a) => {
            emit(&commands::cmd_mine(a)?);
            Ok(())
        }
        Command::TreeCount(a) => {
            emit(&commands::cmd_tree_count(a, env_seed)?);
            Ok(())
        }
        Command::Eval(a) if a.crossover => eval::write_report(a.output.as_ref(), &eval::cmd_crossover(a, env_seed)?),
        Command::Eval(a) => {
            let report = eval::cmd_eval(a, env_seed)?;
            eval::write_report(a.output.as_ref(), &report.to_tsv(!a.no_rows))
        }
    }
}

fn finish_build(outcome: commands::BuildOutcome) -> Result<()> {
    emit(&format!(
        "{}\n",
        serde_json::to_string_pretty(&outcome.summary).expect("summary serializes")
    ));
    match outcome.abort {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Writes to standard output. A closed pipe (e.g. `| head`) ends output
/// quietly instead of panicking.
pub fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if out.write_all(text.as_bytes()).and_then(|_| out.flush()).is_err() {
        std::process::exit(0);
    }
}
